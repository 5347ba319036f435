#include "talo/geometry.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace talo {

bool Pose::is_valid_rotation(double tol) const {
    const Mat3 rtr = rotation.transpose() * rotation;
    return (rtr - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
}

ProjectionResult project(const Vec3& point, const Pose& pose, const Intrinsics& intr) {
    if (!intr.valid()) {
        throw Error(ErrorKind::InvalidArgument, "project: invalid intrinsics");
    }
    const Vec3 cam = pose.inverse().apply(point);
    ProjectionResult out;
    out.depth = cam.z();
    if (cam.z() <= 1e-9) {
        out.behind_camera = true;
        return out;
    }
    out.pixel.x() = intr.fx * cam.x() / cam.z() + intr.cx;
    out.pixel.y() = intr.fy * cam.y() / cam.z() + intr.cy;
    return out;
}

Vec3 unproject(const Vec2& pixel, double depth, const Pose& pose, const Intrinsics& intr) {
    if (!intr.valid()) {
        throw Error(ErrorKind::InvalidArgument, "unproject: invalid intrinsics");
    }
    if (!(depth > 0)) {
        throw Error(ErrorKind::InvalidDepth, "unproject: depth must be positive");
    }
    const Vec3 cam((pixel.x() - intr.cx) / intr.fx * depth,
                   (pixel.y() - intr.cy) / intr.fy * depth,
                   depth);
    return pose.apply(cam);
}

Mat3 project_to_so3(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues().minCoeff() < 1e-9 * std::max(1.0, svd.singularValues().maxCoeff())) {
        throw Error(ErrorKind::DegenerateAverage,
                    "project_to_so3: rank-deficient mean matrix");
    }
    Mat3 u = svd.matrixU();
    Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    if ((u * v.transpose()).determinant() < 0) {
        d(2, 2) = -1.0;
    }
    return u * d * v.transpose();
}

Mat3 chordal_rotation_average(const std::vector<Mat3>& rotations) {
    if (rotations.empty()) {
        throw Error(ErrorKind::EmptyInput, "chordal_rotation_average: empty input");
    }
    Mat3 mean = Mat3::Zero();
    for (const Mat3& r : rotations) {
        mean += r;
    }
    mean /= static_cast<double>(rotations.size());
    return project_to_so3(mean);
}

double chordal_cost(const Mat3& r, const std::vector<Mat3>& rotations) {
    double cost = 0;
    for (const Mat3& ri : rotations) {
        cost += (r - ri).squaredNorm();
    }
    return cost;
}

Sim3 umeyama_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                   bool with_scale) {
    if (src.size() != dst.size()) {
        throw Error(ErrorKind::InvalidArgument, "umeyama_align: size mismatch");
    }
    const size_t n = src.size();
    if (n < 3) {
        throw Error(ErrorKind::InsufficientPoints, "umeyama_align: need >= 3 points");
    }

    Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
    for (size_t i = 0; i < n; ++i) {
        mu_src += src[i];
        mu_dst += dst[i];
    }
    mu_src /= static_cast<double>(n);
    mu_dst /= static_cast<double>(n);

    Mat3 cov = Mat3::Zero();
    double var_src = 0;
    for (size_t i = 0; i < n; ++i) {
        const Vec3 ds = src[i] - mu_src;
        const Vec3 dd = dst[i] - mu_dst;
        cov += dd * ds.transpose();
        var_src += ds.squaredNorm();
    }
    cov /= static_cast<double>(n);
    var_src /= static_cast<double>(n);

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    // Rank < 2 means the source points are collinear (or coincident).
    if (sv(1) < 1e-12 * std::max(1.0, sv(0))) {
        throw Error(ErrorKind::DegenerateConfiguration,
                    "umeyama_align: collinear or coincident source points");
    }

    Mat3 d = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) {
        d(2, 2) = -1.0;
    }

    Sim3 out;
    out.rotation = svd.matrixU() * d * svd.matrixV().transpose();
    out.scale = with_scale ? (sv.dot(d.diagonal()) / var_src) : 1.0;
    out.translation = mu_dst - out.scale * (out.rotation * mu_src);
    return out;
}

double rotation_angle(const Mat3& r) {
    const double c = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c);
}

Mat3 rot_x(double a) {
    return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix();
}
Mat3 rot_y(double a) {
    return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
}
Mat3 rot_z(double a) {
    return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix();
}

} // namespace talo
