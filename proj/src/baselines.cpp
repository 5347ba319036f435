#include "talo/baselines.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>

namespace talo {

Sim3 sim3_point_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                      bool with_scale) {
    return umeyama_align(src, dst, with_scale);
}

namespace {

struct Normalization {
    Vec3 centroid = Vec3::Zero();
    double scale = 1.0;

    Mat4 matrix() const {
        Mat4 t = Mat4::Identity();
        t(0, 0) = t(1, 1) = t(2, 2) = scale;
        t.topRightCorner<3, 1>() = -scale * centroid;
        return t;
    }
    Mat4 inverse_matrix() const {
        Mat4 t = Mat4::Identity();
        t(0, 0) = t(1, 1) = t(2, 2) = 1.0 / scale;
        t.topRightCorner<3, 1>() = centroid;
        return t;
    }
};

// Hartley-style normalization: centroid to origin, RMS radius to sqrt(3).
Normalization normalize(const std::vector<Vec3>& pts) {
    Normalization n;
    for (const Vec3& p : pts) n.centroid += p;
    n.centroid /= static_cast<double>(pts.size());
    double rms = 0;
    for (const Vec3& p : pts) rms += (p - n.centroid).squaredNorm();
    rms = std::sqrt(rms / static_cast<double>(pts.size()));
    n.scale = (rms > 1e-15) ? std::sqrt(3.0) / rms : 1.0;
    return n;
}

} // namespace

Sl4Transform sl4_point_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
    if (src.size() != dst.size()) {
        throw Error(ErrorKind::InvalidArgument, "sl4_point_align: size mismatch");
    }
    const size_t n = src.size();
    if (n < 6) {
        throw Error(ErrorKind::InsufficientPoints, "sl4_point_align: need >= 6 points");
    }

    const Normalization ns = normalize(src);
    const Normalization nd = normalize(dst);

    // Three cross-product-style constraints per correspondence:
    // dst_w * (H_row_i . x) - dst_i * (H_row_3 . x) = 0 for i = 0, 1, 2,
    // in the 16 row-major unknowns of H.
    Eigen::MatrixXd design = Eigen::MatrixXd::Zero(3 * static_cast<long>(n), 16);
    for (size_t i = 0; i < n; ++i) {
        const Vec3 s = ns.scale * (src[i] - ns.centroid);
        const Vec3 d = nd.scale * (dst[i] - nd.centroid);
        const Eigen::Vector4d x(s.x(), s.y(), s.z(), 1.0);
        for (int row = 0; row < 3; ++row) {
            const long r = 3 * static_cast<long>(i) + row;
            design.block<1, 4>(r, 4 * row) = x.transpose();
            design.block<1, 4>(r, 12) = -d(row) * x.transpose();
        }
    }

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinV);
    const Eigen::VectorXd sv = svd.singularValues();
    // Trailing-spectrum gap gate: a second near-null direction means the
    // correspondences do not pin the map down.
    if (sv(14) < 1e-10 * std::max(1.0, sv(0))) {
        throw Error(ErrorKind::DegenerateConfiguration,
                    "sl4_point_align: degenerate correspondence configuration");
    }

    Mat4 h_norm;
    const Eigen::VectorXd v = svd.matrixV().col(15);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) h_norm(r, c) = v(4 * r + c);

    Mat4 h = nd.inverse_matrix() * h_norm * ns.matrix();

    double det = h.determinant();
    if (std::abs(det) < 1e-30) {
        throw Error(ErrorKind::DegenerateConfiguration, "sl4_point_align: singular estimate");
    }
    if (det < 0) {
        h = -h;
        det = h.determinant();
    }
    if (det < 0) {
        throw Error(ErrorKind::DegenerateConfiguration,
                    "sl4_point_align: orientation-reversing estimate");
    }
    Sl4Transform out;
    out.matrix = h / std::pow(det, 0.25);
    return out;
}

Sl4Point apply_sl4_one(const Sl4Transform& h, const Vec3& p) {
    const Eigen::Vector4d y = h.matrix * Eigen::Vector4d(p.x(), p.y(), p.z(), 1.0);
    Sl4Point out;
    if (std::abs(y(3)) < 1e-9) {
        out.valid = false;
        return out;
    }
    out.point = y.head<3>() / y(3);
    return out;
}

std::vector<Sl4Point> apply_sl4(const Sl4Transform& h, const std::vector<Vec3>& points) {
    std::vector<Sl4Point> out(points.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(points.size()); ++i) {
        out[static_cast<size_t>(i)] = apply_sl4_one(h, points[static_cast<size_t>(i)]);
    }
    return out;
}

double sim3_residual_rms(const Sim3& t, const std::vector<Vec3>& src,
                         const std::vector<Vec3>& dst) {
    double acc = 0;
    for (size_t i = 0; i < src.size(); ++i) {
        acc += (dst[i] - t.apply(src[i])).squaredNorm();
    }
    return std::sqrt(acc / static_cast<double>(src.size()));
}

double sl4_residual_rms(const Sl4Transform& h, const std::vector<Vec3>& src,
                        const std::vector<Vec3>& dst) {
    double acc = 0;
    size_t n = 0;
    for (size_t i = 0; i < src.size(); ++i) {
        const Sl4Point q = apply_sl4_one(h, src[i]);
        if (!q.valid) continue;
        acc += (dst[i] - q.point).squaredNorm();
        ++n;
    }
    if (n == 0) return std::numeric_limits<double>::infinity();
    return std::sqrt(acc / static_cast<double>(n));
}

} // namespace talo
