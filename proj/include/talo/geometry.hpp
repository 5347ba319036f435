#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <vector>

#include "talo/error.hpp"

namespace talo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Rigid transform. Maps points from its source frame into its target frame:
/// x_target = rotation * x_source + translation.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    Pose inverse() const {
        Pose out;
        out.rotation = rotation.transpose();
        out.translation = -(out.rotation * translation);
        return out;
    }

    /// Composition: (a * b).apply(x) == a.apply(b.apply(x)).
    Pose operator*(const Pose& rhs) const {
        Pose out;
        out.rotation = rotation * rhs.rotation;
        out.translation = rotation * rhs.translation + translation;
        return out;
    }

    Mat4 matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }

    static Pose from_matrix(const Mat4& m) {
        Pose p;
        p.rotation = m.topLeftCorner<3, 3>();
        p.translation = m.topRightCorner<3, 1>();
        return p;
    }

    bool is_valid_rotation(double tol = 1e-9) const;
};

/// Pinhole camera intrinsics.
struct Intrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    bool valid() const {
        return fx > 0 && fy > 0 && width > 0 && height > 0 &&
               cx > 0 && cx < width && cy > 0 && cy < height;
    }
};

/// Similarity transform: x -> scale * rotation * x + translation.
struct Sim3 {
    double scale = 1.0;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    Vec3 apply(const Vec3& p) const {
        return scale * (rotation * p) + translation;
    }
};

struct ProjectionResult {
    Vec2 pixel = Vec2::Zero();
    double depth = 0.0;
    bool behind_camera = false; // depth <= 1e-9
};

/// Perspective projection of a world point into a camera.
/// `pose` maps camera frame to world frame; no bounds clipping.
ProjectionResult project(const Vec3& point, const Pose& pose, const Intrinsics& intr);

/// Inverse of project: lift a pixel at the given depth back to the world frame.
Vec3 unproject(const Vec2& pixel, double depth, const Pose& pose, const Intrinsics& intr);

/// Nearest rotation matrix to an arbitrary 3x3 matrix (Frobenius norm),
/// via SVD with determinant sign correction. Throws on a rank-deficient input.
Mat3 project_to_so3(const Mat3& m);

/// Rotation minimizing the summed squared Frobenius distance to the inputs.
Mat3 chordal_rotation_average(const std::vector<Mat3>& rotations);

double chordal_cost(const Mat3& r, const std::vector<Mat3>& rotations);

/// Least-squares similarity (or rigid, when with_scale is false) transform
/// such that dst_i ~= s * R * src_i + t. Requires N >= 3 non-collinear points.
Sim3 umeyama_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                   bool with_scale = true);

/// Angle of a rotation matrix in radians, in [0, pi].
double rotation_angle(const Mat3& r);

Mat3 rot_x(double radians);
Mat3 rot_y(double radians);
Mat3 rot_z(double radians);

} // namespace talo
