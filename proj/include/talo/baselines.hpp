#pragma once

#include <vector>

#include "talo/geometry.hpp"

namespace talo {

/// 15-DOF projective transform of 3-space, determinant normalized to +1.
struct Sl4Transform {
    Mat4 matrix = Mat4::Identity();
};

/// Least-squares Sim(3) on index-matched correspondences (dst ~ s R src + t).
/// with_scale off fixes scale to 1 for metric-scale backbones.
Sim3 sim3_point_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                      bool with_scale = true);

/// Direct linear transform for the projective map dst ~ H * homog(src),
/// with centroid/scale normalization of both sides. Needs >= 6 points in
/// general position.
Sl4Transform sl4_point_align(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

struct Sl4Point {
    Vec3 point = Vec3::Zero();
    bool valid = true; // false when the homogeneous divisor vanishes
};

std::vector<Sl4Point> apply_sl4(const Sl4Transform& h, const std::vector<Vec3>& points);
Sl4Point apply_sl4_one(const Sl4Transform& h, const Vec3& p);

/// RMS transfer residual of a fitted map over correspondences.
double sim3_residual_rms(const Sim3& t, const std::vector<Vec3>& src,
                         const std::vector<Vec3>& dst);
double sl4_residual_rms(const Sl4Transform& h, const std::vector<Vec3>& src,
                        const std::vector<Vec3>& dst);

} // namespace talo
