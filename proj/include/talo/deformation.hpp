#pragma once

#include <filesystem>
#include <vector>

#include "talo/geometry.hpp"

namespace talo {

struct SmoothingParams {
    int neighbor_count = 32; // Q
    double bandwidth = 0.0;  // sigma; <= 0 means auto (median Q-th NN distance)
};

/// Fitted deformation F(x) = A x + b + sum_i W_i * |x - sources_i|.
struct TpsModel {
    Mat3 affine = Mat3::Identity();
    Vec3 offset = Vec3::Zero();
    Eigen::MatrixXd weights; // P x 3
    Eigen::MatrixXd sources; // P x 3
    double lambda = 0.0;
    bool condition_warning = false; // system condition estimate above 1e12

    bool is_identity() const {
        return weights.rows() == 0 && affine.isIdentity(0.0) && offset.isZero(0.0);
    }
};

/// MAD-filtered mean: per-coordinate median / MAD gate at 3 * 1.4826 * MAD,
/// mean of survivors; falls back to the componentwise median when the gate
/// rejects everything.
Vec3 aggregate_canonical(const std::vector<Vec3>& observations);

/// Gaussian-weighted averaging of displacements (canonical - points) over the
/// Q nearest neighbors (self included). Returns the smoothed targets
/// points_i + sum_j w_ij (canonical_j - points_j).
std::vector<Vec3> smooth_displacements(const std::vector<Vec3>& points,
                                       const std::vector<Vec3>& canonical,
                                       const SmoothingParams& params);

/// Regularized 3D thin-plate-spline fit with biharmonic kernel phi(r) = r.
/// Falls back to best-fit affine (or rigid) with zero kernel weights when
/// P < 5 or the sources are affinely degenerate.
TpsModel tps_fit(const std::vector<Vec3>& sources, const std::vector<Vec3>& targets,
                 double lambda);

std::vector<Vec3> tps_apply(const TpsModel& model, const std::vector<Vec3>& points);
Vec3 tps_apply_one(const TpsModel& model, const Vec3& p);

/// In-place warp of a packed xyz array (3N doubles).
void tps_apply_packed(const TpsModel& model, std::vector<double>& xyz);

void save_tps(const TpsModel& model, const std::filesystem::path& path);
TpsModel load_tps(const std::filesystem::path& path);

namespace reference {

/// Literal double-loop evaluation of the smoothing formulas; test oracle.
std::vector<Vec3> smooth_displacements(const std::vector<Vec3>& points,
                                       const std::vector<Vec3>& canonical,
                                       const SmoothingParams& params);

/// Straightforward serial TPS evaluation; test oracle for the parallel apply.
std::vector<Vec3> tps_apply(const TpsModel& model, const std::vector<Vec3>& points);

} // namespace reference

} // namespace talo
