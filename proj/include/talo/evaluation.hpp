#pragma once

#include <memory>
#include <string>
#include <vector>

#include "talo/geometry.hpp"

namespace talo {

struct AlignmentReport {
    double ate_rmse = 0;     // m
    double rte_rmse = 0;     // m
    double rre_rmse = 0;     // deg
    double accuracy = 0;     // m
    double completeness = 0; // m
    double chamfer = 0;      // m
    double gt_length = 0;    // m
    bool failed = false;     // ate_rmse > 0.05 * gt_length

    std::string csv_header() const;
    std::string csv_row() const;
    std::string pretty() const;
};

/// Static KD-tree over 3D points; queries match brute force exactly.
class KdTree {
public:
    explicit KdTree(std::vector<Vec3> points);
    ~KdTree();
    KdTree(KdTree&&) noexcept;
    KdTree& operator=(KdTree&&) noexcept;

    /// Squared distance to the nearest stored point.
    double nearest_dist2(const Vec3& q) const;
    size_t size() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Umeyama alignment (with scale) over camera centers, then center RMSE.
/// The returned Sim3 maps predicted coordinates into the ground-truth frame.
std::pair<Sim3, double> align_and_ate(const std::vector<Pose>& pred_traj,
                                      const std::vector<Pose>& gt_traj);

/// Relative translation/rotation RMSE at the given frame gap. Predicted
/// relative translations are pre-scaled by the Umeyama scale.
std::pair<double, double> rte_rre(const std::vector<Pose>& pred_traj,
                                  const std::vector<Pose>& gt_traj, int frame_gap = 1);

struct GeometryMetrics {
    double accuracy = 0;
    double completeness = 0;
    double chamfer = 0;
};

/// Mean clamped nearest-neighbor distances, both directions.
GeometryMetrics geometry_metrics(const std::vector<Vec3>& pred_cloud,
                                 const std::vector<Vec3>& gt_cloud, double clamp = 10.0);

/// Sum of consecutive reference-camera center distances.
double trajectory_length(const std::vector<Pose>& traj);

namespace reference {

/// O(N*M) brute-force counterpart of geometry_metrics; test oracle.
GeometryMetrics geometry_metrics(const std::vector<Vec3>& pred_cloud,
                                 const std::vector<Vec3>& gt_cloud, double clamp = 10.0);

} // namespace reference

} // namespace talo
