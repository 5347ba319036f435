#pragma once

#include <vector>

#include "talo/geometry.hpp"
#include "talo/prediction.hpp"

namespace talo {

/// Placement of one submap in the global frame: points/translations are
/// multiplied by scale_correction before to_global is applied.
struct SubmapTransform {
    int submap_index = 0;
    double scale_correction = 1.0;
    Pose to_global;
};

/// Median over timestamp pairs (i < j) of the camera-center baseline ratio
/// ||prev_i - prev_j|| / ||curr_i - curr_j||. Multiplying the current
/// submap's geometry by the result matches its overlap baselines to the
/// previous submap's.
double estimate_inter_submap_scale(const std::vector<Pose>& prev_overlap_poses,
                                   const std::vector<Pose>& curr_overlap_poses);

/// Point-agnostic inter-submap transform from the overlapping reference-camera
/// poses: per-frame H_i = prev_i * curr_i^{-1}, rotations chordally averaged,
/// translations arithmetically averaged.
Pose pairwise_registration(const std::vector<Pose>& prev_overlap_poses,
                           const std::vector<Pose>& curr_overlap_poses);

/// Left fold of per-pair transforms into the frame of submap 0.
/// pair_transforms[i] maps submap i+1 to submap i; scales accumulate
/// multiplicatively.
std::vector<SubmapTransform> chain_to_global(const std::vector<Pose>& pair_transforms,
                                             const std::vector<double>& scales);

/// Re-expresses all poses and pointmap entries of a submap in the global frame.
SubmapPrediction apply_to_submap(const SubmapPrediction& sp, const SubmapTransform& st);

} // namespace talo
