#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "talo/geometry.hpp"
#include "talo/prediction.hpp"

namespace talo {

/// Axis-aligned box primitive.
struct Box {
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
};

struct SyntheticScene {
    uint64_t seed = 0;
    double extent = 50.0;
    std::vector<Box> boxes;        // obstacles and walls
    double ground_half_size = 0;   // ground plane z = 0, square around origin
    std::vector<Vec3> surface_points;
    std::vector<Pose> gt_trajectory;    // reference camera, world frame
    std::vector<Pose> rig;              // per-camera offset from the reference
    Intrinsics intrinsics;              // shared across the rig

    int camera_count() const { return static_cast<int>(rig.size()); }
    int frame_count() const { return static_cast<int>(gt_trajectory.size()); }
    Pose camera_pose(int t, int c) const { return gt_trajectory[t] * rig[c]; }

    /// Smallest positive depth along the pixel ray, or nullopt on a miss.
    std::optional<double> cast_ray(const Pose& cam_pose, double u, double v) const;
};

enum class DistortionRegime { None, Case1, Case2, Case3 };

struct DistortionSpec {
    DistortionRegime regime = DistortionRegime::None;
    // Case 1: per-submap global depth scale. Explicit per-submap values win;
    // otherwise drawn uniformly from [scale_min, scale_max] by submap index.
    std::vector<double> case1_scales;
    double scale_min = 1.0, scale_max = 1.0;
    // Case 2: relative focal-length perturbation per submap (e.g. 0.05).
    double intrinsics_delta = 0.0;
    // Case 3: sinusoidal depth field amplitude/frequency, per-submap phase.
    double amplitude = 0.0;  // alpha
    double frequency = 6.283185307179586; // beta
    // Per-submap rigid jitter magnitudes.
    double jitter_rotation_deg = 0.0;
    double jitter_translation = 0.0;

    double case1_scale(int submap_index, uint64_t seed) const;
};

struct SceneParams {
    uint64_t seed = 1;
    int n_points = 4000;
    double extent = 50.0; // meters
    int n_frames = 20;
    int n_cameras = 3;
    int width = 64;
    int height = 48;
};

SyntheticScene generate_scene(const SceneParams& params);

/// Renders one submap: ideal ray-cast depth, the regime's depth distortion,
/// per-submap rigid jitter, everything expressed in the frame of the submap's
/// first camera. Confidence is 1 - |f(D)/D - 1| clipped to [0, 1].
SubmapPrediction render_submap(const SyntheticScene& scene,
                               const std::vector<int>& timestamps,
                               const DistortionSpec& spec, int submap_index);

/// Ground-truth pointmap of one camera view in the world frame (regime none).
/// Used to assemble reference clouds for evaluation.
FramePrediction render_gt_frame(const SyntheticScene& scene, int t, int c);

} // namespace talo
