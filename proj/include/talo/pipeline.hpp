#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "talo/deformation.hpp"
#include "talo/evaluation.hpp"
#include "talo/prediction.hpp"
#include "talo/registration.hpp"
#include "talo/synth.hpp"

namespace talo {

enum class Strategy { Talo, Sim3, Sl4, None };

Strategy strategy_from_string(const std::string& s);
std::string to_string(Strategy s);

struct PipelineConfig {
    Strategy strategy = Strategy::Talo;
    int new_per_submap = 2; // L
    int overlap = 2;        // O
    double voxel_ratio = 0.05;
    int q = 32;
    double lambda = -1.0; // < 0: auto, 1e-2 * extent^2 in kernel units per submap
    double conf_percentile = 60.0;
    bool metric_scale = false; // disables inter-submap scale estimation
    bool streaming = false;    // refit the TPS as each submap completes
    uint64_t seed = 1;
    double frame_rate = 2.0; // Hz, for trajectory timestamps
    int rte_gap = 1;
    double clamp = 10.0;

    SceneParams scene;         // used when input is empty
    DistortionSpec distortion; // used when input is empty

    std::string input;  // bundle directory; empty -> synthesize in memory
    std::string output; // artifact directory; empty -> no exports

    void validate() const;
};

PipelineConfig config_from_json_file(const std::filesystem::path& path);

/// Sequential bundle feed honoring the online contract. Records every load
/// for contract verification in tests.
class SubmapSource {
public:
    virtual ~SubmapSource() = default;
    virtual int submap_count() const = 0;
    SubmapPrediction load(int k) {
        access_log_.push_back(k);
        return load_impl(k);
    }
    const std::vector<int>& access_log() const { return access_log_; }

protected:
    virtual SubmapPrediction load_impl(int k) = 0;

private:
    std::vector<int> access_log_;
};

std::unique_ptr<SubmapSource> make_dir_source(const std::filesystem::path& dir);
std::unique_ptr<SubmapSource> make_synth_source(const SyntheticScene& scene,
                                                const PipelineConfig& cfg);

struct GroundTruth {
    SceneParams scene_params;
    DistortionSpec distortion;
    double frame_rate = 2.0;
};

GroundTruth load_ground_truth(const std::filesystem::path& path);

struct PipelineResult {
    AlignmentReport report;
    std::string failure_reason; // non-empty on a recorded alignment failure
    std::vector<SubmapTransform> transforms;
    std::vector<Pose> trajectory;          // owned reference-camera poses, global frame
    std::vector<Vec3> cloud;               // reconstruction, global frame
    std::vector<uint8_t> cloud_submap;     // submap index per cloud point
    std::vector<TpsModel> models;          // per-submap deformation (talo only)
    std::vector<double> submap_seconds;    // per-submap processing wall time
    double wall_seconds = 0;
};

PipelineResult run_pipeline(const PipelineConfig& cfg);
PipelineResult run_pipeline(const PipelineConfig& cfg, SubmapSource& source,
                            const SyntheticScene* gt_scene);

/// Writes synthetic bundles (submap_000, submap_001, ...) plus
/// ground_truth.json into the output directory.
void synthesize_bundles(const PipelineConfig& cfg);

struct ColoredPoint {
    Vec3 position = Vec3::Zero();
    uint8_t r = 255, g = 255, b = 255;
};

/// Binary little-endian PLY 1.0 with float xyz and uchar rgb.
void export_ply(const std::vector<ColoredPoint>& cloud, const std::filesystem::path& path);
std::vector<ColoredPoint> import_ply(const std::filesystem::path& path);

/// TUM rows: "t tx ty tz qx qy qz qw", Hamilton convention, w last,
/// timestamps at frame_index / frame_rate.
void export_trajectory(const std::vector<Pose>& traj, const std::filesystem::path& path,
                       double frame_rate = 2.0);
std::vector<Pose> import_trajectory(const std::filesystem::path& path);

} // namespace talo
