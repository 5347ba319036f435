#include "talo/pipeline.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "talo/baselines.hpp"
#include "talo/control_points.hpp"

namespace talo {

namespace {

using json = nlohmann::json;

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string fmt_timestamp(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", t);
    return buf;
}

std::string tum_row(double timestamp, const Pose& pose) {
    Eigen::Quaterniond q(pose.rotation);
    q.normalize();
    if (q.w() < 0) q.coeffs() = -q.coeffs();
    std::ostringstream os;
    os << fmt_timestamp(timestamp) << ' ' << fmt(pose.translation.x()) << ' '
       << fmt(pose.translation.y()) << ' ' << fmt(pose.translation.z()) << ' '
       << fmt(q.x()) << ' ' << fmt(q.y()) << ' ' << fmt(q.z()) << ' ' << fmt(q.w());
    return os.str();
}

std::ofstream open_out(const std::filesystem::path& path, bool binary) {
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) {
        throw Error(ErrorKind::IoError, "cannot open for writing: " + path.string());
    }
    return os;
}

std::string regime_name(DistortionRegime r) {
    switch (r) {
        case DistortionRegime::None: return "none";
        case DistortionRegime::Case1: return "case1";
        case DistortionRegime::Case2: return "case2";
        case DistortionRegime::Case3: return "case3";
    }
    throw Error(ErrorKind::InvalidArgument, "unknown distortion regime");
}

DistortionRegime regime_from_name(const std::string& s) {
    if (s == "none") return DistortionRegime::None;
    if (s == "case1") return DistortionRegime::Case1;
    if (s == "case2") return DistortionRegime::Case2;
    if (s == "case3") return DistortionRegime::Case3;
    throw Error(ErrorKind::ParseError, "unknown distortion regime: " + s);
}

json distortion_to_json(const DistortionSpec& d) {
    json j;
    j["regime"] = regime_name(d.regime);
    j["case1_scales"] = d.case1_scales;
    j["scale_min"] = d.scale_min;
    j["scale_max"] = d.scale_max;
    j["intrinsics_delta"] = d.intrinsics_delta;
    j["amplitude"] = d.amplitude;
    j["frequency"] = d.frequency;
    j["jitter_rotation_deg"] = d.jitter_rotation_deg;
    j["jitter_translation"] = d.jitter_translation;
    return j;
}

DistortionSpec distortion_from_json(const json& j) {
    DistortionSpec d;
    if (j.contains("regime")) d.regime = regime_from_name(j.at("regime").get<std::string>());
    if (j.contains("case1_scales")) d.case1_scales = j.at("case1_scales").get<std::vector<double>>();
    if (j.contains("scale_min")) d.scale_min = j.at("scale_min").get<double>();
    if (j.contains("scale_max")) d.scale_max = j.at("scale_max").get<double>();
    if (j.contains("intrinsics_delta")) d.intrinsics_delta = j.at("intrinsics_delta").get<double>();
    if (j.contains("amplitude")) d.amplitude = j.at("amplitude").get<double>();
    if (j.contains("frequency")) d.frequency = j.at("frequency").get<double>();
    if (j.contains("jitter_rotation_deg"))
        d.jitter_rotation_deg = j.at("jitter_rotation_deg").get<double>();
    if (j.contains("jitter_translation"))
        d.jitter_translation = j.at("jitter_translation").get<double>();
    return d;
}

json scene_to_json(const SceneParams& p) {
    json j;
    j["seed"] = p.seed;
    j["n_points"] = p.n_points;
    j["extent"] = p.extent;
    j["n_frames"] = p.n_frames;
    j["n_cameras"] = p.n_cameras;
    j["width"] = p.width;
    j["height"] = p.height;
    return j;
}

SceneParams scene_from_json(const json& j) {
    SceneParams p;
    if (j.contains("seed")) p.seed = j.at("seed").get<uint64_t>();
    if (j.contains("n_points")) p.n_points = j.at("n_points").get<int>();
    if (j.contains("extent")) p.extent = j.at("extent").get<double>();
    if (j.contains("n_frames")) p.n_frames = j.at("n_frames").get<int>();
    if (j.contains("n_cameras")) p.n_cameras = j.at("n_cameras").get<int>();
    if (j.contains("width")) p.width = j.at("width").get<int>();
    if (j.contains("height")) p.height = j.at("height").get<int>();
    return p;
}

// Sorted intersection of two timestamp lists.
std::vector<int> shared_timestamps(const SubmapPrediction& prev, const SubmapPrediction& curr) {
    const std::vector<int> a = prev.timestamps();
    const std::vector<int> b = curr.timestamps();
    std::vector<int> out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::vector<Pose> reference_poses(const SubmapPrediction& sp, const std::vector<int>& ts) {
    std::vector<Pose> out;
    out.reserve(ts.size());
    for (int t : ts) out.push_back(sp.reference_frame(t).pose);
    return out;
}

// Pixel-bridged overlap correspondences: points valid at the same (t, c, u, v)
// in both submaps. src is from `from`, dst from `to`.
void overlap_correspondences(const SubmapPrediction& from, const SubmapPrediction& to,
                             const std::vector<int>& overlap_ts, std::vector<Vec3>& src,
                             std::vector<Vec3>& dst, size_t max_pairs = 4000) {
    std::vector<Vec3> s, d;
    for (const auto& fp : from.frames) {
        if (std::find(overlap_ts.begin(), overlap_ts.end(), fp.t) == overlap_ts.end()) continue;
        const FramePrediction* other = to.find(fp.t, fp.c);
        if (!other) continue;
        for (int v = 0; v < fp.height(); ++v) {
            for (int u = 0; u < fp.width(); ++u) {
                if (!fp.valid_at(u, v) || !other->valid_at(u, v)) continue;
                s.push_back(fp.point_at(u, v));
                d.push_back(other->point_at(u, v));
            }
        }
    }
    const size_t stride = s.size() > max_pairs ? (s.size() + max_pairs - 1) / max_pairs : 1;
    src.clear();
    dst.clear();
    for (size_t i = 0; i < s.size(); i += stride) {
        src.push_back(s[i]);
        dst.push_back(d[i]);
    }
}

SubmapPrediction apply_sim3_to_submap(const SubmapPrediction& sp, const Sim3& s3) {
    SubmapTransform st;
    st.submap_index = sp.submap_index;
    st.scale_correction = s3.scale;
    st.to_global = {s3.rotation, s3.translation};
    return apply_to_submap(sp, st);
}

SubmapPrediction apply_sl4_to_submap(const SubmapPrediction& sp, const Sl4Transform& h) {
    SubmapPrediction out = sp;
    for (auto& fp : out.frames) {
        for (int v = 0; v < fp.height(); ++v) {
            for (int u = 0; u < fp.width(); ++u) {
                if (!fp.valid_at(u, v)) continue;
                const Sl4Point wp = apply_sl4_one(h, fp.point_at(u, v));
                if (!wp.valid) {
                    fp.valid[fp.pix(u, v)] = 0;
                    continue;
                }
                fp.set_point(u, v, wp.point);
            }
        }
        // SL(4) does not act on SE(3); re-derive orientation from warped axes.
        const Vec3 c0 = fp.pose.translation;
        const Sl4Point wc = apply_sl4_one(h, c0);
        if (!wc.valid) {
            throw Error(ErrorKind::DegenerateConfiguration,
                        "projective warp sends a camera center to infinity");
        }
        const double eps = 1e-3 * (1.0 + c0.norm());
        Mat3 axes;
        for (int i = 0; i < 3; ++i) {
            const Sl4Point wa = apply_sl4_one(h, c0 + eps * fp.pose.rotation.col(i));
            if (!wa.valid) {
                throw Error(ErrorKind::DegenerateConfiguration,
                            "projective warp sends a camera axis to infinity");
            }
            axes.col(i) = (wa.point - wc.point) / eps;
        }
        fp.pose.rotation = project_to_so3(axes);
        fp.pose.translation = wc.point;
    }
    return out;
}

// Owning submap of a timestamp: the first one where it appears as a new frame.
int owner_submap(int t, int new_per_submap, int submap_count) {
    return std::min(t / new_per_submap, submap_count - 1);
}

struct DirSource final : SubmapSource {
    std::filesystem::path dir;
    std::vector<std::filesystem::path> bundles;

    explicit DirSource(std::filesystem::path d) : dir(std::move(d)) {
        if (!std::filesystem::is_directory(dir)) {
            throw Error(ErrorKind::IoError, "not a directory: " + dir.string());
        }
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.is_directory() &&
                entry.path().filename().string().rfind("submap_", 0) == 0) {
                bundles.push_back(entry.path());
            }
        }
        std::sort(bundles.begin(), bundles.end());
        if (bundles.empty()) {
            throw Error(ErrorKind::IoError, "no submap_* bundles in " + dir.string());
        }
    }

    int submap_count() const override { return static_cast<int>(bundles.size()); }

protected:
    SubmapPrediction load_impl(int k) override { return load_bundle(bundles[k]); }
};

struct SynthSource final : SubmapSource {
    const SyntheticScene* scene;
    DistortionSpec spec;
    std::vector<std::vector<int>> segs;

    SynthSource(const SyntheticScene& sc, const PipelineConfig& cfg)
        : scene(&sc), spec(cfg.distortion) {
        StreamConfig stream;
        stream.total_frames = sc.frame_count();
        stream.cameras = sc.camera_count();
        stream.new_per_submap = cfg.new_per_submap;
        stream.overlap = cfg.overlap;
        segs = segment_stream(stream);
    }

    int submap_count() const override { return static_cast<int>(segs.size()); }

protected:
    SubmapPrediction load_impl(int k) override {
        SubmapPrediction sp = render_submap(*scene, segs[k], spec, k);
        sp.submap_index = k;
        int shared = 0;
        if (k > 0) {
            for (int t : segs[k]) {
                if (t <= segs[k - 1].back()) ++shared;
            }
        }
        sp.overlap_count = shared;
        return sp;
    }
};

std::vector<std::array<uint8_t, 3>> submap_palette() {
    return {{{230, 25, 75}},
            {{60, 180, 75}},
            {{255, 225, 25}},
            {{0, 130, 200}},
            {{245, 130, 48}},
            {{145, 30, 180}},
            {{70, 240, 240}},
            {{240, 50, 230}},
            {{210, 245, 60}},
            {{250, 190, 212}},
            {{0, 128, 128}},
            {{220, 190, 255}}};
}

struct TaloState {
    ControlPool pool;
};

// Aggregates every control point's observations, smooths per-submap
// displacements, and fits one TPS per submap. Models with displacements below
// numerical noise stay identity.
std::vector<TpsModel> fit_deformations(const ControlPool& pool, int submap_count,
                                       const PipelineConfig& cfg) {
    std::vector<Vec3> canonicals(pool.points.size());
    for (size_t i = 0; i < pool.points.size(); ++i) {
        std::vector<Vec3> obs;
        obs.reserve(pool.points[i].observations.size());
        for (const auto& [k, o] : pool.points[i].observations) obs.push_back(o.point);
        canonicals[i] = aggregate_canonical(obs);
    }

    std::vector<TpsModel> models(submap_count);
    for (int k = 0; k < submap_count; ++k) {
        std::vector<Vec3> sources, targets;
        for (size_t i = 0; i < pool.points.size(); ++i) {
            auto it = pool.points[i].observations.find(k);
            if (it == pool.points[i].observations.end()) continue;
            sources.push_back(it->second.point);
            targets.push_back(canonicals[i]);
        }
        if (sources.empty()) continue;

        Vec3 lo = sources[0], hi = sources[0];
        double max_disp = 0;
        for (size_t i = 0; i < sources.size(); ++i) {
            lo = lo.cwiseMin(sources[i]);
            hi = hi.cwiseMax(sources[i]);
            max_disp = std::max(max_disp, (targets[i] - sources[i]).norm());
        }
        const double diag = (hi - lo).norm();
        if (max_disp <= 1e-10 * (1.0 + diag)) continue; // already consistent

        SmoothingParams sm;
        sm.neighbor_count = cfg.q;
        const std::vector<Vec3> smoothed = smooth_displacements(sources, targets, sm);
        // Auto default: 1e-2 x (data extent)^2, expressed in the linear
        // kernel's units (phi(r) = r is in meters, so divide by the extent).
        const double lambda = cfg.lambda >= 0 ? cfg.lambda : 1e-2 * diag;
        models[k] = tps_fit(sources, smoothed, lambda);
    }
    return models;
}

} // namespace

Strategy strategy_from_string(const std::string& s) {
    if (s == "talo") return Strategy::Talo;
    if (s == "sim3") return Strategy::Sim3;
    if (s == "sl4") return Strategy::Sl4;
    if (s == "none") return Strategy::None;
    throw Error(ErrorKind::InvalidArgument, "unknown strategy: " + s);
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Talo: return "talo";
        case Strategy::Sim3: return "sim3";
        case Strategy::Sl4: return "sl4";
        case Strategy::None: return "none";
    }
    throw Error(ErrorKind::InvalidArgument, "unknown strategy");
}

void PipelineConfig::validate() const {
    if (new_per_submap < 1) throw Error(ErrorKind::InvalidArgument, "L must be >= 1");
    if (overlap < 0) throw Error(ErrorKind::InvalidArgument, "O must be >= 0");
    if (!(voxel_ratio > 0)) throw Error(ErrorKind::InvalidArgument, "voxel_ratio must be > 0");
    if (q < 1) throw Error(ErrorKind::InvalidArgument, "Q must be >= 1");
    if (conf_percentile < 0 || conf_percentile > 100) {
        throw Error(ErrorKind::InvalidArgument, "confidence percentile must be in [0, 100]");
    }
    if (!(frame_rate > 0)) throw Error(ErrorKind::InvalidArgument, "frame_rate must be > 0");
    if (rte_gap < 1) throw Error(ErrorKind::InvalidArgument, "rte_gap must be >= 1");
    if (!(clamp > 0)) throw Error(ErrorKind::InvalidArgument, "clamp must be > 0");
    if (input.empty()) {
        StreamConfig stream;
        stream.total_frames = scene.n_frames;
        stream.cameras = scene.n_cameras;
        stream.new_per_submap = new_per_submap;
        stream.overlap = overlap;
        stream.validate();
    }
}

PipelineConfig config_from_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw Error(ErrorKind::IoError, "cannot open config: " + path.string());
    }
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, "config " + path.string() + ": " + e.what());
    }

    PipelineConfig cfg;
    try {
        if (j.contains("strategy")) cfg.strategy = strategy_from_string(j.at("strategy"));
        if (j.contains("L")) cfg.new_per_submap = j.at("L").get<int>();
        if (j.contains("O")) cfg.overlap = j.at("O").get<int>();
        if (j.contains("voxel_ratio")) cfg.voxel_ratio = j.at("voxel_ratio").get<double>();
        if (j.contains("q")) cfg.q = j.at("q").get<int>();
        if (j.contains("lambda")) cfg.lambda = j.at("lambda").get<double>();
        if (j.contains("conf_percentile"))
            cfg.conf_percentile = j.at("conf_percentile").get<double>();
        if (j.contains("metric_scale")) cfg.metric_scale = j.at("metric_scale").get<bool>();
        if (j.contains("streaming")) cfg.streaming = j.at("streaming").get<bool>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
        if (j.contains("frame_rate")) cfg.frame_rate = j.at("frame_rate").get<double>();
        if (j.contains("rte_gap")) cfg.rte_gap = j.at("rte_gap").get<int>();
        if (j.contains("clamp")) cfg.clamp = j.at("clamp").get<double>();
        if (j.contains("input")) cfg.input = j.at("input").get<std::string>();
        if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
        if (j.contains("scene")) cfg.scene = scene_from_json(j.at("scene"));
        if (j.contains("distortion")) cfg.distortion = distortion_from_json(j.at("distortion"));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, "config " + path.string() + ": " + e.what());
    }
    cfg.scene.seed = j.contains("scene") && j.at("scene").contains("seed") ? cfg.scene.seed
                                                                           : cfg.seed;
    return cfg;
}

std::unique_ptr<SubmapSource> make_dir_source(const std::filesystem::path& dir) {
    return std::make_unique<DirSource>(dir);
}

std::unique_ptr<SubmapSource> make_synth_source(const SyntheticScene& scene,
                                                const PipelineConfig& cfg) {
    return std::make_unique<SynthSource>(scene, cfg);
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw Error(ErrorKind::IoError, "cannot open ground truth: " + path.string());
    }
    json j;
    try {
        is >> j;
        GroundTruth gt;
        gt.scene_params = scene_from_json(j.at("scene"));
        if (j.contains("distortion")) gt.distortion = distortion_from_json(j.at("distortion"));
        if (j.contains("frame_rate")) gt.frame_rate = j.at("frame_rate").get<double>();
        return gt;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, "ground truth " + path.string() + ": " + e.what());
    }
}

PipelineResult run_pipeline(const PipelineConfig& cfg, SubmapSource& source,
                            const SyntheticScene* gt_scene) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    const int submap_count = source.submap_count();
    if (submap_count < 1) {
        throw Error(ErrorKind::EmptyInput, "no submaps to process");
    }

    PipelineResult result;
    std::vector<SubmapPrediction> globals;
    globals.reserve(submap_count);
    TaloState talo;

    auto stage_error = [](int k, const std::string& stage, const Error& e) {
        return Error(e.kind(), "submap " + std::to_string(k) + ", stage " + stage + ": " +
                                   e.what());
    };

    for (int k = 0; k < submap_count && result.failure_reason.empty(); ++k) {
        const auto t_submap = std::chrono::steady_clock::now();
        std::string stage = "load";
        try {
            SubmapPrediction sp = source.load(k);
            sp.submap_index = k;

            stage = "confidence_filter";
            for (auto& fp : sp.frames) {
                fp.valid = confidence_filter(fp, cfg.conf_percentile);
            }

            stage = "register";
            SubmapTransform st;
            st.submap_index = k;
            SubmapPrediction global;
            if (k == 0 || cfg.strategy == Strategy::None) {
                global = std::move(sp);
            } else {
                const SubmapPrediction& prev = globals.back();
                const std::vector<int> overlap_ts = shared_timestamps(prev, sp);
                if (overlap_ts.empty()) {
                    throw Error(ErrorKind::NoOverlap,
                                "no shared timestamps with the previous submap");
                }
                if (cfg.strategy == Strategy::Talo) {
                    const std::vector<Pose> prev_poses = reference_poses(prev, overlap_ts);
                    std::vector<Pose> curr_poses = reference_poses(sp, overlap_ts);
                    if (!cfg.metric_scale && overlap_ts.size() >= 2) {
                        st.scale_correction =
                            estimate_inter_submap_scale(prev_poses, curr_poses);
                    }
                    for (auto& p : curr_poses) p.translation *= st.scale_correction;
                    st.to_global = pairwise_registration(prev_poses, curr_poses);
                    global = apply_to_submap(sp, st);
                } else {
                    std::vector<Vec3> src, dst;
                    overlap_correspondences(sp, prev, overlap_ts, src, dst);
                    if (src.size() < 6) {
                        throw Error(ErrorKind::InsufficientPoints,
                                    "too few overlap correspondences");
                    }
                    if (cfg.strategy == Strategy::Sim3) {
                        const Sim3 s3 = sim3_point_align(src, dst, !cfg.metric_scale);
                        st.scale_correction = s3.scale;
                        st.to_global = {s3.rotation, s3.translation};
                        global = apply_sim3_to_submap(sp, s3);
                    } else {
                        try {
                            const Sl4Transform h = sl4_point_align(src, dst);
                            global = apply_sl4_to_submap(sp, h);
                        } catch (const Error& e) {
                            if (e.kind() == ErrorKind::DegenerateConfiguration) {
                                result.failure_reason = "submap " + std::to_string(k) +
                                                        ": projective alignment degenerate: " +
                                                        e.what();
                                result.report.failed = true;
                                break;
                            }
                            throw;
                        }
                    }
                }
            }

            if (cfg.strategy == Strategy::Talo && k > 0) {
                stage = "control_points";
                const std::vector<int> overlap_ts = shared_timestamps(globals.back(), global);
                const double cell = control_voxel_size(global, cfg.voxel_ratio);
                const double tolerance = 2.0 * cell; // tau_prop = 2 * delta_v
                for (auto& cp : talo.pool.points) {
                    if (cp.alive && cp.observations.count(k - 1)) {
                        propagate(cp, k - 1, globals[k - 1], global, overlap_ts, tolerance);
                    }
                }
                seed_overlap_controls(globals[k - 1], global, overlap_ts, talo.pool, cell);
            }

            globals.push_back(std::move(global));
            result.transforms.push_back(st);

            if (cfg.strategy == Strategy::Talo && cfg.streaming && k > 0) {
                stage = "streaming_fit";
                result.models = fit_deformations(talo.pool, k + 1, cfg);
            }
        } catch (const Error& e) {
            throw stage_error(k, stage, e);
        }
        result.submap_seconds.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_submap)
                .count());
    }

    if (cfg.strategy == Strategy::Talo && result.failure_reason.empty()) {
        try {
            result.models = fit_deformations(talo.pool, static_cast<int>(globals.size()), cfg);
            for (size_t k = 0; k < globals.size(); ++k) {
                if (result.models[k].is_identity()) continue;
                for (auto& fp : globals[k].frames) {
                    tps_apply_packed(result.models[k], fp.pointmap);
                }
            }
        } catch (const Error& e) {
            throw stage_error(static_cast<int>(globals.size()) - 1, "deform", e);
        }
    }

    // Trajectory and reconstruction assembled from each timestamp's owning
    // submap (the first where it is a new, non-overlap frame).
    std::vector<int> all_ts;
    {
        std::set<int> ts;
        for (const auto& g : globals) {
            for (int t : g.timestamps()) ts.insert(t);
        }
        all_ts.assign(ts.begin(), ts.end());
    }
    const int k_count = static_cast<int>(globals.size());
    std::vector<const SubmapPrediction*> owner_of(all_ts.size());
    for (size_t i = 0; i < all_ts.size(); ++i) {
        owner_of[i] = &globals[owner_submap(all_ts[i], cfg.new_per_submap, k_count)];
    }

    for (size_t i = 0; i < all_ts.size(); ++i) {
        result.trajectory.push_back(owner_of[i]->reference_frame(all_ts[i]).pose);
    }
    for (size_t i = 0; i < all_ts.size(); ++i) {
        const SubmapPrediction& g = *owner_of[i];
        for (const auto& fp : g.frames) {
            if (fp.t != all_ts[i]) continue;
            for (int v = 0; v < fp.height(); ++v) {
                for (int u = 0; u < fp.width(); ++u) {
                    if (!fp.valid_at(u, v)) continue;
                    result.cloud.push_back(fp.point_at(u, v));
                    result.cloud_submap.push_back(static_cast<uint8_t>(g.submap_index));
                }
            }
        }
    }

    // Evaluation against ground truth, when available.
    if (gt_scene != nullptr && result.failure_reason.empty() && all_ts.size() >= 3) {
        const int cameras = gt_scene->camera_count();
        std::vector<Pose> pred_all, gt_all; // (t asc, c asc)
        std::vector<std::vector<Pose>> pred_cam(cameras), gt_cam(cameras);
        for (size_t i = 0; i < all_ts.size(); ++i) {
            for (int c = 0; c < cameras; ++c) {
                const FramePrediction* fp = owner_of[i]->find(all_ts[i], c);
                if (!fp) {
                    throw Error(ErrorKind::InvalidArgument,
                                "missing camera " + std::to_string(c) + " at frame " +
                                    std::to_string(all_ts[i]));
                }
                pred_all.push_back(fp->pose);
                gt_all.push_back(gt_scene->camera_pose(all_ts[i], c));
                pred_cam[c].push_back(fp->pose);
                gt_cam[c].push_back(gt_all.back());
            }
        }

        const auto [align, ate] = align_and_ate(pred_all, gt_all);
        result.report.ate_rmse = ate;

        if (static_cast<int>(all_ts.size()) > cfg.rte_gap) {
            double t_acc = 0, r_acc = 0;
            size_t n = 0;
            for (int c = 0; c < cameras; ++c) {
                for (size_t i = 0; i + cfg.rte_gap < pred_cam[c].size(); ++i) {
                    const Pose gt_rel = gt_cam[c][i].inverse() * gt_cam[c][i + cfg.rte_gap];
                    Pose pred_rel = pred_cam[c][i].inverse() * pred_cam[c][i + cfg.rte_gap];
                    pred_rel.translation *= align.scale;
                    const Pose err = gt_rel.inverse() * pred_rel;
                    t_acc += err.translation.squaredNorm();
                    const double ang = rotation_angle(err.rotation);
                    r_acc += ang * ang;
                    ++n;
                }
            }
            result.report.rte_rmse = std::sqrt(t_acc / static_cast<double>(n));
            result.report.rre_rmse =
                std::sqrt(r_acc / static_cast<double>(n)) * 180.0 / M_PI;
        }

        std::vector<Pose> gt_ref;
        for (int t : all_ts) gt_ref.push_back(gt_scene->gt_trajectory[t]);
        result.report.gt_length = trajectory_length(gt_ref);

        std::vector<Vec3> pred_aligned(result.cloud.size());
        for (size_t i = 0; i < result.cloud.size(); ++i) {
            pred_aligned[i] = align.apply(result.cloud[i]);
        }
        std::vector<Vec3> gt_cloud;
        for (int t : all_ts) {
            for (int c = 0; c < cameras; ++c) {
                const FramePrediction gtf = render_gt_frame(*gt_scene, t, c);
                for (int v = 0; v < gtf.height(); ++v) {
                    for (int u = 0; u < gtf.width(); ++u) {
                        if (gtf.valid_at(u, v)) gt_cloud.push_back(gtf.point_at(u, v));
                    }
                }
            }
        }
        const GeometryMetrics gm = geometry_metrics(pred_aligned, gt_cloud, cfg.clamp);
        result.report.accuracy = gm.accuracy;
        result.report.completeness = gm.completeness;
        result.report.chamfer = gm.chamfer;
        result.report.failed = result.report.ate_rmse > 0.05 * result.report.gt_length;
    }

    // Artifact export.
    if (!cfg.output.empty()) {
        const std::filesystem::path out(cfg.output);
        std::filesystem::create_directories(out);

        auto report_os = open_out(out / "report.csv", false);
        report_os << result.report.csv_header() << '\n' << result.report.csv_row() << '\n';

        export_trajectory(result.trajectory, out / "trajectory.tum", cfg.frame_rate);

        if (!result.cloud.empty()) {
            const auto palette = submap_palette();
            std::vector<ColoredPoint> colored(result.cloud.size());
            for (size_t i = 0; i < result.cloud.size(); ++i) {
                const auto& rgb = palette[result.cloud_submap[i] % palette.size()];
                colored[i] = {result.cloud[i], rgb[0], rgb[1], rgb[2]};
            }
            export_ply(colored, out / "cloud.ply");
        }

        if (cfg.strategy == Strategy::Talo) {
            auto pool_os = open_out(out / "control_points.csv", false);
            dump_pool_csv(talo.pool, pool_os);
        }
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.input.empty()) {
        const SyntheticScene scene = generate_scene(cfg.scene);
        auto source = make_synth_source(scene, cfg);
        return run_pipeline(cfg, *source, &scene);
    }
    auto source = make_dir_source(cfg.input);
    const std::filesystem::path gt_path = std::filesystem::path(cfg.input) / "ground_truth.json";
    if (std::filesystem::exists(gt_path)) {
        const GroundTruth gt = load_ground_truth(gt_path);
        const SyntheticScene scene = generate_scene(gt.scene_params);
        return run_pipeline(cfg, *source, &scene);
    }
    return run_pipeline(cfg, *source, nullptr);
}

void synthesize_bundles(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.output.empty()) {
        throw Error(ErrorKind::InvalidArgument, "synthesis requires an output directory");
    }
    const SyntheticScene scene = generate_scene(cfg.scene);

    StreamConfig stream;
    stream.total_frames = cfg.scene.n_frames;
    stream.cameras = cfg.scene.n_cameras;
    stream.new_per_submap = cfg.new_per_submap;
    stream.overlap = cfg.overlap;
    const auto segs = segment_stream(stream);

    const std::filesystem::path out(cfg.output);
    std::filesystem::create_directories(out);
    for (size_t k = 0; k < segs.size(); ++k) {
        SubmapPrediction sp =
            render_submap(scene, segs[k], cfg.distortion, static_cast<int>(k));
        sp.submap_index = static_cast<int>(k);
        sp.overlap_count = k == 0 ? 0 : cfg.overlap;
        char name[32];
        std::snprintf(name, sizeof(name), "submap_%03zu", k);
        save_bundle(sp, out / name);
    }

    json j;
    j["frame_rate"] = cfg.frame_rate;
    j["scene"] = scene_to_json(cfg.scene);
    j["distortion"] = distortion_to_json(cfg.distortion);
    std::vector<std::string> rows;
    for (int t = 0; t < scene.frame_count(); ++t) {
        rows.push_back(tum_row(t / cfg.frame_rate, scene.gt_trajectory[t]));
    }
    j["trajectory"] = rows;
    auto os = open_out(out / "ground_truth.json", false);
    os << j.dump(2) << '\n';
}

void export_ply(const std::vector<ColoredPoint>& cloud, const std::filesystem::path& path) {
    if (cloud.empty()) {
        throw Error(ErrorKind::EmptyInput, "export_ply: empty cloud");
    }
    auto os = open_out(path, true);
    os << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
       << "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\n"
          "property uchar green\nproperty uchar blue\nend_header\n";
    for (const auto& cp : cloud) {
        const float xyz[3] = {static_cast<float>(cp.position.x()),
                              static_cast<float>(cp.position.y()),
                              static_cast<float>(cp.position.z())};
        os.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        const uint8_t rgb[3] = {cp.r, cp.g, cp.b};
        os.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    }
}

std::vector<ColoredPoint> import_ply(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw Error(ErrorKind::IoError, "cannot open PLY: " + path.string());
    }
    std::string line;
    size_t count = 0;
    bool header_done = false;
    while (std::getline(is, line)) {
        if (line.rfind("element vertex ", 0) == 0) {
            count = std::stoul(line.substr(15));
        } else if (line == "end_header") {
            header_done = true;
            break;
        }
    }
    if (!header_done) {
        throw Error(ErrorKind::ParseError, "PLY header missing end_header: " + path.string());
    }
    std::vector<ColoredPoint> out(count);
    for (auto& cp : out) {
        float xyz[3];
        uint8_t rgb[3];
        is.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
        is.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
        if (!is) {
            throw Error(ErrorKind::ParseError, "PLY truncated: " + path.string());
        }
        cp.position = Vec3(xyz[0], xyz[1], xyz[2]);
        cp.r = rgb[0];
        cp.g = rgb[1];
        cp.b = rgb[2];
    }
    return out;
}

void export_trajectory(const std::vector<Pose>& traj, const std::filesystem::path& path,
                       double frame_rate) {
    if (traj.empty()) {
        throw Error(ErrorKind::EmptyInput, "export_trajectory: empty trajectory");
    }
    auto os = open_out(path, false);
    for (size_t t = 0; t < traj.size(); ++t) {
        os << tum_row(static_cast<double>(t) / frame_rate, traj[t]) << '\n';
    }
}

std::vector<Pose> import_trajectory(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
        throw Error(ErrorKind::IoError, "cannot open trajectory: " + path.string());
    }
    std::vector<Pose> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        double ts, tx, ty, tz, qx, qy, qz, qw;
        if (!(ls >> ts >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) {
            throw Error(ErrorKind::ParseError, "trajectory " + path.string() + " line " +
                                                   std::to_string(line_no) + ": expected 8 numbers");
        }
        Eigen::Quaterniond q(qw, qx, qy, qz);
        if (q.norm() < 1e-12) {
            throw Error(ErrorKind::ParseError, "trajectory " + path.string() + " line " +
                                                   std::to_string(line_no) + ": zero quaternion");
        }
        q.normalize();
        Pose p;
        p.rotation = q.toRotationMatrix();
        p.translation = Vec3(tx, ty, tz);
        out.push_back(p);
    }
    return out;
}

} // namespace talo
