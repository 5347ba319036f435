#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "talo/pipeline.hpp"

using namespace talo;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("talo_pipe_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

PipelineConfig small_config(uint64_t seed = 1) {
    PipelineConfig cfg;
    cfg.scene.seed = seed;
    cfg.scene.n_points = 1000;
    cfg.scene.n_frames = 8;
    cfg.scene.n_cameras = 2;
    cfg.scene.width = 32;
    cfg.scene.height = 24;
    cfg.conf_percentile = 0; // exact data: percentile filtering is meaningless
    return cfg;
}

/// One flat-plane frame: every pixel sees z = depth in the local frame.
FramePrediction plane_frame(int t, double depth) {
    FramePrediction fp;
    fp.t = t;
    fp.c = 0;
    fp.intrinsics = {10, 10, 4, 3, 8, 6};
    const size_t n = fp.pixel_count();
    fp.pointmap.resize(3 * n);
    fp.confidence.assign(n, 1.0);
    fp.valid.assign(n, 1);
    for (int v = 0; v < fp.height(); ++v) {
        for (int u = 0; u < fp.width(); ++u) {
            fp.set_point(u, v, unproject(Vec2(u, v), depth, Pose::identity(),
                                         fp.intrinsics));
        }
    }
    return fp;
}

struct VecSource final : SubmapSource {
    std::vector<SubmapPrediction> submaps;
    int submap_count() const override { return static_cast<int>(submaps.size()); }

protected:
    SubmapPrediction load_impl(int k) override { return submaps[size_t(k)]; }
};

} // namespace

TEST_CASE("strategy names roundtrip; unknown names are rejected") {
    for (Strategy s : {Strategy::Talo, Strategy::Sim3, Strategy::Sl4, Strategy::None}) {
        CHECK(strategy_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(strategy_from_string("fancy"), Error);
}

TEST_CASE("config validation rejects out-of-range parameters") {
    PipelineConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.new_per_submap = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.rte_gap = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.conf_percentile = 101;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = small_config();
    cfg.overlap = 5; // O > L for the synthetic stream
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("config: JSON file parsing with defaults and seed fallback") {
    TempDir dir("config");
    const fs::path p = dir.path / "cfg.json";
    {
        std::ofstream os(p);
        os << R"({"strategy": "sim3", "L": 3, "O": 1, "lambda": 0.25,
                  "seed": 42, "streaming": true,
                  "scene": {"n_frames": 12, "extent": 30.0},
                  "distortion": {"regime": "case3", "amplitude": 0.07}})";
    }
    const PipelineConfig cfg = config_from_json_file(p);
    CHECK(cfg.strategy == Strategy::Sim3);
    CHECK(cfg.new_per_submap == 3);
    CHECK(cfg.overlap == 1);
    CHECK(cfg.lambda == 0.25);
    CHECK(cfg.streaming);
    CHECK(cfg.scene.n_frames == 12);
    CHECK(cfg.scene.extent == 30.0);
    CHECK(cfg.scene.n_cameras == 3); // untouched default
    CHECK(cfg.scene.seed == 42);     // falls back to the top-level seed
    CHECK(cfg.distortion.regime == DistortionRegime::Case3);
    CHECK(cfg.distortion.amplitude == 0.07);

    // Malformed JSON and missing files are structured errors.
    const fs::path bad = dir.path / "bad.json";
    {
        std::ofstream os(bad);
        os << "{not json";
    }
    CHECK_THROWS_AS(config_from_json_file(bad), Error);
    CHECK_THROWS_AS(config_from_json_file(dir.path / "missing.json"), Error);
}

TEST_CASE("pipeline: exact predictions align to ground truth; 'none' does not") {
    PipelineConfig cfg = small_config(3);
    cfg.strategy = Strategy::Talo;
    const PipelineResult talo = run_pipeline(cfg);
    CHECK(talo.failure_reason.empty());
    CHECK(talo.report.ate_rmse < 1e-9);
    CHECK(talo.report.chamfer < 1e-9);
    CHECK(!talo.report.failed);
    // Exact data leaves nothing for the deformation stage to correct.
    for (const auto& m : talo.models) CHECK(m.is_identity());

    cfg.strategy = Strategy::None;
    const PipelineResult none = run_pipeline(cfg);
    CHECK(none.report.ate_rmse > 1e-3);
}

TEST_CASE("pipeline: online contract, each submap is loaded once, in order") {
    PipelineConfig cfg = small_config(4);
    const SyntheticScene scene = generate_scene(cfg.scene);
    auto source = make_synth_source(scene, cfg);
    const PipelineResult res = run_pipeline(cfg, *source, &scene);
    CHECK(res.failure_reason.empty());
    const std::vector<int> expected = {0, 1, 2, 3};
    CHECK(source->access_log() == expected);
}

TEST_CASE("pipeline: bundle directory input reproduces the in-memory run") {
    TempDir dir("bundles");
    PipelineConfig cfg = small_config(5);
    cfg.output = dir.path.string();
    synthesize_bundles(cfg);
    CHECK(fs::exists(dir.path / "submap_000"));
    CHECK(fs::exists(dir.path / "ground_truth.json"));

    const GroundTruth gt = load_ground_truth(dir.path / "ground_truth.json");
    CHECK(gt.scene_params.n_frames == cfg.scene.n_frames);
    CHECK(gt.frame_rate == cfg.frame_rate);

    PipelineConfig run_cfg = small_config(5);
    run_cfg.input = dir.path.string();
    const PipelineResult from_disk = run_pipeline(run_cfg);
    // float32 serialization costs ~1e-7 relative accuracy, not more.
    CHECK(from_disk.report.ate_rmse < 1e-4);
    CHECK(from_disk.report.chamfer < 1e-4);

    auto source = make_dir_source(dir.path);
    CHECK(source->submap_count() == 4);
}

TEST_CASE("pipeline: byte-identical artifacts across repeated runs") {
    TempDir a("det_a"), b("det_b");
    PipelineConfig cfg = small_config(6);
    cfg.distortion.regime = DistortionRegime::Case3;
    cfg.distortion.amplitude = 0.05;
    cfg.lambda = 0.01;
    cfg.output = a.path.string();
    run_pipeline(cfg);
    cfg.output = b.path.string();
    run_pipeline(cfg);
    for (const char* name : {"report.csv", "trajectory.tum", "cloud.ply",
                             "control_points.csv"}) {
        CAPTURE(name);
        REQUIRE(fs::exists(a.path / name));
        CHECK(slurp(a.path / name) == slurp(b.path / name));
    }
}

TEST_CASE("pipeline: streaming refits converge to the batch result") {
    PipelineConfig cfg = small_config(7);
    cfg.distortion.regime = DistortionRegime::Case3;
    cfg.distortion.amplitude = 0.05;
    cfg.lambda = 0.01;
    const PipelineResult batch = run_pipeline(cfg);
    cfg.streaming = true;
    const PipelineResult streamed = run_pipeline(cfg);
    CHECK(batch.report.csv_row() == streamed.report.csv_row());
    REQUIRE(batch.models.size() == streamed.models.size());
    for (size_t k = 0; k < batch.models.size(); ++k) {
        CHECK((batch.models[k].affine - streamed.models[k].affine).norm() == 0.0);
        CHECK((batch.models[k].offset - streamed.models[k].offset).norm() == 0.0);
        CHECK((batch.models[k].weights - streamed.models[k].weights).norm() == 0.0);
    }
}

TEST_CASE("pipeline: coplanar geometry fails SL(4) as a recorded failure") {
    auto source = std::make_unique<VecSource>();
    SubmapPrediction s0;
    s0.submap_index = 0;
    s0.frames.push_back(plane_frame(0, 5.0));
    SubmapPrediction s1;
    s1.submap_index = 1;
    s1.overlap_count = 1;
    s1.frames.push_back(plane_frame(0, 5.0));
    s1.frames.push_back(plane_frame(1, 5.0));
    source->submaps = {s0, s1};

    PipelineConfig cfg;
    cfg.strategy = Strategy::Sl4;
    cfg.new_per_submap = 1;
    cfg.overlap = 1;
    cfg.conf_percentile = 0;
    cfg.scene.n_frames = 2;
    cfg.scene.n_cameras = 1;
    const PipelineResult res = run_pipeline(cfg, *source, nullptr);
    CHECK(!res.failure_reason.empty());
    CHECK(res.report.failed);
    CHECK(res.failure_reason.find("degenerate") != std::string::npos);
    // The run still yields a usable partial trajectory, never a crash.
    CHECK(!res.trajectory.empty());
}

TEST_CASE("pipeline: errors carry the submap index and stage name") {
    auto source = std::make_unique<VecSource>();
    SubmapPrediction s0;
    s0.submap_index = 0;
    s0.frames.push_back(plane_frame(0, 5.0));
    SubmapPrediction s1; // no shared timestamps
    s1.submap_index = 1;
    s1.frames.push_back(plane_frame(5, 5.0));
    source->submaps = {s0, s1};
    PipelineConfig cfg;
    cfg.strategy = Strategy::Sim3;
    cfg.new_per_submap = 1;
    cfg.overlap = 1;
    cfg.conf_percentile = 0;
    cfg.scene.n_frames = 2;
    cfg.scene.n_cameras = 1;
    try {
        run_pipeline(cfg, *source, nullptr);
        FAIL("expected a stage-tagged error");
    } catch (const Error& e) {
        const std::string what = e.what();
        CHECK(what.find("submap 1") != std::string::npos);
        CHECK(what.find("register") != std::string::npos);
    }
}

TEST_CASE("TUM rows: identity pose and frame timestamps at the frame rate") {
    TempDir dir("tum");
    const fs::path p = dir.path / "traj.tum";
    std::vector<Pose> traj(4, Pose::identity());
    traj[3].rotation = rot_z(0.5);
    traj[3].translation = Vec3(1, 2, 3);
    export_trajectory(traj, p, 2.0);

    std::ifstream is(p);
    std::string line;
    std::getline(is, line);
    CHECK(line == "0.000000 0 0 0 0 0 0 1");
    std::getline(is, line);
    CHECK(line.rfind("0.500000 ", 0) == 0);
    std::getline(is, line);
    std::getline(is, line);
    CHECK(line.rfind("1.500000 1 2 3 ", 0) == 0); // frame 3 at 2 Hz

    const auto back = import_trajectory(p);
    REQUIRE(back.size() == traj.size());
    for (size_t i = 0; i < traj.size(); ++i) {
        CHECK((back[i].rotation - traj[i].rotation).norm() < 1e-9);
        CHECK((back[i].translation - traj[i].translation).norm() < 1e-9);
    }
    CHECK_THROWS_AS(export_trajectory({}, p, 2.0), Error);
    CHECK_THROWS_AS(import_trajectory(dir.path / "missing.tum"), Error);

    // Corrupt row: too few columns.
    {
        std::ofstream os(p);
        os << "0.0 1 2 3\n";
    }
    CHECK_THROWS_AS(import_trajectory(p), Error);
}

TEST_CASE("TUM rows: quaternion is written with non-negative w") {
    TempDir dir("tumw");
    const fs::path p = dir.path / "traj.tum";
    // Rotation by ~350 degrees: the shortest-arc quaternion has negative w
    // unless canonicalized.
    std::vector<Pose> traj = {{rot_z(350.0 * M_PI / 180.0), Vec3::Zero()},
                              {rot_z(0.1), Vec3::Zero()}, {rot_z(0.2), Vec3::Zero()}};
    export_trajectory(traj, p, 2.0);
    std::ifstream is(p);
    std::string line;
    while (std::getline(is, line)) {
        const double qw = std::stod(line.substr(line.rfind(' ') + 1));
        CHECK(qw >= 0.0);
    }
}

TEST_CASE("PLY: binary roundtrip is bit-exact") {
    TempDir dir("ply");
    const fs::path p = dir.path / "cloud.ply";
    std::vector<ColoredPoint> cloud;
    for (int i = 0; i < 257; ++i) {
        ColoredPoint cp;
        cp.position = Vec3(0.25 * i, -1.5 * i, float(i) / 7.0f);
        cp.r = uint8_t(i % 256);
        cp.g = uint8_t((3 * i) % 256);
        cp.b = uint8_t((7 * i) % 256);
        cloud.push_back(cp);
    }
    export_ply(cloud, p);
    const auto back = import_ply(p);
    REQUIRE(back.size() == cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        CHECK(float(back[i].position.x()) == float(cloud[i].position.x()));
        CHECK(float(back[i].position.y()) == float(cloud[i].position.y()));
        CHECK(float(back[i].position.z()) == float(cloud[i].position.z()));
        CHECK(back[i].r == cloud[i].r);
        CHECK(back[i].g == cloud[i].g);
        CHECK(back[i].b == cloud[i].b);
    }
    // Header is the documented binary little-endian 1.0 layout.
    std::ifstream is(p, std::ios::binary);
    std::string l1, l2;
    std::getline(is, l1);
    std::getline(is, l2);
    CHECK(l1 == "ply");
    CHECK(l2 == "format binary_little_endian 1.0");
    CHECK_THROWS_AS(export_ply({}, p), Error);
    // Truncated payload is a parse error.
    fs::resize_file(p, fs::file_size(p) - 5);
    CHECK_THROWS_AS(import_ply(p), Error);
}

TEST_CASE("pipeline: metric_scale pins the scale correction to 1") {
    PipelineConfig cfg = small_config(8);
    cfg.metric_scale = true;
    const PipelineResult res = run_pipeline(cfg);
    for (const auto& st : res.transforms) {
        CHECK(st.scale_correction == 1.0);
    }
    CHECK(res.report.ate_rmse < 1e-9);
}
