#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "talo/registration.hpp"
#include "talo/synth.hpp"

using namespace talo;

namespace {

SceneParams small_params(uint64_t seed = 1) {
    SceneParams p;
    p.seed = seed;
    p.n_points = 1000;
    p.extent = 50.0;
    p.n_frames = 8;
    p.n_cameras = 2;
    p.width = 32;
    p.height = 24;
    return p;
}

bool on_ground(const SyntheticScene& scene, const Vec3& p, double tol) {
    return std::abs(p.z()) < tol && std::abs(p.x()) <= scene.ground_half_size + tol &&
           std::abs(p.y()) <= scene.ground_half_size + tol;
}

bool on_box(const Box& b, const Vec3& p, double tol) {
    for (int a = 0; a < 3; ++a) {
        if (p(a) < b.lo(a) - tol || p(a) > b.hi(a) + tol) return false;
    }
    double face = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        face = std::min(face, std::abs(p(a) - b.lo(a)));
        face = std::min(face, std::abs(p(a) - b.hi(a)));
    }
    return face < tol;
}

double camera_depth(const FramePrediction& fp, int u, int v) {
    return fp.pose.inverse().apply(fp.point_at(u, v)).z();
}

} // namespace

TEST_CASE("generate_scene: deterministic for a fixed seed") {
    const SyntheticScene a = generate_scene(small_params(7));
    const SyntheticScene b = generate_scene(small_params(7));
    REQUIRE(a.frame_count() == b.frame_count());
    for (int t = 0; t < a.frame_count(); ++t) {
        CHECK((a.gt_trajectory[t].matrix() - b.gt_trajectory[t].matrix()).norm() == 0.0);
    }
    REQUIRE(a.boxes.size() == b.boxes.size());
    for (size_t i = 0; i < a.boxes.size(); ++i) {
        CHECK((a.boxes[i].lo - b.boxes[i].lo).norm() == 0.0);
        CHECK((a.boxes[i].hi - b.boxes[i].hi).norm() == 0.0);
    }
    REQUIRE(a.surface_points.size() == b.surface_points.size());
    for (size_t i = 0; i < a.surface_points.size(); ++i) {
        CHECK((a.surface_points[i] - b.surface_points[i]).norm() == 0.0);
    }
    // Different seeds give different worlds.
    const SyntheticScene c = generate_scene(small_params(8));
    CHECK((a.boxes[0].lo - c.boxes[0].lo).norm() > 0.0);
}

TEST_CASE("generate_scene: trajectory length is commensurate with the extent") {
    for (uint64_t seed : {1, 2, 3}) {
        SceneParams p = small_params(seed);
        const SyntheticScene scene = generate_scene(p);
        double len = 0;
        for (int t = 1; t < scene.frame_count(); ++t) {
            len += (scene.gt_trajectory[t].translation -
                    scene.gt_trajectory[t - 1].translation).norm();
        }
        CHECK(len > 0.5 * p.extent);
        CHECK(len < 2.0 * p.extent);
        // Path stays at walking height above the ground plane.
        for (const auto& pose : scene.gt_trajectory) {
            CHECK(pose.translation.z() == doctest::Approx(1.6));
            CHECK(pose.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("generate_scene: parameter validation") {
    SceneParams p = small_params();
    p.n_points = 10;
    CHECK_THROWS_AS(generate_scene(p), Error);
    p = small_params();
    p.n_cameras = 0;
    CHECK_THROWS_AS(generate_scene(p), Error);
    p = small_params();
    p.n_frames = 0;
    CHECK_THROWS_AS(generate_scene(p), Error);
}

TEST_CASE("generate_scene: monocular rig is supported") {
    SceneParams p = small_params();
    p.n_cameras = 1;
    const SyntheticScene scene = generate_scene(p);
    CHECK(scene.camera_count() == 1);
    const SubmapPrediction sp = render_submap(scene, {0, 1}, {}, 0);
    CHECK(sp.frames.size() == 2);
}

TEST_CASE("render_submap: regime none puts every valid point on scene geometry") {
    const SyntheticScene scene = generate_scene(small_params(3));
    const SubmapPrediction sp = render_submap(scene, {0, 1}, {}, 0);
    const Pose world_from_local = scene.camera_pose(0, 0);
    size_t checked = 0;
    for (const auto& fp : sp.frames) {
        for (int v = 0; v < fp.height(); ++v) {
            for (int u = 0; u < fp.width(); ++u) {
                if (!fp.valid_at(u, v)) continue;
                const Vec3 world = world_from_local.apply(fp.point_at(u, v));
                bool hit = on_ground(scene, world, 1e-9);
                for (const Box& b : scene.boxes) hit = hit || on_box(b, world, 1e-9);
                CHECK(hit);
                ++checked;
            }
        }
    }
    // Visibility floor: at least 20% of pixels see geometry.
    CHECK(checked >= sp.frames.size() * sp.frames[0].pixel_count() / 5);
    // Exact predictions carry full confidence.
    for (const auto& fp : sp.frames) {
        for (size_t i = 0; i < fp.confidence.size(); ++i) {
            if (fp.valid[i]) CHECK(fp.confidence[i] == 1.0);
        }
    }
}

TEST_CASE("render_submap: local frame is the submap's first camera") {
    const SyntheticScene scene = generate_scene(small_params(4));
    const SubmapPrediction sp = render_submap(scene, {2, 3}, {}, 1);
    const FramePrediction& first = *sp.find(2, 0);
    CHECK((first.pose.matrix() - Mat4::Identity()).norm() < 1e-12);
    // Other frames carry the correct relative motion.
    const Pose expected =
        scene.camera_pose(2, 0).inverse() * scene.camera_pose(3, 1);
    const FramePrediction& other = *sp.find(3, 1);
    CHECK((other.pose.matrix() - expected.matrix()).norm() < 1e-9);
}

TEST_CASE("render_submap: deterministic and validated") {
    const SyntheticScene scene = generate_scene(small_params(5));
    DistortionSpec spec;
    spec.regime = DistortionRegime::Case3;
    spec.amplitude = 0.1;
    const SubmapPrediction a = render_submap(scene, {0, 1}, spec, 0);
    const SubmapPrediction b = render_submap(scene, {0, 1}, spec, 0);
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].pointmap == b.frames[i].pointmap);
        CHECK(a.frames[i].confidence == b.frames[i].confidence);
        CHECK(a.frames[i].valid == b.frames[i].valid);
    }
    CHECK_THROWS_AS(render_submap(scene, {}, spec, 0), Error);
    CHECK_THROWS_AS(render_submap(scene, {99}, spec, 0), Error);
}

TEST_CASE("case 1: scale applies to depths and pose translations alike") {
    const SyntheticScene scene = generate_scene(small_params(6));
    DistortionSpec spec;
    spec.regime = DistortionRegime::Case1;
    spec.case1_scales = {2.0, 1.0};
    const SubmapPrediction clean = render_submap(scene, {0, 1}, {}, 0);
    const SubmapPrediction scaled = render_submap(scene, {0, 1}, spec, 0);
    for (size_t i = 0; i < clean.frames.size(); ++i) {
        CHECK((scaled.frames[i].pose.translation -
               2.0 * clean.frames[i].pose.translation).norm() < 1e-9);
        CHECK((scaled.frames[i].pose.rotation - clean.frames[i].pose.rotation).norm() <
              1e-12);
        for (int v = 0; v < clean.frames[i].height(); ++v) {
            for (int u = 0; u < clean.frames[i].width(); ++u) {
                if (!clean.frames[i].valid_at(u, v)) continue;
                CHECK((scaled.frames[i].point_at(u, v) -
                       2.0 * clean.frames[i].point_at(u, v)).norm() < 1e-9);
            }
        }
    }
}

TEST_CASE("case 1: the scale estimator recovers s = 2 from the overlap poses") {
    const SyntheticScene scene = generate_scene(small_params(6));
    DistortionSpec spec;
    spec.regime = DistortionRegime::Case1;
    spec.case1_scales = {2.0, 1.0};
    const SubmapPrediction prev = render_submap(scene, {0, 1}, spec, 0);
    const SubmapPrediction curr = render_submap(scene, {0, 1, 2, 3}, spec, 1);
    std::vector<Pose> prev_poses, curr_poses;
    for (int t : {0, 1}) {
        prev_poses.push_back(prev.reference_frame(t).pose);
        curr_poses.push_back(curr.reference_frame(t).pose);
    }
    CHECK(estimate_inter_submap_scale(prev_poses, curr_poses) ==
          doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("case 1: drawn scales are deterministic and respect the range") {
    DistortionSpec spec;
    spec.regime = DistortionRegime::Case1;
    spec.scale_min = 0.5;
    spec.scale_max = 2.0;
    for (int k = 0; k < 10; ++k) {
        const double s = spec.case1_scale(k, 99);
        CHECK(s >= 0.5);
        CHECK(s <= 2.0);
        CHECK(s == spec.case1_scale(k, 99));
    }
    CHECK(spec.case1_scale(0, 99) != spec.case1_scale(1, 99));
    spec.case1_scales = {3.0, 4.0};
    CHECK(spec.case1_scale(0, 99) == 3.0);
    CHECK(spec.case1_scale(1, 99) == 4.0);
}

TEST_CASE("case 2: focal perturbation shrinks lateral coordinates, flips by parity") {
    const SyntheticScene scene = generate_scene(small_params(7));
    DistortionSpec spec;
    spec.regime = DistortionRegime::Case2;
    spec.intrinsics_delta = 0.05;
    const SubmapPrediction clean = render_submap(scene, {0, 1}, {}, 0);
    const SubmapPrediction even = render_submap(scene, {0, 1}, spec, 0);
    const SubmapPrediction odd = render_submap(scene, {0, 1}, spec, 1);
    CHECK(even.frames[0].intrinsics.fx ==
          doctest::Approx(1.05 * scene.intrinsics.fx).epsilon(1e-12));
    CHECK(odd.frames[0].intrinsics.fx ==
          doctest::Approx(0.95 * scene.intrinsics.fx).epsilon(1e-12));
    // Depth is untouched; camera-frame x and y scale by 1 / (1 + delta).
    const auto& cf = clean.frames[0];
    const auto& ef = even.frames[0];
    for (int v = 0; v < cf.height(); v += 5) {
        for (int u = 0; u < cf.width(); u += 5) {
            if (!cf.valid_at(u, v)) continue;
            CHECK(camera_depth(ef, u, v) ==
                  doctest::Approx(camera_depth(cf, u, v)).epsilon(1e-9));
            const Vec3 c_cam = cf.pose.inverse().apply(cf.point_at(u, v));
            const Vec3 e_cam = ef.pose.inverse().apply(ef.point_at(u, v));
            CHECK(e_cam.x() == doctest::Approx(c_cam.x() / 1.05).epsilon(1e-9));
            CHECK(e_cam.y() == doctest::Approx(c_cam.y() / 1.05).epsilon(1e-9));
        }
    }
}

TEST_CASE("case 3: sinusoidal depth field with per-submap phases") {
    const SyntheticScene scene = generate_scene(small_params(8));
    DistortionSpec spec;
    spec.regime = DistortionRegime::Case3;
    spec.amplitude = 0.05;
    const SubmapPrediction clean = render_submap(scene, {0, 1}, {}, 0);
    const SubmapPrediction warped = render_submap(scene, {0, 1}, spec, 0);

    // Depth ratio stays within 1 +/- alpha and matches the separable form:
    // (r(u, v1) - 1) / (r(u, v2) - 1) is independent of u.
    const auto& cf = clean.frames[0];
    const auto& wf = warped.frames[0];
    double ref_ratio = 0;
    bool have_ref = false;
    for (int u = 0; u < cf.width(); ++u) {
        double num = 0, den = 0;
        bool ok = true;
        const int v1 = 15, v2 = 20;
        if (!cf.valid_at(u, v1) || !cf.valid_at(u, v2)) continue;
        num = camera_depth(wf, u, v1) / camera_depth(cf, u, v1) - 1.0;
        den = camera_depth(wf, u, v2) / camera_depth(cf, u, v2) - 1.0;
        CHECK(std::abs(num) <= 0.05 + 1e-9);
        CHECK(std::abs(den) <= 0.05 + 1e-9);
        if (std::abs(den) < 1e-4) ok = false;
        if (!ok) continue;
        const double ratio = num / den;
        if (!have_ref) {
            ref_ratio = ratio;
            have_ref = true;
        } else {
            CHECK(ratio == doctest::Approx(ref_ratio).epsilon(1e-6));
        }
    }
    CHECK(have_ref);

    // Confidence encodes the relative depth error.
    for (int v = 0; v < cf.height(); v += 7) {
        for (int u = 0; u < cf.width(); u += 7) {
            if (!cf.valid_at(u, v)) continue;
            const double r = camera_depth(wf, u, v) / camera_depth(cf, u, v);
            CHECK(wf.confidence[wf.pix(u, v)] ==
                  doctest::Approx(1.0 - std::abs(r - 1.0)).epsilon(1e-9));
        }
    }

    // A different submap index draws different phases.
    const SubmapPrediction other = render_submap(scene, {0, 1}, spec, 1);
    double max_diff = 0;
    const auto& of = other.frames[0];
    for (int v = 0; v < cf.height(); ++v) {
        for (int u = 0; u < cf.width(); ++u) {
            if (!cf.valid_at(u, v)) continue;
            const double a = camera_depth(wf, u, v) / camera_depth(cf, u, v);
            const double b = camera_depth(of, u, v) / camera_depth(cf, u, v);
            max_diff = std::max(max_diff, std::abs(a - b));
        }
    }
    CHECK(max_diff > 1e-3);
}

TEST_CASE("per-submap jitter is a rigid gauge change of the local frame") {
    const SyntheticScene scene = generate_scene(small_params(9));
    DistortionSpec spec;
    spec.jitter_rotation_deg = 2.0;
    spec.jitter_translation = 0.5;
    const SubmapPrediction plain = render_submap(scene, {0, 1}, {}, 0);
    const SubmapPrediction jittered = render_submap(scene, {0, 1}, spec, 0);
    // The jitter moves the frame: poses differ...
    CHECK((plain.frames[0].pose.matrix() - jittered.frames[0].pose.matrix()).norm() >
          1e-6);
    // ...but all within-submap structure is preserved: point-to-point
    // distances and point-to-camera relations are identical.
    const auto& pf = plain.frames[0];
    const auto& jf = jittered.frames[0];
    REQUIRE(pf.valid_at(5, 20));
    REQUIRE(pf.valid_at(20, 18));
    const Vec3 pa = pf.point_at(5, 20), pb = pf.point_at(20, 18);
    const Vec3 ja = jf.point_at(5, 20), jb = jf.point_at(20, 18);
    CHECK((pa - pb).norm() == doctest::Approx((ja - jb).norm()).epsilon(1e-9));
    CHECK((pf.pose.inverse().apply(pa) - jf.pose.inverse().apply(ja)).norm() < 1e-9);
}

TEST_CASE("overlap consistency: registration aligns exact consecutive submaps") {
    const SyntheticScene scene = generate_scene(small_params(10));
    const SubmapPrediction prev = render_submap(scene, {0, 1}, {}, 0);
    const SubmapPrediction curr = render_submap(scene, {0, 1, 2, 3}, {}, 1);
    std::vector<Pose> prev_poses, curr_poses;
    for (int t : {0, 1}) {
        prev_poses.push_back(prev.reference_frame(t).pose);
        curr_poses.push_back(curr.reference_frame(t).pose);
    }
    const Pose h = pairwise_registration(prev_poses, curr_poses);
    const SubmapPrediction moved = apply_to_submap(curr, {1, 1.0, h});
    for (int t : {0, 1}) {
        for (int c = 0; c < scene.camera_count(); ++c) {
            const auto* a = prev.find(t, c);
            const auto* b = moved.find(t, c);
            REQUIRE(a);
            REQUIRE(b);
            for (int v = 0; v < a->height(); v += 3) {
                for (int u = 0; u < a->width(); u += 3) {
                    if (!a->valid_at(u, v) || !b->valid_at(u, v)) continue;
                    CHECK((a->point_at(u, v) - b->point_at(u, v)).norm() < 1e-9);
                }
            }
        }
    }
}

TEST_CASE("render_gt_frame: world-frame pointmap sits on the scene geometry") {
    const SyntheticScene scene = generate_scene(small_params(11));
    const FramePrediction fp = render_gt_frame(scene, 3, 1);
    CHECK((fp.pose.matrix() - scene.camera_pose(3, 1).matrix()).norm() == 0.0);
    for (int v = 0; v < fp.height(); v += 4) {
        for (int u = 0; u < fp.width(); u += 4) {
            if (!fp.valid_at(u, v)) continue;
            const Vec3 p = fp.point_at(u, v);
            bool hit = on_ground(scene, p, 1e-9);
            for (const Box& b : scene.boxes) hit = hit || on_box(b, p, 1e-9);
            CHECK(hit);
        }
    }
}
