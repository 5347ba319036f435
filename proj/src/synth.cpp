#include "talo/synth.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace talo {

namespace {

// Deterministic uniforms independent of libstdc++ distribution internals.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
    uint64_t next() { return engine_(); }

private:
    std::mt19937_64 engine_;
};

std::optional<double> ray_box(const Vec3& origin, const Vec3& dir, const Box& box) {
    double tmin = 0.0, tmax = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(dir(a)) < 1e-15) {
            if (origin(a) < box.lo(a) || origin(a) > box.hi(a)) return std::nullopt;
            continue;
        }
        double t0 = (box.lo(a) - origin(a)) / dir(a);
        double t1 = (box.hi(a) - origin(a)) / dir(a);
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return std::nullopt;
    }
    if (tmin <= 1e-9) return std::nullopt;
    return tmin;
}

Mat3 small_rotation(Rng& rng, double max_deg) {
    const double max_rad = max_deg * M_PI / 180.0;
    const Vec3 axis = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1))
                          .normalized();
    return Eigen::AngleAxisd(rng.uniform(-max_rad, max_rad), axis).toRotationMatrix();
}

} // namespace

double DistortionSpec::case1_scale(int submap_index, uint64_t seed) const {
    if (!case1_scales.empty()) {
        return case1_scales[static_cast<size_t>(submap_index) % case1_scales.size()];
    }
    Rng rng(seed * 1000003 + static_cast<uint64_t>(submap_index) * 7919 + 17);
    return rng.uniform(scale_min, scale_max);
}

std::optional<double> SyntheticScene::cast_ray(const Pose& cam_pose, double u,
                                               double v) const {
    // Depth parameterization: P = C + R * d * D with d = ((u-cx)/fx, (v-cy)/fy, 1),
    // so the ray parameter is the camera-frame depth directly.
    const Vec3 d_cam((u - intrinsics.cx) / intrinsics.fx,
                     (v - intrinsics.cy) / intrinsics.fy, 1.0);
    const Vec3 origin = cam_pose.translation;
    const Vec3 dir = cam_pose.rotation * d_cam;

    double best = std::numeric_limits<double>::infinity();
    // Ground plane z = 0, bounded square.
    if (std::abs(dir.z()) > 1e-15) {
        const double t = -origin.z() / dir.z();
        if (t > 1e-9) {
            const Vec3 p = origin + t * dir;
            if (std::abs(p.x()) <= ground_half_size && std::abs(p.y()) <= ground_half_size) {
                best = t;
            }
        }
    }
    for (const Box& box : boxes) {
        const auto t = ray_box(origin, dir, box);
        if (t && *t < best) best = *t;
    }
    if (!std::isfinite(best)) return std::nullopt;
    return best;
}

SyntheticScene generate_scene(const SceneParams& params) {
    if (params.n_points < 1000) {
        throw Error(ErrorKind::InvalidArgument, "generate_scene: n_points must be >= 1000");
    }
    if (params.n_cameras < 1 || params.n_frames < 1) {
        throw Error(ErrorKind::InvalidArgument, "generate_scene: need >= 1 camera and frame");
    }
    Rng rng(params.seed);

    SyntheticScene scene;
    scene.seed = params.seed;
    scene.extent = params.extent;
    scene.ground_half_size = 4.0 * params.extent;

    scene.intrinsics.width = params.width;
    scene.intrinsics.height = params.height;
    scene.intrinsics.fx = 0.8 * params.width;
    scene.intrinsics.fy = 0.8 * params.width;
    scene.intrinsics.cx = params.width / 2.0;
    scene.intrinsics.cy = params.height / 2.0;

    // Piecewise-arc path in the ground plane with bounded curvature; the
    // reference camera faces forward 1.6 m above the ground.
    const double step = params.extent / params.n_frames;
    const double max_curvature = 0.5 / params.extent; // 1/m
    const int segment = 5;
    double heading = 0.0;
    double curvature = 0.0;
    Vec3 position(0, 0, 1.6);
    for (int t = 0; t < params.n_frames; ++t) {
        if (t % segment == 0) {
            curvature = rng.uniform(-max_curvature, max_curvature);
        }
        Pose pose;
        const Vec3 forward(std::cos(heading), std::sin(heading), 0.0);
        const Vec3 right(std::sin(heading), -std::cos(heading), 0.0);
        const Vec3 down(0, 0, -1);
        pose.rotation.col(0) = right;
        pose.rotation.col(1) = down;
        pose.rotation.col(2) = forward;
        pose.translation = position;
        scene.gt_trajectory.push_back(pose);

        heading += curvature * step;
        position += step * Vec3(std::cos(heading), std::sin(heading), 0.0);
    }

    // Surround rig: cameras evenly spread in yaw with small lateral offsets.
    for (int c = 0; c < params.n_cameras; ++c) {
        Pose offset;
        const double yaw = 2.0 * M_PI * c / params.n_cameras;
        offset.rotation = rot_y(yaw);
        offset.translation = Vec3(0.15 * c, 0.0, 0.05 * c);
        scene.rig.push_back(offset);
    }

    // Boxes scattered alongside the path corridor.
    const int n_boxes = 12;
    for (int i = 0; i < n_boxes; ++i) {
        const int t = static_cast<int>(rng.uniform(0, params.n_frames - 1e-9));
        const Pose& ref = scene.gt_trajectory[t];
        const Vec3 forward = ref.rotation.col(2);
        const Vec3 right(forward.y(), -forward.x(), 0.0);
        const double side = (rng.uniform(0, 1) < 0.5) ? -1.0 : 1.0;
        const double lateral = rng.uniform(4.0, 10.0);
        const Vec3 center = Vec3(ref.translation.x(), ref.translation.y(), 0.0) +
                            side * lateral * right + rng.uniform(2.0, 8.0) * forward;
        const double sx = rng.uniform(0.8, 3.0);
        const double sy = rng.uniform(0.8, 3.0);
        const double sz = rng.uniform(1.0, 4.0);
        Box box;
        box.lo = center - Vec3(sx, sy, 0.0);
        box.hi = center + Vec3(sx, sy, 2.0 * sz);
        scene.boxes.push_back(box);
    }

    // Surface samples: ground corridor plus box faces.
    const int ground_samples = params.n_points * 2 / 3;
    for (int i = 0; i < ground_samples; ++i) {
        const int t = static_cast<int>(rng.uniform(0, params.n_frames - 1e-9));
        const Vec3& c = scene.gt_trajectory[t].translation;
        scene.surface_points.emplace_back(c.x() + rng.uniform(-15, 15),
                                          c.y() + rng.uniform(-15, 15), 0.0);
    }
    while (static_cast<int>(scene.surface_points.size()) < params.n_points) {
        const Box& box = scene.boxes[rng.next() % scene.boxes.size()];
        const int face = static_cast<int>(rng.next() % 4); // side faces
        Vec3 p(rng.uniform(box.lo.x(), box.hi.x()), rng.uniform(box.lo.y(), box.hi.y()),
               rng.uniform(box.lo.z(), box.hi.z()));
        if (face == 0) p.x() = box.lo.x();
        if (face == 1) p.x() = box.hi.x();
        if (face == 2) p.y() = box.lo.y();
        if (face == 3) p.y() = box.hi.y();
        scene.surface_points.push_back(p);
    }

    // Visibility invariant: every view must hit geometry on >= 20% of a
    // coarse pixel grid.
    for (int t = 0; t < params.n_frames; ++t) {
        for (int c = 0; c < params.n_cameras; ++c) {
            const Pose cam = scene.camera_pose(t, c);
            int hits = 0, total = 0;
            for (int v = 0; v < params.height; v += 4) {
                for (int u = 0; u < params.width; u += 4) {
                    ++total;
                    if (scene.cast_ray(cam, u, v)) ++hits;
                }
            }
            if (hits * 5 < total) {
                throw Error(ErrorKind::GenerationError,
                            "generate_scene: camera " + std::to_string(c) + " at frame " +
                                std::to_string(t) + " sees only " + std::to_string(hits) +
                                "/" + std::to_string(total) + " geometry samples");
            }
        }
    }
    return scene;
}

namespace {

double distort_depth(double depth, const DistortionSpec& spec, double case1_s,
                     double u, double v, int width, int height, double phase_u,
                     double phase_v) {
    switch (spec.regime) {
        case DistortionRegime::None:
        case DistortionRegime::Case2:
            return depth;
        case DistortionRegime::Case1:
            return case1_s * depth;
        case DistortionRegime::Case3:
            return depth * (1.0 + spec.amplitude *
                                      std::sin(spec.frequency * u / width + phase_u) *
                                      std::cos(spec.frequency * v / height + phase_v));
    }
    return depth;
}

} // namespace

SubmapPrediction render_submap(const SyntheticScene& scene,
                               const std::vector<int>& timestamps,
                               const DistortionSpec& spec, int submap_index) {
    if (timestamps.empty()) {
        throw Error(ErrorKind::InvalidArgument, "render_submap: no timestamps");
    }
    for (int t : timestamps) {
        if (t < 0 || t >= scene.frame_count()) {
            throw Error(ErrorKind::InvalidArgument, "render_submap: timestamp out of range");
        }
    }

    const double case1_s = spec.case1_scale(submap_index, scene.seed);

    Rng rng(scene.seed * 2654435761 + static_cast<uint64_t>(submap_index) * 40503 + 5);
    const double phase_u = rng.uniform(0, 2 * M_PI);
    const double phase_v = rng.uniform(0, 2 * M_PI);

    // Perturbed intrinsics for Case 2, shared across the submap.
    Intrinsics pred_intr = scene.intrinsics;
    if (spec.regime == DistortionRegime::Case2) {
        const double sign = (submap_index % 2 == 0) ? 1.0 : -1.0;
        pred_intr.fx *= 1.0 + sign * spec.intrinsics_delta;
        pred_intr.fy *= 1.0 + sign * spec.intrinsics_delta;
    }

    // Per-submap rigid jitter, applied to poses and points alike.
    Pose jitter;
    if (spec.jitter_rotation_deg > 0 || spec.jitter_translation > 0) {
        jitter.rotation = small_rotation(rng, spec.jitter_rotation_deg);
        jitter.translation = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)) *
                             spec.jitter_translation;
    }

    // Everything is expressed in the frame of the submap's first camera.
    const Pose world_from_local = scene.camera_pose(timestamps.front(), 0);
    const Pose local_from_world = world_from_local.inverse();

    SubmapPrediction sp;
    sp.submap_index = submap_index;
    sp.overlap_count = 0; // set by the caller from the stream config

    for (int t : timestamps) {
        for (int c = 0; c < scene.camera_count(); ++c) {
            const Pose cam_world = scene.camera_pose(t, c);
            Pose cam_local = local_from_world * cam_world;
            if (spec.regime == DistortionRegime::Case1) {
                cam_local.translation *= case1_s;
            }
            cam_local = jitter * cam_local;

            FramePrediction fp;
            fp.t = t;
            fp.c = c;
            fp.intrinsics = pred_intr;
            fp.pose = cam_local;
            const size_t n = fp.pixel_count();
            fp.pointmap.assign(3 * n, 0.0);
            fp.confidence.assign(n, 0.0);
            fp.valid.assign(n, 0);

#pragma omp parallel for schedule(static)
            for (int v = 0; v < fp.height(); ++v) {
                for (int u = 0; u < fp.width(); ++u) {
                    const auto depth = scene.cast_ray(cam_world, u, v);
                    if (!depth) continue;
                    const double d2 = distort_depth(*depth, spec, case1_s, u, v,
                                                    fp.width(), fp.height(), phase_u,
                                                    phase_v);
                    const Vec3 p = unproject(Vec2(u, v), d2, fp.pose, pred_intr);
                    fp.set_point(u, v, p);
                    const size_t i = fp.pix(u, v);
                    fp.valid[i] = 1;
                    fp.confidence[i] = std::clamp(1.0 - std::abs(d2 / *depth - 1.0), 0.0, 1.0);
                }
            }
            sp.frames.push_back(std::move(fp));
        }
    }
    return sp;
}

FramePrediction render_gt_frame(const SyntheticScene& scene, int t, int c) {
    const Pose cam = scene.camera_pose(t, c);
    FramePrediction fp;
    fp.t = t;
    fp.c = c;
    fp.intrinsics = scene.intrinsics;
    fp.pose = cam; // world frame
    const size_t n = fp.pixel_count();
    fp.pointmap.assign(3 * n, 0.0);
    fp.confidence.assign(n, 1.0);
    fp.valid.assign(n, 0);
#pragma omp parallel for schedule(static)
    for (int v = 0; v < fp.height(); ++v) {
        for (int u = 0; u < fp.width(); ++u) {
            const auto depth = scene.cast_ray(cam, u, v);
            if (!depth) continue;
            fp.set_point(u, v, unproject(Vec2(u, v), *depth, cam, scene.intrinsics));
            fp.valid[fp.pix(u, v)] = 1;
        }
    }
    return fp;
}

} // namespace talo
