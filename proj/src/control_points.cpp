#include "talo/control_points.hpp"

#include <cmath>
#include <limits>
#include <ostream>

namespace talo {

VoxelIndex voxel_index_of(const Vec3& p, const Vec3& origin, double cell_size) {
    return {static_cast<int64_t>(std::floor((p.x() - origin.x()) / cell_size)),
            static_cast<int64_t>(std::floor((p.y() - origin.y()) / cell_size)),
            static_cast<int64_t>(std::floor((p.z() - origin.z()) / cell_size))};
}

VoxelSelection voxel_generate(const std::vector<AnchoredPoint>& points, double cell_size,
                              const std::set<VoxelIndex>& blocked) {
    if (points.empty()) {
        throw Error(ErrorKind::EmptyInput, "voxel_generate: no input points");
    }
    if (!(cell_size > 0)) {
        throw Error(ErrorKind::InvalidArgument, "voxel_generate: cell size must be > 0");
    }
    Vec3 origin = points[0].point;
    for (const auto& ap : points) {
        origin = origin.cwiseMin(ap.point);
    }

    struct Best {
        size_t index;
        double dist2;
    };
    std::map<VoxelIndex, Best> best;
    for (size_t i = 0; i < points.size(); ++i) {
        const VoxelIndex v = voxel_index_of(points[i].point, origin, cell_size);
        if (blocked.count(v)) continue;
        const Vec3 center = origin + Vec3(static_cast<double>(v.x) + 0.5,
                                          static_cast<double>(v.y) + 0.5,
                                          static_cast<double>(v.z) + 0.5) *
                                         cell_size;
        const double d2 = (points[i].point - center).squaredNorm();
        auto it = best.find(v);
        if (it == best.end() || d2 < it->second.dist2) {
            best[v] = {i, d2};
        }
    }

    VoxelSelection out;
    out.origin = origin;
    out.selected.reserve(best.size());
    for (const auto& [v, b] : best) {
        out.selected.push_back(points[b.index]);
    }
    return out;
}

double control_voxel_size(const SubmapPrediction& sp, double voxel_ratio) {
    Vec3 centroid = Vec3::Zero();
    size_t n = 0;
    for (const auto& fp : sp.frames) {
        for (int v = 0; v < fp.height(); ++v) {
            for (int u = 0; u < fp.width(); ++u) {
                if (!fp.valid_at(u, v)) continue;
                centroid += fp.point_at(u, v);
                ++n;
            }
        }
    }
    if (n == 0) {
        throw Error(ErrorKind::EmptyInput, "control_voxel_size: submap has no valid points");
    }
    centroid /= static_cast<double>(n);
    double radius = 0;
    for (const auto& fp : sp.frames) {
        for (int v = 0; v < fp.height(); ++v) {
            for (int u = 0; u < fp.width(); ++u) {
                if (!fp.valid_at(u, v)) continue;
                radius = std::max(radius, (fp.point_at(u, v) - centroid).norm());
            }
        }
    }
    return voxel_ratio * radius;
}

std::vector<size_t> seed_overlap_controls(const SubmapPrediction& prev_global,
                                                 const SubmapPrediction& curr_global,
                                                 const std::vector<int>& overlap_timestamps,
                                                 ControlPool& pool, double cell_size) {
    // Candidates: prev's overlap pointmap entries that are valid in both
    // submaps at the same anchor pixel.
    std::vector<AnchoredPoint> candidates;
    for (const auto& fp : prev_global.frames) {
        bool in_overlap = false;
        for (int t : overlap_timestamps) {
            if (fp.t == t) in_overlap = true;
        }
        if (!in_overlap) continue;
        const FramePrediction* curr_fp = curr_global.find(fp.t, fp.c);
        if (!curr_fp) continue;
        for (int v = 0; v < fp.height(); ++v) {
            for (int u = 0; u < fp.width(); ++u) {
                if (!fp.valid_at(u, v)) continue;
                if (!curr_fp->in_bounds(u, v) || !curr_fp->valid_at(u, v)) continue;
                candidates.push_back({fp.point_at(u, v), {fp.t, fp.c, u, v}});
            }
        }
    }
    if (candidates.empty()) return {};

    // Voxels already claimed by live propagated control points stay blocked.
    Vec3 origin = candidates[0].point;
    for (const auto& ap : candidates) origin = origin.cwiseMin(ap.point);
    std::set<VoxelIndex> blocked;
    const int k = curr_global.submap_index;
    for (const auto& cp : pool.points) {
        if (!cp.alive) continue;
        auto it = cp.observations.find(k);
        if (it != cp.observations.end()) {
            blocked.insert(voxel_index_of(it->second.point, origin, cell_size));
        }
    }

    const VoxelSelection sel = voxel_generate(candidates, cell_size, blocked);

    std::vector<size_t> created;
    created.reserve(sel.selected.size());
    for (const auto& ap : sel.selected) {
        const FramePrediction* curr_fp = curr_global.find(ap.anchor.t, ap.anchor.c);
        ControlPoint cp;
        cp.id = pool.next_id++;
        cp.observations[prev_global.submap_index] = {ap.point, ap.anchor};
        cp.observations[k] = {curr_fp->point_at(ap.anchor.u, ap.anchor.v), ap.anchor};
        created.push_back(pool.points.size());
        pool.points.push_back(std::move(cp));
    }
    return created;
}

void propagate(ControlPoint& cp, int k, const SubmapPrediction& curr_global,
               const SubmapPrediction& next_global,
               const std::vector<int>& overlap_timestamps, double reproj_tolerance) {
    if (!cp.alive) return;
    auto it = cp.observations.find(k);
    if (it == cp.observations.end()) {
        throw Error(ErrorKind::InvalidArgument,
                    "propagate: control point has no observation at submap " +
                        std::to_string(k));
    }
    const Vec3 obs = it->second.point;

    bool found = false;
    double best_err = std::numeric_limits<double>::infinity();
    PixelAnchor best_anchor;
    Vec3 best_next = Vec3::Zero();

    // Frames are iterated in (t, c) order, which also breaks exact-error ties
    // deterministically in favor of the lowest (t, c).
    for (const auto& fp : curr_global.frames) {
        bool in_overlap = false;
        for (int t : overlap_timestamps) {
            if (fp.t == t) in_overlap = true;
        }
        if (!in_overlap) continue;
        const FramePrediction* next_fp = next_global.find(fp.t, fp.c);
        if (!next_fp) continue;

        const ProjectionResult pr = project(obs, fp.pose, fp.intrinsics);
        if (pr.behind_camera) continue;
        const int u = static_cast<int>(std::lround(pr.pixel.x()));
        const int v = static_cast<int>(std::lround(pr.pixel.y()));
        if (!fp.in_bounds(u, v)) continue;
        if (!fp.valid_at(u, v) || !next_fp->valid_at(u, v)) continue;

        const double err = (obs - fp.point_at(u, v)).norm();
        if (err >= reproj_tolerance) continue;
        if (err < best_err) {
            best_err = err;
            best_anchor = {fp.t, fp.c, u, v};
            // Transport the tracked location by the inter-submap discrepancy
            // observed at the bridge pixel. Adopting the bridge pixel's point
            // outright would re-anchor the track by up to a pixel footprint
            // per hop, turning consistent submaps into a random walk.
            best_next = obs + (next_fp->point_at(u, v) - fp.point_at(u, v));
            found = true;
        }
    }

    if (!found) {
        cp.alive = false;
        return;
    }
    cp.observations[next_global.submap_index] = {best_next, best_anchor};
}

void dump_pool_csv(const ControlPool& pool, std::ostream& os) {
    os << "id,k,x,y,z,t,c,u,v\n";
    for (const auto& cp : pool.points) {
        for (const auto& [k, obs] : cp.observations) {
            os << cp.id << ',' << k << ',' << obs.point.x() << ',' << obs.point.y()
               << ',' << obs.point.z() << ',' << obs.anchor.t << ',' << obs.anchor.c
               << ',' << obs.anchor.u << ',' << obs.anchor.v << '\n';
        }
    }
}

} // namespace talo
