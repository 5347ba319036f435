#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "talo/geometry.hpp"
#include "talo/prediction.hpp"

namespace talo {

struct VoxelIndex {
    int64_t x = 0, y = 0, z = 0;
    auto operator<=>(const VoxelIndex&) const = default;
};

VoxelIndex voxel_index_of(const Vec3& p, const Vec3& origin, double cell_size);

struct PixelAnchor {
    int t = 0;
    int c = 0;
    int u = 0;
    int v = 0;
};

struct AnchoredPoint {
    Vec3 point = Vec3::Zero();
    PixelAnchor anchor;
};

/// One observation of a control point in a particular submap.
struct Observation {
    Vec3 point = Vec3::Zero(); // global frame
    PixelAnchor anchor;        // pixel the observation was read from
};

/// A tracked world location with one observation per submap it survives in.
struct ControlPoint {
    int id = 0;
    std::map<int, Observation> observations; // submap index -> observation
    bool alive = true;
};

/// Uniform grid over the input points with origin at their componentwise
/// minimum. One representative per occupied voxel not in `blocked`: the
/// input point closest to the voxel center. Ties keep the earliest input.
struct VoxelSelection {
    Vec3 origin = Vec3::Zero();
    std::vector<AnchoredPoint> selected;
};
VoxelSelection voxel_generate(const std::vector<AnchoredPoint>& points, double cell_size,
                              const std::set<VoxelIndex>& blocked = {});

/// 5% of the submap point-cloud radius (max valid-point distance to centroid).
double control_voxel_size(const SubmapPrediction& sp, double voxel_ratio = 0.05);

struct ControlPool {
    std::vector<ControlPoint> points;
    int next_id = 0;
};

/// Instantiates new control points from the previous submap's valid overlap
/// pointmap entries (one per unblocked voxel), seeding each with its
/// observation in both submaps via the shared anchor pixel. Both submaps must
/// already be in the global frame.
std::vector<size_t> seed_overlap_controls(const SubmapPrediction& prev_global,
                                                 const SubmapPrediction& curr_global,
                                                 const std::vector<int>& overlap_timestamps,
                                                 ControlPool& pool, double cell_size);

/// Carries a control point's submap-k observation into submap k+1 by
/// projecting it into the overlap images of submap k and transporting it by
/// the two submaps' pointmap discrepancy at the winning pixel. Terminates the
/// track (alive = false) when no projection passes the consistency gate.
void propagate(ControlPoint& cp, int k, const SubmapPrediction& curr_global,
               const SubmapPrediction& next_global,
               const std::vector<int>& overlap_timestamps, double reproj_tolerance);

/// Debug CSV: id, k, x, y, z, t, c, u, v — one row per observation.
void dump_pool_csv(const ControlPool& pool, std::ostream& os);

} // namespace talo
