#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "talo/geometry.hpp"

namespace talo {

/// One camera's prediction for one timestamp: intrinsics, camera-to-submap
/// pose, a pixel-aligned pointmap in the submap frame, per-pixel confidence,
/// and a validity mask (false for sky / missing geometry).
struct FramePrediction {
    int t = 0; // frame (timestamp) index
    int c = 0; // camera index
    Intrinsics intrinsics;
    Pose pose; // camera -> submap frame
    // Row-major H*W grids; pointmap packs xyz per pixel.
    std::vector<double> pointmap;   // 3 * H * W
    std::vector<double> confidence; // H * W
    std::vector<uint8_t> valid;     // H * W, 0/1

    int width() const { return intrinsics.width; }
    int height() const { return intrinsics.height; }
    size_t pixel_count() const { return static_cast<size_t>(width()) * height(); }

    size_t pix(int u, int v) const {
        return static_cast<size_t>(v) * width() + u;
    }
    Vec3 point_at(int u, int v) const {
        const size_t i = 3 * pix(u, v);
        return Vec3(pointmap[i], pointmap[i + 1], pointmap[i + 2]);
    }
    void set_point(int u, int v, const Vec3& p) {
        const size_t i = 3 * pix(u, v);
        pointmap[i] = p.x();
        pointmap[i + 1] = p.y();
        pointmap[i + 2] = p.z();
    }
    bool valid_at(int u, int v) const { return valid[pix(u, v)] != 0; }
    bool in_bounds(int u, int v) const {
        return u >= 0 && u < width() && v >= 0 && v < height();
    }

    void check_shapes() const;
};

/// All frames of one submap, in (t, c) order.
struct SubmapPrediction {
    int submap_index = 0;
    int overlap_count = 0; // O
    std::vector<FramePrediction> frames;

    const FramePrediction* find(int t, int c) const;
    std::vector<int> timestamps() const; // sorted unique
    /// Reference-camera (c = 0) frame for a timestamp; throws if absent.
    const FramePrediction& reference_frame(int t) const;
};

struct StreamConfig {
    int total_frames = 0;       // T
    int cameras = 1;            // C
    int new_per_submap = 2;     // L
    int overlap = 2;            // O

    void validate() const;
};

/// Timestamp coverage per submap. Submap 0 covers [0, L-1]; submap k > 0
/// covers [kL - O, (k+1)L - 1]. A short tail (T not a multiple of L) is
/// folded into the final submap.
std::vector<std::vector<int>> segment_stream(const StreamConfig& cfg);

/// Re-derives the valid mask, keeping pixels whose confidence is strictly
/// above the given percentile of confidences over currently valid pixels.
std::vector<uint8_t> confidence_filter(const FramePrediction& fp, double percentile);

/// Bundle directory format: manifest.json plus headerless little-endian
/// binary32 tensors (row, column, channel order) and one-byte masks.
void save_bundle(const SubmapPrediction& sp, const std::filesystem::path& dir);
SubmapPrediction load_bundle(const std::filesystem::path& dir);

} // namespace talo
