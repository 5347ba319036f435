#include "talo/prediction.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace talo {

using nlohmann::json;

void FramePrediction::check_shapes() const {
    const size_t n = pixel_count();
    if (pointmap.size() != 3 * n || confidence.size() != n || valid.size() != n) {
        throw Error(ErrorKind::ParseError,
                    "frame (t=" + std::to_string(t) + ", c=" + std::to_string(c) +
                        "): tensor shapes disagree with intrinsics");
    }
    for (size_t i = 0; i < pointmap.size(); ++i) {
        if (valid[i / 3] && !std::isfinite(pointmap[i])) {
            throw Error(ErrorKind::ParseError,
                        "frame (t=" + std::to_string(t) + ", c=" + std::to_string(c) +
                            "): non-finite pointmap entry at valid pixel");
        }
    }
}

const FramePrediction* SubmapPrediction::find(int t, int c) const {
    for (const auto& f : frames) {
        if (f.t == t && f.c == c) return &f;
    }
    return nullptr;
}

std::vector<int> SubmapPrediction::timestamps() const {
    std::set<int> ts;
    for (const auto& f : frames) ts.insert(f.t);
    return std::vector<int>(ts.begin(), ts.end());
}

const FramePrediction& SubmapPrediction::reference_frame(int t) const {
    const FramePrediction* f = find(t, 0);
    if (!f) {
        throw Error(ErrorKind::InvalidArgument,
                    "submap " + std::to_string(submap_index) +
                        ": missing reference camera for t=" + std::to_string(t));
    }
    return *f;
}

void StreamConfig::validate() const {
    if (total_frames < 1 || cameras < 1 || new_per_submap < 1 || overlap < 1 ||
        overlap > new_per_submap || new_per_submap > total_frames) {
        throw Error(ErrorKind::InvalidArgument,
                    "stream config must satisfy 1 <= O <= L <= T and C >= 1");
    }
}

std::vector<std::vector<int>> segment_stream(const StreamConfig& cfg) {
    cfg.validate();
    const int T = cfg.total_frames;
    const int L = cfg.new_per_submap;
    const int O = cfg.overlap;
    const int K = (T + L - 1) / L;

    std::vector<std::vector<int>> out;
    out.reserve(K);
    for (int k = 0; k < K; ++k) {
        const int lo = (k == 0) ? 0 : k * L - O;
        const int hi = std::min((k + 1) * L - 1, T - 1); // tail rule
        std::vector<int> ts;
        for (int t = lo; t <= hi; ++t) ts.push_back(t);
        out.push_back(std::move(ts));
    }
    return out;
}

std::vector<uint8_t> confidence_filter(const FramePrediction& fp, double percentile) {
    if (percentile < 0 || percentile > 100) {
        throw Error(ErrorKind::InvalidArgument, "percentile must be in [0, 100]");
    }
    std::vector<uint8_t> mask = fp.valid;
    if (percentile == 0) return mask;

    std::vector<double> confs;
    confs.reserve(fp.pixel_count());
    for (size_t i = 0; i < fp.valid.size(); ++i) {
        if (fp.valid[i]) confs.push_back(fp.confidence[i]);
    }
    if (confs.empty()) return mask;

    // Nearest-rank percentile over the valid pixels.
    std::sort(confs.begin(), confs.end());
    const size_t rank = static_cast<size_t>(
        std::ceil(percentile / 100.0 * static_cast<double>(confs.size())));
    const double threshold = confs[std::min(rank, confs.size()) - 1];

    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] && !(fp.confidence[i] > threshold)) mask[i] = 0;
    }
    return mask;
}

namespace {

template <typename T>
void write_raw(const std::filesystem::path& path, const std::vector<T>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorKind::IoError, "cannot open for write: " + path.string());
    }
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
    if (!f) {
        throw Error(ErrorKind::IoError, "short write: " + path.string());
    }
}

template <typename T>
std::vector<T> read_raw(const std::filesystem::path& path, size_t count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) {
        throw Error(ErrorKind::IoError, "cannot open: " + path.string());
    }
    const auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != count * sizeof(T)) {
        throw Error(ErrorKind::ParseError,
                    path.string() + ": expected " + std::to_string(count * sizeof(T)) +
                        " bytes, found " + std::to_string(bytes));
    }
    std::vector<T> data(count);
    f.seekg(0);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    if (!f) {
        throw Error(ErrorKind::IoError, "short read: " + path.string());
    }
    return data;
}

std::string tensor_name(const FramePrediction& fp, const char* kind, const char* ext) {
    return "t" + std::to_string(fp.t) + "_c" + std::to_string(fp.c) + "_" + kind + ext;
}

} // namespace

void save_bundle(const SubmapPrediction& sp, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["submap_index"] = sp.submap_index;
    manifest["O"] = sp.overlap_count;
    manifest["frames"] = json::array();

    for (const auto& fp : sp.frames) {
        fp.check_shapes();
        if (!fp.pose.matrix().allFinite()) {
            throw Error(ErrorKind::InvalidArgument,
                        "frame (t=" + std::to_string(fp.t) + ", c=" + std::to_string(fp.c) +
                            "): non-finite pose");
        }
        const std::string pm = tensor_name(fp, "pointmap", ".f32");
        const std::string cf = tensor_name(fp, "confidence", ".f32");
        const std::string mk = tensor_name(fp, "mask", ".u8");

        std::vector<float> pm32(fp.pointmap.begin(), fp.pointmap.end());
        std::vector<float> cf32(fp.confidence.begin(), fp.confidence.end());
        write_raw(dir / pm, pm32);
        write_raw(dir / cf, cf32);
        write_raw(dir / mk, fp.valid);

        json jf;
        jf["t"] = fp.t;
        jf["c"] = fp.c;
        jf["width"] = fp.intrinsics.width;
        jf["height"] = fp.intrinsics.height;
        jf["fx"] = fp.intrinsics.fx;
        jf["fy"] = fp.intrinsics.fy;
        jf["cx"] = fp.intrinsics.cx;
        jf["cy"] = fp.intrinsics.cy;
        json pose = json::array();
        const Mat4 m = fp.pose.matrix();
        for (int r = 0; r < 4; ++r)
            for (int col = 0; col < 4; ++col) pose.push_back(m(r, col));
        jf["pose"] = pose;
        jf["pointmap_file"] = pm;
        jf["confidence_file"] = cf;
        jf["mask_file"] = mk;
        manifest["frames"].push_back(jf);
    }

    std::ofstream f(dir / "manifest.json");
    if (!f) {
        throw Error(ErrorKind::IoError, "cannot write manifest: " + dir.string());
    }
    f << manifest.dump(2) << "\n";
}

SubmapPrediction load_bundle(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) {
        throw Error(ErrorKind::IoError, "missing manifest: " + dir.string());
    }
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ParseError, dir.string() + ": " + e.what());
    }

    SubmapPrediction sp;
    sp.submap_index = manifest.at("submap_index").get<int>();
    sp.overlap_count = manifest.at("O").get<int>();

    for (const auto& jf : manifest.at("frames")) {
        FramePrediction fp;
        fp.t = jf.at("t").get<int>();
        fp.c = jf.at("c").get<int>();
        fp.intrinsics.width = jf.at("width").get<int>();
        fp.intrinsics.height = jf.at("height").get<int>();
        fp.intrinsics.fx = jf.at("fx").get<double>();
        fp.intrinsics.fy = jf.at("fy").get<double>();
        fp.intrinsics.cx = jf.at("cx").get<double>();
        fp.intrinsics.cy = jf.at("cy").get<double>();

        const auto& pose = jf.at("pose");
        if (pose.size() != 16) {
            throw Error(ErrorKind::ParseError,
                        "frame (t=" + std::to_string(fp.t) + ", c=" + std::to_string(fp.c) +
                            "): pose must have 16 entries");
        }
        Mat4 m;
        for (int r = 0; r < 4; ++r)
            for (int col = 0; col < 4; ++col) {
                const double v = pose[4 * r + col].get<double>();
                if (!std::isfinite(v)) {
                    throw Error(ErrorKind::ParseError,
                                "frame (t=" + std::to_string(fp.t) + ", c=" +
                                    std::to_string(fp.c) + "): non-finite pose entry");
                }
                m(r, col) = v;
            }
        fp.pose = Pose::from_matrix(m);

        const size_t n = fp.pixel_count();
        const auto pm32 = read_raw<float>(dir / jf.at("pointmap_file").get<std::string>(), 3 * n);
        const auto cf32 = read_raw<float>(dir / jf.at("confidence_file").get<std::string>(), n);
        fp.valid = read_raw<uint8_t>(dir / jf.at("mask_file").get<std::string>(), n);
        fp.pointmap.assign(pm32.begin(), pm32.end());
        fp.confidence.assign(cf32.begin(), cf32.end());
        fp.check_shapes();
        sp.frames.push_back(std::move(fp));
    }
    return sp;
}

} // namespace talo
