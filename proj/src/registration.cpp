#include "talo/registration.hpp"

#include <algorithm>

namespace talo {

double estimate_inter_submap_scale(const std::vector<Pose>& prev_overlap_poses,
                                   const std::vector<Pose>& curr_overlap_poses) {
    if (prev_overlap_poses.size() != curr_overlap_poses.size()) {
        throw Error(ErrorKind::InvalidArgument, "overlap pose count mismatch");
    }
    const size_t o = prev_overlap_poses.size();
    if (o < 2) {
        throw Error(ErrorKind::InsufficientFrames,
                    "scale estimation needs >= 2 overlap frames");
    }
    std::vector<double> ratios;
    ratios.reserve(o * (o - 1) / 2);
    for (size_t i = 0; i < o; ++i) {
        for (size_t j = i + 1; j < o; ++j) {
            const double prev_base =
                (prev_overlap_poses[i].translation - prev_overlap_poses[j].translation).norm();
            const double curr_base =
                (curr_overlap_poses[i].translation - curr_overlap_poses[j].translation).norm();
            if (curr_base < 1e-12) {
                throw Error(ErrorKind::DegenerateBaseline,
                            "near-zero camera baseline in current submap");
            }
            ratios.push_back(prev_base / curr_base);
        }
    }
    std::sort(ratios.begin(), ratios.end());
    const size_t n = ratios.size();
    return (n % 2 == 1) ? ratios[n / 2]
                        : 0.5 * (ratios[n / 2 - 1] + ratios[n / 2]);
}

Pose pairwise_registration(const std::vector<Pose>& prev_overlap_poses,
                           const std::vector<Pose>& curr_overlap_poses) {
    if (prev_overlap_poses.size() != curr_overlap_poses.size()) {
        throw Error(ErrorKind::InvalidArgument, "overlap pose count mismatch");
    }
    if (prev_overlap_poses.empty()) {
        throw Error(ErrorKind::NoOverlap, "registration needs >= 1 overlap frame");
    }
    std::vector<Mat3> rotations;
    Vec3 mean_t = Vec3::Zero();
    rotations.reserve(prev_overlap_poses.size());
    for (size_t i = 0; i < prev_overlap_poses.size(); ++i) {
        const Pose h = prev_overlap_poses[i] * curr_overlap_poses[i].inverse();
        rotations.push_back(h.rotation);
        mean_t += h.translation;
    }
    Pose out;
    out.rotation = chordal_rotation_average(rotations);
    out.translation = mean_t / static_cast<double>(rotations.size());
    return out;
}

std::vector<SubmapTransform> chain_to_global(const std::vector<Pose>& pair_transforms,
                                             const std::vector<double>& scales) {
    if (pair_transforms.size() != scales.size()) {
        throw Error(ErrorKind::InvalidArgument, "pair transform / scale count mismatch");
    }
    std::vector<SubmapTransform> out(pair_transforms.size() + 1);
    out[0].submap_index = 0;
    for (size_t k = 1; k < out.size(); ++k) {
        out[k].submap_index = static_cast<int>(k);
        out[k].scale_correction = out[k - 1].scale_correction * scales[k - 1];
        out[k].to_global = out[k - 1].to_global * pair_transforms[k - 1];
        if (k % 100 == 0) { // bound rotation drift along long chains
            out[k].to_global.rotation = project_to_so3(out[k].to_global.rotation);
        }
    }
    return out;
}

SubmapPrediction apply_to_submap(const SubmapPrediction& sp, const SubmapTransform& st) {
    SubmapPrediction out = sp;
    for (auto& fp : out.frames) {
        fp.pose.translation *= st.scale_correction;
        fp.pose = st.to_global * fp.pose;
        for (size_t i = 0; i + 3 <= fp.pointmap.size(); i += 3) {
            const Vec3 p(fp.pointmap[i], fp.pointmap[i + 1], fp.pointmap[i + 2]);
            const Vec3 q = st.to_global.apply(st.scale_correction * p);
            fp.pointmap[i] = q.x();
            fp.pointmap[i + 1] = q.y();
            fp.pointmap[i + 2] = q.z();
        }
    }
    return out;
}

} // namespace talo
