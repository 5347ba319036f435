#include "talo/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace talo {

std::string AlignmentReport::csv_header() const {
    return "ate_rmse_m,rte_rmse_m,rre_rmse_deg,accuracy_m,completeness_m,chamfer_m,"
           "gt_length_m,failed";
}

std::string AlignmentReport::csv_row() const {
    std::ostringstream os;
    os.precision(17);
    os << ate_rmse << ',' << rte_rmse << ',' << rre_rmse << ',' << accuracy << ','
       << completeness << ',' << chamfer << ',' << gt_length << ',' << (failed ? 1 : 0);
    return os.str();
}

std::string AlignmentReport::pretty() const {
    std::ostringstream os;
    os.precision(6);
    os << "ATE RMSE      " << ate_rmse << " m\n"
       << "RTE RMSE      " << rte_rmse << " m\n"
       << "RRE RMSE      " << rre_rmse << " deg\n"
       << "Accuracy      " << accuracy << " m\n"
       << "Completeness  " << completeness << " m\n"
       << "Chamfer       " << chamfer << " m\n"
       << "GT length     " << gt_length << " m\n"
       << "Failed        " << (failed ? "yes" : "no") << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// KD-tree

struct KdTree::Impl {
    struct Node {
        int axis = 0;
        double split = 0;
        int left = -1, right = -1;
        int begin = 0, end = 0; // leaf range
        bool leaf = false;
    };
    std::vector<Vec3> pts;
    std::vector<Node> nodes;
    static constexpr int kLeafSize = 16;

    int build(int begin, int end) {
        Node node;
        node.begin = begin;
        node.end = end;
        if (end - begin <= kLeafSize) {
            node.leaf = true;
            nodes.push_back(node);
            return static_cast<int>(nodes.size()) - 1;
        }
        Vec3 lo = pts[begin], hi = pts[begin];
        for (int i = begin; i < end; ++i) {
            lo = lo.cwiseMin(pts[i]);
            hi = hi.cwiseMax(pts[i]);
        }
        int axis = 0;
        (hi - lo).maxCoeff(&axis);
        const int mid = (begin + end) / 2;
        std::nth_element(pts.begin() + begin, pts.begin() + mid, pts.begin() + end,
                         [axis](const Vec3& a, const Vec3& b) { return a(axis) < b(axis); });
        node.axis = axis;
        node.split = pts[mid](axis);
        const int self = static_cast<int>(nodes.size());
        nodes.push_back(node);
        const int left = build(begin, mid);
        const int right = build(mid, end);
        nodes[self].left = left;
        nodes[self].right = right;
        return self;
    }

    void query(int idx, const Vec3& q, double& best) const {
        const Node& node = nodes[idx];
        if (node.leaf) {
            for (int i = node.begin; i < node.end; ++i) {
                best = std::min(best, (pts[i] - q).squaredNorm());
            }
            return;
        }
        const double d = q(node.axis) - node.split;
        const int near = (d < 0) ? node.left : node.right;
        const int far = (d < 0) ? node.right : node.left;
        query(near, q, best);
        if (d * d < best) query(far, q, best);
    }
};

KdTree::KdTree(std::vector<Vec3> points) : impl_(std::make_unique<Impl>()) {
    if (points.empty()) {
        throw Error(ErrorKind::EmptyInput, "KdTree: empty point set");
    }
    impl_->pts = std::move(points);
    impl_->nodes.reserve(2 * impl_->pts.size() / Impl::kLeafSize + 2);
    impl_->build(0, static_cast<int>(impl_->pts.size()));
}

KdTree::~KdTree() = default;
KdTree::KdTree(KdTree&&) noexcept = default;
KdTree& KdTree::operator=(KdTree&&) noexcept = default;

double KdTree::nearest_dist2(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    impl_->query(0, q, best);
    return best;
}

size_t KdTree::size() const { return impl_->pts.size(); }

// ---------------------------------------------------------------------------
// Trajectory metrics

std::pair<Sim3, double> align_and_ate(const std::vector<Pose>& pred_traj,
                                      const std::vector<Pose>& gt_traj) {
    if (pred_traj.size() != gt_traj.size()) {
        throw Error(ErrorKind::InvalidArgument, "align_and_ate: trajectory length mismatch");
    }
    if (pred_traj.size() < 3) {
        throw Error(ErrorKind::InsufficientPoints, "align_and_ate: need >= 3 poses");
    }
    std::vector<Vec3> pred_centers, gt_centers;
    pred_centers.reserve(pred_traj.size());
    gt_centers.reserve(gt_traj.size());
    for (size_t i = 0; i < pred_traj.size(); ++i) {
        pred_centers.push_back(pred_traj[i].translation);
        gt_centers.push_back(gt_traj[i].translation);
    }
    const Sim3 align = umeyama_align(pred_centers, gt_centers, /*with_scale=*/true);

    double acc = 0;
    for (size_t i = 0; i < pred_centers.size(); ++i) {
        acc += (gt_centers[i] - align.apply(pred_centers[i])).squaredNorm();
    }
    return {align, std::sqrt(acc / static_cast<double>(pred_centers.size()))};
}

std::pair<double, double> rte_rre(const std::vector<Pose>& pred_traj,
                                  const std::vector<Pose>& gt_traj, int frame_gap) {
    if (pred_traj.size() != gt_traj.size()) {
        throw Error(ErrorKind::InvalidArgument, "rte_rre: trajectory length mismatch");
    }
    if (frame_gap < 1 || pred_traj.size() < static_cast<size_t>(frame_gap) + 1) {
        throw Error(ErrorKind::InvalidArgument, "rte_rre: need length >= frame_gap + 1");
    }
    const double scale = align_and_ate(pred_traj, gt_traj).first.scale;

    double t_acc = 0, r_acc = 0;
    size_t n = 0;
    for (size_t i = 0; i + frame_gap < pred_traj.size(); ++i) {
        const Pose gt_rel = gt_traj[i].inverse() * gt_traj[i + frame_gap];
        Pose pred_rel = pred_traj[i].inverse() * pred_traj[i + frame_gap];
        pred_rel.translation *= scale;
        const Pose err = gt_rel.inverse() * pred_rel;
        t_acc += err.translation.squaredNorm();
        const double ang = rotation_angle(err.rotation);
        r_acc += ang * ang;
        ++n;
    }
    const double rte = std::sqrt(t_acc / static_cast<double>(n));
    const double rre = std::sqrt(r_acc / static_cast<double>(n)) * 180.0 / M_PI;
    return {rte, rre};
}

GeometryMetrics geometry_metrics(const std::vector<Vec3>& pred_cloud,
                                 const std::vector<Vec3>& gt_cloud, double clamp) {
    if (pred_cloud.empty() || gt_cloud.empty()) {
        throw Error(ErrorKind::EmptyInput, "geometry_metrics: empty cloud");
    }
    const KdTree gt_tree(gt_cloud);
    const KdTree pred_tree(pred_cloud);

    std::vector<double> d_pred(pred_cloud.size()), d_gt(gt_cloud.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(pred_cloud.size()); ++i) {
        d_pred[static_cast<size_t>(i)] =
            std::min(clamp, std::sqrt(gt_tree.nearest_dist2(pred_cloud[static_cast<size_t>(i)])));
    }
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(gt_cloud.size()); ++i) {
        d_gt[static_cast<size_t>(i)] =
            std::min(clamp, std::sqrt(pred_tree.nearest_dist2(gt_cloud[static_cast<size_t>(i)])));
    }

    GeometryMetrics out;
    out.accuracy = std::accumulate(d_pred.begin(), d_pred.end(), 0.0) /
                   static_cast<double>(d_pred.size());
    out.completeness = std::accumulate(d_gt.begin(), d_gt.end(), 0.0) /
                       static_cast<double>(d_gt.size());
    out.chamfer = 0.5 * (out.accuracy + out.completeness);
    return out;
}

GeometryMetrics reference::geometry_metrics(const std::vector<Vec3>& pred_cloud,
                                            const std::vector<Vec3>& gt_cloud,
                                            double clamp) {
    if (pred_cloud.empty() || gt_cloud.empty()) {
        throw Error(ErrorKind::EmptyInput, "geometry_metrics: empty cloud");
    }
    auto one_way = [clamp](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        double acc = 0;
        for (const Vec3& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const Vec3& q : to) {
                best = std::min(best, (p - q).squaredNorm());
            }
            acc += std::min(clamp, std::sqrt(best));
        }
        return acc / static_cast<double>(from.size());
    };
    GeometryMetrics out;
    out.accuracy = one_way(pred_cloud, gt_cloud);
    out.completeness = one_way(gt_cloud, pred_cloud);
    out.chamfer = 0.5 * (out.accuracy + out.completeness);
    return out;
}

double trajectory_length(const std::vector<Pose>& traj) {
    double len = 0;
    for (size_t i = 1; i < traj.size(); ++i) {
        len += (traj[i].translation - traj[i - 1].translation).norm();
    }
    return len;
}

} // namespace talo
