#include "talo/deformation.hpp"

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace talo {

namespace {

double median_of(std::vector<double> v) {
    const size_t n = v.size();
    std::sort(v.begin(), v.end());
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// MAD consistency factor for a normal distribution.
constexpr double kMadScale = 1.4826;
constexpr double kMadGate = 3.0;

} // namespace

Vec3 aggregate_canonical(const std::vector<Vec3>& observations) {
    if (observations.empty()) {
        throw Error(ErrorKind::EmptyInput, "aggregate_canonical: no observations");
    }
    const size_t n = observations.size();

    Vec3 median, mad;
    for (int d = 0; d < 3; ++d) {
        std::vector<double> coord(n);
        for (size_t i = 0; i < n; ++i) coord[i] = observations[i](d);
        median(d) = median_of(coord);
        for (size_t i = 0; i < n; ++i) coord[i] = std::abs(coord[i] - median(d));
        mad(d) = median_of(coord);
    }

    Vec3 sum = Vec3::Zero();
    size_t survivors = 0;
    for (const Vec3& obs : observations) {
        bool keep = true;
        for (int d = 0; d < 3; ++d) {
            if (std::abs(obs(d) - median(d)) > kMadGate * kMadScale * mad(d)) {
                keep = false;
                break;
            }
        }
        if (keep) {
            sum += obs;
            ++survivors;
        }
    }
    if (survivors == 0) return median;
    return sum / static_cast<double>(survivors);
}

namespace {

// Q nearest neighbors of point i (self included), ordered by (distance, index)
// so that tie handling is identical across the parallel and reference paths.
std::vector<size_t> nearest_neighbors(const std::vector<Vec3>& points, size_t i, int q) {
    std::vector<std::pair<double, size_t>> dist(points.size());
    for (size_t j = 0; j < points.size(); ++j) {
        dist[j] = {(points[i] - points[j]).squaredNorm(), j};
    }
    const size_t take = std::min<size_t>(static_cast<size_t>(q), points.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(take), dist.end());
    std::vector<size_t> out(take);
    for (size_t j = 0; j < take; ++j) out[j] = dist[j].second;
    return out;
}

std::vector<Vec3> smooth_impl(const std::vector<Vec3>& points,
                              const std::vector<Vec3>& canonical,
                              const SmoothingParams& params, bool parallel) {
    if (points.size() != canonical.size()) {
        throw Error(ErrorKind::InvalidArgument, "smooth_displacements: size mismatch");
    }
    if (points.empty()) {
        throw Error(ErrorKind::EmptyInput, "smooth_displacements: no points");
    }
    if (params.neighbor_count < 1) {
        throw Error(ErrorKind::InvalidArgument, "smooth_displacements: Q must be >= 1");
    }
    const size_t n = points.size();
    if (n < 2) return canonical; // degenerate rule

    std::vector<std::vector<size_t>> neighbors(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (long i = 0; i < static_cast<long>(n); ++i) {
        neighbors[static_cast<size_t>(i)] =
            nearest_neighbors(points, static_cast<size_t>(i), params.neighbor_count);
    }

    double sigma = params.bandwidth;
    if (sigma <= 0) {
        // Median over points of the distance to the Q-th nearest neighbor.
        std::vector<double> far(n);
        for (size_t i = 0; i < n; ++i) {
            far[i] = (points[i] - points[neighbors[i].back()]).norm();
        }
        sigma = median_of(far);
    }

    std::vector<Vec3> targets(n);
#pragma omp parallel for schedule(static) if (parallel)
    for (long li = 0; li < static_cast<long>(n); ++li) {
        const size_t i = static_cast<size_t>(li);
        double wsum = 0;
        Vec3 delta = Vec3::Zero();
        for (size_t j : neighbors[i]) {
            const double d2 = (points[i] - points[j]).squaredNorm();
            const double w = (sigma > 0) ? std::exp(-d2 / (2.0 * sigma * sigma)) : 1.0;
            wsum += w;
            delta += w * (canonical[j] - points[j]);
        }
        targets[i] = points[i] + delta / wsum;
    }
    return targets;
}

} // namespace

std::vector<Vec3> smooth_displacements(const std::vector<Vec3>& points,
                                       const std::vector<Vec3>& canonical,
                                       const SmoothingParams& params) {
    return smooth_impl(points, canonical, params, true);
}

std::vector<Vec3> reference::smooth_displacements(const std::vector<Vec3>& points,
                                                  const std::vector<Vec3>& canonical,
                                                  const SmoothingParams& params) {
    return smooth_impl(points, canonical, params, false);
}

namespace {

TpsModel affine_fallback(const std::vector<Vec3>& sources,
                         const std::vector<Vec3>& targets, double lambda) {
    const size_t n = sources.size();
    TpsModel model;
    model.lambda = lambda;
    model.weights.resize(0, 3);
    model.sources.resize(0, 3);

    Eigen::MatrixXd design(n, 4);
    Eigen::MatrixXd rhs(n, 3);
    for (size_t i = 0; i < n; ++i) {
        design.row(i) << sources[i].x(), sources[i].y(), sources[i].z(), 1.0;
        rhs.row(i) = targets[i].transpose();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() == 4) {
        const Eigen::MatrixXd sol = qr.solve(rhs); // 4 x 3
        model.affine = sol.topRows<3>().transpose();
        model.offset = sol.row(3).transpose();
        return model;
    }

    try {
        const Sim3 rigid = umeyama_align(sources, targets, /*with_scale=*/false);
        model.affine = rigid.rotation;
        model.offset = rigid.translation;
        return model;
    } catch (const Error&) {
        // Collinear sources: translation only.
        Vec3 shift = Vec3::Zero();
        for (size_t i = 0; i < n; ++i) shift += targets[i] - sources[i];
        model.offset = shift / static_cast<double>(n);
        return model;
    }
}

} // namespace

TpsModel tps_fit(const std::vector<Vec3>& sources, const std::vector<Vec3>& targets,
                 double lambda) {
    if (sources.size() != targets.size()) {
        throw Error(ErrorKind::InvalidArgument, "tps_fit: size mismatch");
    }
    if (sources.empty()) {
        throw Error(ErrorKind::EmptyInput, "tps_fit: no correspondences");
    }
    if (lambda < 0) {
        throw Error(ErrorKind::InvalidArgument, "tps_fit: lambda must be >= 0");
    }
    for (size_t i = 0; i < sources.size(); ++i) {
        if (!sources[i].allFinite() || !targets[i].allFinite()) {
            throw Error(ErrorKind::InvalidArgument, "tps_fit: non-finite input");
        }
    }
    const long p = static_cast<long>(sources.size());

    // Affine degeneracy test on centered sources.
    bool degenerate = p < 5;
    if (!degenerate) {
        Vec3 mean = Vec3::Zero();
        for (const Vec3& s : sources) mean += s;
        mean /= static_cast<double>(p);
        Eigen::MatrixXd centered(p, 3);
        for (long i = 0; i < p; ++i) centered.row(i) = (sources[i] - mean).transpose();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
        degenerate = svd.singularValues()(2) <
                     1e-10 * std::max(1.0, svd.singularValues()(0));
    }
    if (degenerate) {
        return affine_fallback(sources, targets, lambda);
    }

    // Augmented smoothing-spline system:
    //   [ K + lambda*I   Pi ] [ W   ]   [ targets ]
    //   [ Pi^T           0  ] [ aff ] = [ 0       ]
    const long m = p + 4;
    Eigen::MatrixXd system = Eigen::MatrixXd::Zero(m, m);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(m, 3);
    for (long i = 0; i < p; ++i) {
        for (long j = i + 1; j < p; ++j) {
            const double phi = (sources[i] - sources[j]).norm();
            system(i, j) = phi;
            system(j, i) = phi;
        }
        system(i, i) = lambda;
        system(i, p) = sources[i].x();
        system(i, p + 1) = sources[i].y();
        system(i, p + 2) = sources[i].z();
        system(i, p + 3) = 1.0;
        system.block(p, i, 4, 1) = system.block(i, p, 1, 4).transpose();
        rhs.row(i) = targets[i].transpose();
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    const Eigen::MatrixXd sol = lu.solve(rhs);

    TpsModel model;
    model.lambda = lambda;
    model.condition_warning = lu.rcond() < 1e-12;
    model.weights = sol.topRows(p);
    model.affine = sol.block(p, 0, 3, 3).transpose();
    model.offset = sol.row(p + 3).transpose();
    model.sources.resize(p, 3);
    for (long i = 0; i < p; ++i) model.sources.row(i) = sources[i].transpose();
    return model;
}

Vec3 tps_apply_one(const TpsModel& model, const Vec3& p) {
    Vec3 out = model.affine * p + model.offset;
    for (long i = 0; i < model.weights.rows(); ++i) {
        const double r = (p - Vec3(model.sources.row(i).transpose())).norm();
        out += r * Vec3(model.weights.row(i).transpose());
    }
    return out;
}

std::vector<Vec3> tps_apply(const TpsModel& model, const std::vector<Vec3>& points) {
    std::vector<Vec3> out(points.size());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < static_cast<long>(points.size()); ++i) {
        out[static_cast<size_t>(i)] = tps_apply_one(model, points[static_cast<size_t>(i)]);
    }
    return out;
}

std::vector<Vec3> reference::tps_apply(const TpsModel& model,
                                       const std::vector<Vec3>& points) {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const Vec3& p : points) {
        Vec3 y = model.affine * p + model.offset;
        for (long i = 0; i < model.weights.rows(); ++i) {
            y += (p - Vec3(model.sources.row(i).transpose())).norm() * Vec3(model.weights.row(i).transpose());
        }
        out.push_back(y);
    }
    return out;
}

void tps_apply_packed(const TpsModel& model, std::vector<double>& xyz) {
    const long n = static_cast<long>(xyz.size() / 3);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const Vec3 p(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
        const Vec3 q = tps_apply_one(model, p);
        xyz[3 * i] = q.x();
        xyz[3 * i + 1] = q.y();
        xyz[3 * i + 2] = q.z();
    }
}

void save_tps(const TpsModel& model, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorKind::IoError, "cannot write: " + path.string());
    }
    auto put = [&f](double v) { f.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    put(static_cast<double>(model.weights.rows()));
    put(model.lambda);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) put(model.affine(r, c));
    for (int d = 0; d < 3; ++d) put(model.offset(d));
    for (long i = 0; i < model.weights.rows(); ++i)
        for (int d = 0; d < 3; ++d) put(model.weights(i, d));
    for (long i = 0; i < model.sources.rows(); ++i)
        for (int d = 0; d < 3; ++d) put(model.sources(i, d));
}

TpsModel load_tps(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw Error(ErrorKind::IoError, "cannot open: " + path.string());
    }
    auto get = [&f, &path]() {
        double v;
        f.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!f) {
            throw Error(ErrorKind::ParseError, "truncated TPS model: " + path.string());
        }
        return v;
    };
    TpsModel model;
    const long p = static_cast<long>(get());
    model.lambda = get();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) model.affine(r, c) = get();
    for (int d = 0; d < 3; ++d) model.offset(d) = get();
    model.weights.resize(p, 3);
    model.sources.resize(p, 3);
    for (long i = 0; i < p; ++i)
        for (int d = 0; d < 3; ++d) model.weights(i, d) = get();
    for (long i = 0; i < p; ++i)
        for (int d = 0; d < 3; ++d) model.sources(i, d) = get();
    return model;
}

} // namespace talo
