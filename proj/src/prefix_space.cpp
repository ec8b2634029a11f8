#include "e2p/prefix_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include "e2p/errors.hpp"

namespace e2p {

namespace {

// power iteration on the centered data's covariance operator (matrix-free)
std::vector<double> top_component(const std::vector<std::vector<double>>& centered,
                                  const std::vector<std::vector<double>>& deflate) {
    const std::size_t d = centered[0].size();
    std::vector<double> v(d, 1.0 / std::sqrt(double(d)));
    // remove already-found directions from the start vector
    auto orthogonalize = [&](std::vector<double>& x) {
        for (const auto& u : deflate) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += x[j] * u[j];
            for (std::size_t j = 0; j < d; ++j) x[j] -= dot * u[j];
        }
    };
    orthogonalize(v);

    for (int iter = 0; iter < 300; ++iter) {
        std::vector<double> next(d, 0.0);
        for (const auto& x : centered) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += x[j] * v[j];
            for (std::size_t j = 0; j < d; ++j) next[j] += dot * x[j];
        }
        orthogonalize(next);
        double norm = 0.0;
        for (double t : next) norm += t * t;
        norm = std::sqrt(norm);
        if (norm < 1e-12) break; // no variance left in this subspace
        for (double& t : next) t /= norm;
        double delta = 0.0;
        for (std::size_t j = 0; j < d; ++j) delta = std::max(delta, std::abs(next[j] - v[j]));
        v = std::move(next);
        if (delta < 1e-13) break;
    }
    // pin the sign: the largest-magnitude loading is positive
    std::size_t arg = 0;
    for (std::size_t j = 1; j < v.size(); ++j)
        if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    if (v[arg] < 0.0)
        for (double& t : v) t = -t;
    return v;
}

} // namespace

std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& points) {
    if (points.empty()) throw DataError("pca: no points");
    const std::size_t d = points[0].size();
    if (d == 0) throw DataError("pca: zero-dimensional points");

    std::vector<double> mean(d, 0.0);
    for (const auto& p : points)
        for (std::size_t j = 0; j < d; ++j) mean[j] += p[j];
    for (double& m : mean) m /= double(points.size());

    std::vector<std::vector<double>> centered = points;
    for (auto& p : centered)
        for (std::size_t j = 0; j < d; ++j) p[j] -= mean[j];

    const std::vector<double> c1 = top_component(centered, {});
    const std::vector<double> c2 =
        d >= 2 ? top_component(centered, {c1}) : std::vector<double>(d, 0.0);

    std::vector<std::array<double, 2>> out;
    out.reserve(points.size());
    for (const auto& p : centered) {
        double x = 0.0, y = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            x += p[j] * c1[j];
            y += p[j] * c2[j];
        }
        out.push_back({x, y});
    }
    return out;
}

double neighbor_agreement(const std::vector<std::vector<double>>& points,
                          const std::vector<std::size_t>& clusters, std::size_t n_neighbors) {
    const std::size_t n = points.size();
    if (clusters.size() != n) throw DataError("neighbor_agreement: label count mismatch");
    if (n < n_neighbors + 1)
        throw DataError("neighbor_agreement: " + std::to_string(n) + " points cannot supply " +
                        std::to_string(n_neighbors) + " neighbors each");

    double total = 0.0;
    std::vector<std::size_t> order(n);
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double d = 0.0;
            for (std::size_t c = 0; c < points[i].size(); ++c) {
                const double diff = points[i][c] - points[j][c];
                d += diff * diff;
            }
            dist[j] = d;
        }
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
        std::size_t same = 0, taken = 0;
        for (std::size_t r = 0; r < n && taken < n_neighbors; ++r) {
            if (order[r] == i) continue; // label-blind but self-excluded
            if (clusters[order[r]] == clusters[i]) ++same;
            ++taken;
        }
        total += double(same) / double(n_neighbors);
    }
    return total / double(n);
}

PrefixSpaceExport export_prefix_space(const ProjectionParams& phi,
                                      const std::vector<LabeledPoint>& points,
                                      const std::string& csv_path, std::size_t n_neighbors) {
    if (points.size() < 10) throw DataError("export_prefix_space: need at least 10 points");
    std::set<std::size_t> distinct;
    for (const LabeledPoint& p : points) distinct.insert(p.cluster);
    if (distinct.size() < 2) throw DataError("export_prefix_space: need at least 2 clusters");
    if (points.size() < n_neighbors + 1)
        throw DataError("export_prefix_space: fewer points than requested neighbors");

    std::vector<std::vector<double>> embeddings, prefixes;
    std::vector<std::size_t> clusters;
    embeddings.reserve(points.size());
    prefixes.reserve(points.size());
    {
        NoGradGuard no_grad;
        for (const LabeledPoint& p : points) {
            embeddings.push_back(p.embedding);
            prefixes.push_back(project(phi, p.embedding).values());
            clusters.push_back(p.cluster);
        }
    }

    const auto emb_2d = pca_2d(embeddings);
    const auto pre_2d = pca_2d(prefixes);

    std::ofstream out(csv_path);
    if (!out) throw DataError("cannot write " + csv_path);
    out << "point_id,cluster,emb_x,emb_y,prefix_x,prefix_y\n";
    out.precision(17);
    for (std::size_t i = 0; i < points.size(); ++i) {
        out << points[i].id << ',' << points[i].cluster << ',' << emb_2d[i][0] << ','
            << emb_2d[i][1] << ',' << pre_2d[i][0] << ',' << pre_2d[i][1] << "\n";
    }

    PrefixSpaceExport result;
    result.embedding_agreement = neighbor_agreement(embeddings, clusters, n_neighbors);
    result.prefix_agreement = neighbor_agreement(prefixes, clusters, n_neighbors);
    result.n_points = points.size();
    result.n_neighbors = n_neighbors;
    return result;
}

} // namespace e2p
