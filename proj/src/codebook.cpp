#include "e2p/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "e2p/checkpoint.hpp"
#include "e2p/errors.hpp"
#include "e2p/rng.hpp"

namespace e2p {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return d;
}

} // namespace

int Codebook::assign(const std::vector<double>& item) const {
    if (centroids.empty()) throw DataError("codebook: empty");
    if (item.size() != dim())
        throw DataError("codebook: item dimension " + std::to_string(item.size()) +
                        " does not match centroid dimension " + std::to_string(dim()));
    int best = 0;
    double best_d = sq_dist(item, centroids[0]);
    for (std::size_t i = 1; i < centroids.size(); ++i) {
        const double d = sq_dist(item, centroids[i]);
        if (d < best_d) { // strict: lowest index wins ties
            best_d = d;
            best = int(i);
        }
    }
    return best;
}

const std::vector<double>& Codebook::decode(int id) const {
    if (id < 0 || std::size_t(id) >= centroids.size())
        throw std::out_of_range("codebook: id " + std::to_string(id) + " out of range");
    return centroids[std::size_t(id)];
}

Codebook build_codebook(const std::vector<std::vector<double>>& items, std::size_t m,
                        std::uint64_t seed) {
    if (items.empty()) throw DataError("build_codebook: no items");
    const std::size_t dim = items[0].size();
    for (const auto& it : items)
        if (it.size() != dim) throw DataError("build_codebook: mixed item dimensions");

    std::set<std::vector<double>> distinct(items.begin(), items.end());
    if (m == 0 || m > distinct.size())
        throw DataError("build_codebook: m = " + std::to_string(m) + " but only " +
                        std::to_string(distinct.size()) + " distinct items");

    // seed centroids with m distinct items, chosen by shuffled order
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    Codebook cb;
    std::set<std::vector<double>> used;
    for (std::size_t idx : order) {
        if (cb.centroids.size() == m) break;
        if (used.insert(items[idx]).second) cb.centroids.push_back(items[idx]);
    }

    std::vector<int> assignment(items.size(), 0);
    for (int iter = 0; iter < 100; ++iter) {
        double obj = 0.0;
        for (std::size_t i = 0; i < items.size(); ++i) {
            assignment[i] = cb.assign(items[i]);
            obj += sq_dist(items[i], cb.centroids[std::size_t(assignment[i])]);
        }
        cb.objective_history.push_back(obj / double(items.size()));

        std::vector<std::vector<double>> sums(m, std::vector<double>(dim, 0.0));
        std::vector<std::size_t> counts(m, 0);
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto k = std::size_t(assignment[i]);
            ++counts[k];
            for (std::size_t j = 0; j < dim; ++j) sums[k][j] += items[i][j];
        }
        double max_shift = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            if (counts[k] == 0) continue; // empty cluster keeps its centroid
            std::vector<double> next(dim);
            for (std::size_t j = 0; j < dim; ++j) next[j] = sums[k][j] / double(counts[k]);
            max_shift = std::max(max_shift, std::sqrt(sq_dist(next, cb.centroids[k])));
            cb.centroids[k] = std::move(next);
        }
        if (max_shift < 1e-9) break;
    }
    return cb;
}

void Codebook::save(const std::string& path) const {
    Checkpoint ckpt;
    ckpt.header = {{"kind", "codebook"}, {"m", centroids.size()}, {"dim", dim()}};
    std::vector<double> flat;
    flat.reserve(centroids.size() * dim());
    for (const auto& c : centroids) flat.insert(flat.end(), c.begin(), c.end());
    ckpt.blocks.emplace_back("centroids",
                             Tensor::from({centroids.size(), dim()}, std::move(flat)));
    save_checkpoint(path, ckpt);
}

Codebook Codebook::load(const std::string& path) {
    Checkpoint ckpt = load_checkpoint(path);
    if (ckpt.header.value("kind", "") != "codebook")
        throw DataError(path + ": not a codebook checkpoint");
    const Tensor& flat = ckpt.block("centroids");
    const std::size_t m = flat.shape()[0], dim = flat.shape()[1];
    Codebook cb;
    cb.centroids.assign(m, std::vector<double>(dim));
    for (std::size_t k = 0; k < m; ++k)
        for (std::size_t j = 0; j < dim; ++j) cb.centroids[k][j] = flat.at(k, j);
    return cb;
}

} // namespace e2p
