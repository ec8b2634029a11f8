#pragma once

#include <array>
#include <string>
#include <vector>

#include "e2p/projection.hpp"

namespace e2p {

struct LabeledPoint {
    std::size_t id = 0;
    std::size_t cluster = 0;
    std::vector<double> embedding;
};

// Deterministic top-2 principal components (power iteration with deflation,
// fixed start vector, sign pinned by the largest-magnitude loading).
// Returns n rows of (x, y).
std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& points);

// Mean fraction of each point's n_neighbors nearest neighbors (Euclidean,
// label-blind, lower index wins ties) sharing its cluster label.
double neighbor_agreement(const std::vector<std::vector<double>>& points,
                          const std::vector<std::size_t>& clusters, std::size_t n_neighbors);

struct PrefixSpaceExport {
    double embedding_agreement = 0.0;
    double prefix_agreement = 0.0;
    std::size_t n_points = 0;
    std::size_t n_neighbors = 10;
};

// Projects every labeled embedding through phi, writes a plot-ready CSV
// (point_id, cluster, emb_x, emb_y, prefix_x, prefix_y) and reports the
// neighbor-agreement score of both spaces (computed in full dimension; the
// 2-D coordinates are only for plotting).
PrefixSpaceExport export_prefix_space(const ProjectionParams& phi,
                                      const std::vector<LabeledPoint>& points,
                                      const std::string& csv_path, std::size_t n_neighbors = 10);

} // namespace e2p
