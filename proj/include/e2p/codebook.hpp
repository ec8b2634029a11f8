#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace e2p {

// Nearest-centroid vector quantizer over item embeddings; the assigned
// centroid index is the item's semantic id.
struct Codebook {
    std::vector<std::vector<double>> centroids;
    std::vector<double> objective_history; // mean squared distance per Lloyd iteration

    std::size_t size() const { return centroids.size(); }
    std::size_t dim() const { return centroids.empty() ? 0 : centroids[0].size(); }

    // nearest centroid by Euclidean distance, lowest index wins ties
    int assign(const std::vector<double>& item) const;
    const std::vector<double>& decode(int id) const;

    void save(const std::string& path) const;
    static Codebook load(const std::string& path);
};

// Lloyd's k-means: seeded from m distinct items, iterated until the maximum
// centroid shift drops below 1e-9 or 100 iterations pass.
Codebook build_codebook(const std::vector<std::vector<double>>& items, std::size_t m,
                        std::uint64_t seed);

} // namespace e2p
