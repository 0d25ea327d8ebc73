#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "diffseg/aggregator.hpp"
#include "diffseg/segmenter.hpp"

namespace diffseg {

struct KMeansConfig {
    int k = 6;
    std::uint64_t seed = 0;
    int max_iters = 300;
    int restarts = 1;

    void validate() const;
};

struct KMeansResult {
    std::vector<int> assignment;          // cluster id per row
    std::vector<double> centers;          // k_used x dim, row-major
    std::vector<double> inertia_history;  // after seeding, then after every Lloyd step
    double inertia = 0.0;
    int k_used = 0;
    int iterations = 0;
    std::vector<std::string> warnings;
};

// Lloyd's algorithm with k-means++ seeding on `rows` (row-major, dim columns),
// squared Euclidean distance. Deterministic for a fixed seed. When k exceeds the
// number of distinct rows, k is reduced to that count and a warning is recorded.
KMeansResult kmeans_cluster(std::span<const double> rows, std::size_t dim, const KMeansConfig& config);

// Clusters the w_max^2 maps of the field and returns the cluster grid,
// nearest-neighbour resized to out_h x out_w, labels compacted by first occurrence.
SegmentationMask kmeans_segment(const AggregatedTensor& field, const KMeansConfig& config,
                                int out_h, int out_w, KMeansResult* details = nullptr);

}  // namespace diffseg
