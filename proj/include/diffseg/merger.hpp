#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "diffseg/aggregator.hpp"

namespace diffseg {

struct GridPoint {
    int row = 0;
    int col = 0;
    bool operator==(const GridPoint&) const = default;
};

struct AnchorGrid {
    int side = 0;   // M
    int w_max = 0;
    std::vector<GridPoint> points;  // M*M, row-major
};

// Centered strides: row r sits at floor((r + 0.5) * w_max / M).
AnchorGrid generate_anchor_grid(int m, int w_max);

struct MergeConfig {
    double tau = 1.0;    // strict threshold on the symmetrized distance; +inf merges everything
    int iterations = 3;  // N, first merge included

    void validate() const;
};

// Ordered list of side x side probability maps (object proposals).
struct ProposalList {
    int side = 0;
    std::vector<std::vector<double>> maps;

    std::size_t size() const { return maps.size(); }
    bool empty() const { return maps.empty(); }
};

inline constexpr double kLogFloor = 1e-12;

// 0.5 * (KL(p||q) + KL(q||p)), with both arguments floored at kLogFloor
// inside the logarithms. Exactly symmetric; exactly zero for p == q.
double kl_distance(std::span<const double> p, std::span<const double> q);

ProposalList sample_anchors(const AggregatedTensor& field, const AnchorGrid& grid);

// Proposal v is the mean of every map of `field` within tau of anchor v.
// Always returns anchors.size() proposals.
ProposalList first_merge(const ProposalList& anchors, const AggregatedTensor& field,
                         const MergeConfig& config);

// One pass of threshold merging without replacement, scanning in list order.
ProposalList merge_iteration(const ProposalList& proposals, const MergeConfig& config);

struct MergeTrace {
    std::vector<std::size_t> counts;  // proposal count after each iteration
};

ProposalList run_merging(const AggregatedTensor& field, const AnchorGrid& grid,
                         const MergeConfig& config, MergeTrace* trace = nullptr);

}  // namespace diffseg
