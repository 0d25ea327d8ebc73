#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "diffseg/aggregator.hpp"
#include "diffseg/attn_store.hpp"
#include "diffseg/merger.hpp"

namespace diffseg {

// Integer label map. Labels are compacted to 0..num_labels-1 in order of first
// occurrence (row-major); source_proposal[l] is the proposal that won label l.
struct SegmentationMask {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;
    int num_labels = 0;
    int num_proposals = 0;
    std::vector<int> source_proposal;

    std::int32_t at(int y, int x) const {
        return labels[static_cast<std::size_t>(y) * width + x];
    }
};

// Relabels `raw` by first occurrence; fills num_labels and source_proposal.
SegmentationMask compact_labels(int height, int width, std::vector<std::int32_t> raw,
                                int num_proposals);

// Bilinear-upsamples each proposal (no renormalisation) and takes the per-pixel
// argmax, ties going to the lowest proposal index.
SegmentationMask nms_assign(const ProposalList& proposals, int out_h, int out_w);

struct PipelineParams {
    WeightScheme weights = WeightScheme::proportional();
    int anchors_per_side = 16;  // M
    MergeConfig merge{};
    int out_height = 0;  // 0 -> the stack's image size
    int out_width = 0;
    std::optional<int> expected_time_step;
};

struct SegmentTrace {
    MergeTrace merge;
    ProposalList proposals;  // final proposals, before NMS
    double aggregate_ms = 0.0;
    double merge_ms = 0.0;
    double nms_ms = 0.0;
};

SegmentationMask segment(const AttentionStack& stack, const PipelineParams& params,
                         SegmentTrace* trace = nullptr);

}  // namespace diffseg
