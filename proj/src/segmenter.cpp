#include "diffseg/segmenter.hpp"

#include <chrono>
#include <unordered_map>

#include "diffseg/errors.hpp"
#include "diffseg/interp.hpp"

namespace diffseg {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
        .count();
}

}  // namespace

SegmentationMask compact_labels(int height, int width, std::vector<std::int32_t> raw,
                                int num_proposals) {
    SegmentationMask mask;
    mask.height = height;
    mask.width = width;
    mask.num_proposals = num_proposals;
    std::unordered_map<std::int32_t, std::int32_t> remap;
    for (auto& label : raw) {
        auto [it, inserted] = remap.try_emplace(label, static_cast<std::int32_t>(remap.size()));
        if (inserted) mask.source_proposal.push_back(label);
        label = it->second;
    }
    mask.labels = std::move(raw);
    mask.num_labels = static_cast<int>(remap.size());
    return mask;
}

SegmentationMask nms_assign(const ProposalList& proposals, int out_h, int out_w) {
    if (proposals.empty()) throw ValidationError("nms_assign: empty proposal list");
    if (out_h <= 0 || out_w <= 0) throw ValidationError("nms_assign: output size must be positive");
    const int side = proposals.side;
    const std::size_t pixels = static_cast<std::size_t>(out_h) * out_w;

    std::vector<double> best(pixels);
    std::vector<std::int32_t> winner(pixels, 0);
    std::vector<double> up(pixels);
    for (std::size_t p = 0; p < proposals.size(); ++p) {
        bilinear_resize(proposals.maps[p], side, side, up, out_h, out_w);
        if (p == 0) {
            best = up;
            continue;
        }
        for (std::size_t i = 0; i < pixels; ++i) {
            // strict comparison keeps the lowest index on ties
            if (up[i] > best[i]) {
                best[i] = up[i];
                winner[i] = static_cast<std::int32_t>(p);
            }
        }
    }
    return compact_labels(out_h, out_w, std::move(winner), static_cast<int>(proposals.size()));
}

SegmentationMask segment(const AttentionStack& stack, const PipelineParams& params,
                         SegmentTrace* trace) {
    if (params.expected_time_step && *params.expected_time_step != stack.time_step) {
        throw ValidationError("stack was extracted at time step " + std::to_string(stack.time_step) +
                              ", expected " + std::to_string(*params.expected_time_step));
    }
    params.merge.validate();
    const int out_h = params.out_height > 0 ? params.out_height : stack.image_height;
    const int out_w = params.out_width > 0 ? params.out_width : stack.image_width;

    auto t0 = std::chrono::steady_clock::now();
    const AggregatedTensor field = aggregate(stack, params.weights);
    if (trace) trace->aggregate_ms = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    const AnchorGrid grid = generate_anchor_grid(params.anchors_per_side, field.w_max);
    const ProposalList proposals =
        run_merging(field, grid, params.merge, trace ? &trace->merge : nullptr);
    if (trace) trace->merge_ms = elapsed_ms(t0);

    t0 = std::chrono::steady_clock::now();
    SegmentationMask mask = nms_assign(proposals, out_h, out_w);
    if (trace) {
        trace->nms_ms = elapsed_ms(t0);
        trace->proposals = proposals;
    }
    return mask;
}

}  // namespace diffseg
