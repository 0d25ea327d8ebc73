#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diffseg/label_image.hpp"
#include "diffseg/segmenter.hpp"

namespace diffseg {

inline constexpr std::int32_t kIgnoreLabel = 255;

// Dense non-negative count matrix, row-major.
struct CountMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::int64_t> counts;

    CountMatrix() = default;
    CountMatrix(int r, int c) : rows(r), cols(c), counts(static_cast<std::size_t>(r) * c, 0) {}

    std::int64_t at(int r, int c) const { return counts[static_cast<std::size_t>(r) * cols + c]; }
    std::int64_t& at(int r, int c) { return counts[static_cast<std::size_t>(r) * cols + c]; }
};

// Confusion between predicted labels (rows) and ground-truth classes (cols).
// Only ids that occur on non-ignored pixels get a row/column, in ascending id order.
struct Confusion {
    std::vector<std::int32_t> pred_ids;
    std::vector<std::int32_t> gt_ids;
    CountMatrix matrix;
    std::int64_t total = 0;  // non-ignored pixels
};

Confusion confusion(std::span<const std::int32_t> pred, std::span<const std::int32_t> gt,
                    std::int32_t ignore_label = kIgnoreLabel);
Confusion confusion(const SegmentationMask& pred, const LabelImage& gt,
                    std::int32_t ignore_label = kIgnoreLabel);

// Maximum-weight one-to-one matching on a rectangular count matrix
// (Kuhn-Munkres with potentials). Result[r] is the matched column or -1.
std::vector<int> hungarian_match(const CountMatrix& counts);

struct Score {
    double acc = 0.0;
    double miou = 0.0;
};

// ACC = matched pixels / all non-ignored pixels. IoU per ground-truth class uses
// its matched prediction (0 when unmatched); mIoU averages over present classes.
Score score(const Confusion& conf, std::span<const int> assignment);

struct ImageResult {
    std::string source_id;
    double acc = 0.0;
    double miou = 0.0;
    std::int64_t pixels = 0;
    std::int64_t matched = 0;
    std::map<std::int32_t, std::int32_t> assignment;  // predicted label -> gt class
    bool skipped = false;                             // no non-ignored pixels
};

struct EvalReport {
    std::vector<ImageResult> per_image;
    double acc = 0.0;   // pixel-weighted over scored images
    double miou = 0.0;  // mean of per-image mIoU
    int images = 0;     // scored images
};

struct EvalPair {
    std::string source_id;
    SegmentationMask pred;
    LabelImage gt;
};

ImageResult evaluate_image(const std::string& source_id, const SegmentationMask& pred,
                           const LabelImage& gt, std::int32_t ignore_label = kIgnoreLabel);

EvalReport summarize(std::vector<ImageResult> results);

EvalReport evaluate_dataset(const std::vector<EvalPair>& pairs,
                            std::int32_t ignore_label = kIgnoreLabel);

}  // namespace diffseg
