#pragma once

#include <cstdint>
#include <vector>

namespace diffseg {

// Plain row-major integer label map (ground truth, synthetic layouts, decoded PNGs).
struct LabelImage {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;

    LabelImage() = default;
    LabelImage(int h, int w, std::int32_t fill = 0)
        : height(h), width(w), labels(static_cast<std::size_t>(h) * w, fill) {}
    LabelImage(int h, int w, std::vector<std::int32_t> values)
        : height(h), width(w), labels(std::move(values)) {}

    std::int32_t at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    std::int32_t& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }

    bool operator==(const LabelImage&) const = default;
};

}  // namespace diffseg
