#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace diffseg {

// Bilinear resampling with half-pixel centers (align_corners = false):
// output cell d samples source coordinate (d + 0.5) * in / out - 0.5,
// clamped to the valid range at the borders. No renormalization.
void bilinear_resize(std::span<const double> src, int in_h, int in_w, std::span<double> dst,
                     int out_h, int out_w);

std::vector<double> bilinear_resize(std::span<const double> src, int in_h, int in_w, int out_h,
                                    int out_w);

// Nearest-neighbour label resampling; output cell d reads source
// floor((d + 0.5) * in / out).
std::vector<std::int32_t> nearest_resize(std::span<const std::int32_t> src, int in_h, int in_w,
                                         int out_h, int out_w);

}  // namespace diffseg
