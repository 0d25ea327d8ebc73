#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "diffseg/label_image.hpp"
#include "diffseg/segmenter.hpp"

namespace diffseg {

struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // interleaved RGB, row-major
};

// Single-channel label PNG: 8-bit grayscale or palette (indices are labels).
LabelImage read_label_png(const std::filesystem::path& path);

// 8-bit grayscale when every label fits in a byte, 16-bit grayscale otherwise.
void write_label_png(const std::filesystem::path& path, const LabelImage& labels);
void write_label_png(const std::filesystem::path& path, const SegmentationMask& mask);

// Any PNG, expanded to 8-bit RGB (alpha dropped, 16-bit stripped).
RgbImage read_rgb_png(const std::filesystem::path& path);
void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);

// Fixed 256-entry palette from golden-ratio hue stepping; label l uses entry l % 256.
std::array<std::uint8_t, 3> palette_color(int label);

// Alpha-blends palette colours over the image; the image is nearest-resized
// to the mask size when they differ.
RgbImage render_overlay(const RgbImage& image, const SegmentationMask& mask, double alpha = 0.5);

// Palette rendering of the mask alone.
RgbImage colorize(const SegmentationMask& mask);

}  // namespace diffseg
