#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace diffseg {

// One head-averaged self-attention tensor of shape (w, w, w, w), stored
// row-major in index order (I, J, y, x). Slice [I, J] is a probability map
// over the w x w cells.
struct LayerTensor {
    int resolution = 0;
    std::vector<float> data;

    LayerTensor() = default;
    LayerTensor(int res, std::vector<float> values);

    std::size_t map_size() const { return static_cast<std::size_t>(resolution) * resolution; }
    std::size_t map_count() const { return map_size(); }

    std::span<const float> map(int i, int j) const;
    std::span<float> map(int i, int j);

    bool operator==(const LayerTensor&) const = default;
};

struct AttentionStack {
    std::vector<LayerTensor> layers;
    int image_height = 0;
    int image_width = 0;
    int time_step = 0;
    std::string source_id;

    int max_resolution() const;

    bool operator==(const AttentionStack&) const = default;
};

inline constexpr double kLoadNormTolerance = 1e-4;
inline constexpr int kFormatVersion = 1;

struct Violation {
    int layer = -1;  // -1 for stack-level problems
    int i = -1;      // map location, -1 when the rule is not per-map
    int j = -1;
    std::string rule;
    std::string message;
};

// Total function: returns every broken invariant, at most one per map.
std::vector<Violation> validate_stack(const AttentionStack& stack);

std::string describe(const Violation& v);

// Writes manifest.json plus layer_NN.bin files. Refuses invalid stacks.
void write_stack(const AttentionStack& stack, const std::filesystem::path& dir);

// Loads and validates. Float payloads are returned bit-exactly as stored;
// maps within kLoadNormTolerance of unit mass are accepted and consumers
// renormalize them in double precision (see upsample_map).
AttentionStack read_stack(const std::filesystem::path& dir);

}  // namespace diffseg
