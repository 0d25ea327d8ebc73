#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "diffseg/attn_store.hpp"

namespace diffseg {

// Fused tensor of shape (w_max, w_max, w_max, w_max) in double precision.
// Row r = I * w_max + J holds the probability map for location (I, J).
struct AggregatedTensor {
    int w_max = 0;
    std::vector<double> data;

    AggregatedTensor() = default;
    explicit AggregatedTensor(int w);

    std::size_t map_size() const { return static_cast<std::size_t>(w_max) * w_max; }
    std::size_t map_count() const { return map_size(); }

    std::span<const double> map(std::size_t row) const;
    std::span<double> map(std::size_t row);
    std::span<const double> map(int i, int j) const {
        return map(static_cast<std::size_t>(i) * w_max + j);
    }
};

// How per-layer weights R_k are realised. Custom weights are per layer of the
// given resolution; all schemes are normalised to sum to one over the stack.
class WeightScheme {
public:
    enum class Kind { Proportional, OnlyResolution, Custom };

    static WeightScheme proportional();
    static WeightScheme only_resolution(int resolution);
    static WeightScheme custom(std::map<int, double> per_resolution);

    // "propto", "only:<res>", or a path to a JSON object {"<res>": weight}.
    static WeightScheme parse(const std::string& text);

    Kind kind() const { return kind_; }
    int resolution() const { return resolution_; }
    const std::map<int, double>& custom_weights() const { return custom_; }
    std::string to_string() const;

private:
    Kind kind_ = Kind::Proportional;
    int resolution_ = 0;
    std::map<int, double> custom_;
};

// Bilinear upsample of a w x w map to target x target, then renormalised to
// unit mass in double precision. Identity (up to renormalisation) when w == target.
std::vector<double> upsample_map(std::span<const float> map, int w, int target);

std::vector<double> compute_weights(const AttentionStack& stack, const WeightScheme& scheme);

// Weighted sum over layers without the final per-map renormalisation.
// Linear in `weights`; layers with zero weight are skipped.
AggregatedTensor accumulate_layers(const AttentionStack& stack, std::span<const double> weights);

AggregatedTensor aggregate(const AttentionStack& stack, const WeightScheme& scheme);

// Rescales every map of the tensor to unit mass.
void normalize_maps(AggregatedTensor& field);

}  // namespace diffseg
