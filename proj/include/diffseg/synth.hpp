#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffseg/attn_store.hpp"
#include "diffseg/label_image.hpp"

namespace diffseg {

// Idealised attention: the map at (I, J) is (1 - epsilon) * uniform over the
// cells of (I, J)'s segment + epsilon * uniform over all cells.
struct SynthSpec {
    LabelImage label_map;          // square; every resolution must divide its side
    std::vector<int> resolutions;  // one layer per entry, repeats allowed
    double epsilon = 0.05;
    std::uint64_t seed = 0;
    double noise = 0.0;  // multiplicative jitter amplitude in [0, 1)
    int image_size = 0;  // 0 -> 8 * max resolution
    int time_step = 300;
    std::string source_id = "synthetic";

    void validate() const;
};

struct SynthOutput {
    AttentionStack stack;
    LabelImage labels;  // label map at the maximum resolution
};

// Block majority vote; ties go to the smallest label id.
LabelImage downsample_majority(const LabelImage& labels, int w);

SynthOutput generate_stack(const SynthSpec& spec);

// Smallest symmetrized-KL distance between noiseless segment maps of different
// segments at the maximum resolution. Requires epsilon > 0.
double min_cross_distance(const SynthSpec& spec);

// Layout of k segments on a w x w grid, built as a Voronoi partition of k
// random sites on a coarse grid (cell = w / coarse) and expanded. Every
// segment is non-empty and labels are 0..k-1.
LabelImage random_block_layout(int w, int coarse, int k, std::uint64_t seed);

}  // namespace diffseg
