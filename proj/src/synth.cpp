#include "diffseg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "diffseg/errors.hpp"
#include "diffseg/merger.hpp"

namespace diffseg {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::map<std::int32_t, std::size_t> segment_sizes(const LabelImage& labels) {
    std::map<std::int32_t, std::size_t> sizes;
    for (auto l : labels.labels) ++sizes[l];
    return sizes;
}

std::vector<double> segment_map(const LabelImage& labels, std::int32_t segment, std::size_t size,
                                double epsilon) {
    const double cells = static_cast<double>(labels.labels.size());
    const double inside = (1.0 - epsilon) / static_cast<double>(size);
    const double floor = epsilon / cells;
    std::vector<double> m(labels.labels.size());
    for (std::size_t c = 0; c < m.size(); ++c) {
        m[c] = (labels.labels[c] == segment ? inside : 0.0) + floor;
    }
    return m;
}

}  // namespace

void SynthSpec::validate() const {
    if (label_map.height <= 0 || label_map.height != label_map.width) {
        throw ValidationError("synth: label map must be square and non-empty");
    }
    if (label_map.labels.size() != static_cast<std::size_t>(label_map.height) * label_map.width) {
        throw ValidationError("synth: label map size does not match its shape");
    }
    if (resolutions.empty()) throw ValidationError("synth: no resolutions given");
    for (int w : resolutions) {
        if (w <= 0 || label_map.height % w != 0) {
            throw ValidationError("resolution " + std::to_string(w) +
                                  " does not divide the label map side " +
                                  std::to_string(label_map.height));
        }
    }
    if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ValidationError("synth: epsilon must lie in [0, 1)");
    if (!(noise >= 0.0 && noise < 1.0)) throw ValidationError("synth: noise must lie in [0, 1)");
    if (image_size < 0) throw ValidationError("synth: image size must be non-negative");
}

LabelImage downsample_majority(const LabelImage& labels, int w) {
    if (w <= 0 || labels.height % w != 0 || labels.width % w != 0) {
        throw ValidationError("downsample_majority: " + std::to_string(w) +
                              " does not divide the label map");
    }
    const int by = labels.height / w;
    const int bx = labels.width / w;
    LabelImage out(w, w);
    std::map<std::int32_t, int> votes;
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
            votes.clear();
            for (int y = i * by; y < (i + 1) * by; ++y) {
                for (int x = j * bx; x < (j + 1) * bx; ++x) ++votes[labels.at(y, x)];
            }
            // std::map iterates in ascending id order, so the first maximum wins ties.
            auto best = votes.begin();
            for (auto it = votes.begin(); it != votes.end(); ++it) {
                if (it->second > best->second) best = it;
            }
            out.at(i, j) = best->first;
        }
    }
    return out;
}

SynthOutput generate_stack(const SynthSpec& spec) {
    spec.validate();
    const int w_max = *std::max_element(spec.resolutions.begin(), spec.resolutions.end());
    std::mt19937_64 rng(spec.seed);

    SynthOutput out;
    out.stack.image_height = out.stack.image_width = spec.image_size > 0 ? spec.image_size : 8 * w_max;
    out.stack.time_step = spec.time_step;
    out.stack.source_id = spec.source_id;

    for (int w : spec.resolutions) {
        const LabelImage labels = downsample_majority(spec.label_map, w);
        const auto sizes = segment_sizes(labels);
        std::map<std::int32_t, std::vector<double>> base;
        for (const auto& [seg, size] : sizes) base[seg] = segment_map(labels, seg, size, spec.epsilon);

        const std::size_t n = static_cast<std::size_t>(w) * w;
        std::vector<float> data(n * n);
        std::vector<double> m(n);
        for (std::size_t loc = 0; loc < n; ++loc) {
            m = base.at(labels.labels[loc]);
            if (spec.noise > 0.0) {
                double sum = 0.0;
                for (double& v : m) {
                    v *= 1.0 + spec.noise * (2.0 * unit_uniform(rng) - 1.0);
                    sum += v;
                }
                for (double& v : m) v /= sum;
            }
            std::transform(m.begin(), m.end(), data.begin() + loc * n,
                           [](double v) { return static_cast<float>(v); });
        }
        out.stack.layers.emplace_back(w, std::move(data));
    }
    out.labels = downsample_majority(spec.label_map, w_max);
    return out;
}

double min_cross_distance(const SynthSpec& spec) {
    spec.validate();
    if (spec.epsilon <= 0.0) {
        throw ValidationError("min_cross_distance: epsilon = 0 gives disjoint supports; the distance "
                              "is dominated by the log floor");
    }
    const int w_max = *std::max_element(spec.resolutions.begin(), spec.resolutions.end());
    const LabelImage labels = downsample_majority(spec.label_map, w_max);
    const auto sizes = segment_sizes(labels);
    std::vector<std::vector<double>> maps;
    for (const auto& [seg, size] : sizes) maps.push_back(segment_map(labels, seg, size, spec.epsilon));

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < maps.size(); ++a) {
        for (std::size_t b = a + 1; b < maps.size(); ++b) {
            best = std::min(best, kl_distance(maps[a], maps[b]));
        }
    }
    return best;
}

LabelImage random_block_layout(int w, int coarse, int k, std::uint64_t seed) {
    if (coarse <= 0 || w % coarse != 0) throw ValidationError("layout: coarse must divide w");
    if (k < 1 || k > coarse * coarse) throw ValidationError("layout: bad segment count");
    std::mt19937_64 rng(seed);
    std::vector<int> cells(static_cast<std::size_t>(coarse) * coarse);
    for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
    for (std::size_t i = cells.size() - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i + 1));
        std::swap(cells[i], cells[std::min(j, i)]);
    }
    const std::vector<int> sites(cells.begin(), cells.begin() + k);

    LabelImage grid(coarse, coarse);
    for (int y = 0; y < coarse; ++y) {
        for (int x = 0; x < coarse; ++x) {
            int best = 0;
            long best_d = std::numeric_limits<long>::max();
            for (int s = 0; s < k; ++s) {
                const long dy = y - sites[s] / coarse;
                const long dx = x - sites[s] % coarse;
                const long d = dy * dy + dx * dx;
                if (d < best_d) {
                    best_d = d;
                    best = s;
                }
            }
            grid.at(y, x) = best;
        }
    }
    const int block = w / coarse;
    LabelImage out(w, w);
    for (int y = 0; y < w; ++y) {
        for (int x = 0; x < w; ++x) out.at(y, x) = grid.at(y / block, x / block);
    }
    return out;
}

}  // namespace diffseg
