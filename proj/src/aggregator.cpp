#include "diffseg/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "diffseg/errors.hpp"
#include "diffseg/interp.hpp"
#include "json.hpp"

namespace diffseg {

AggregatedTensor::AggregatedTensor(int w)
    : w_max(w), data(static_cast<std::size_t>(w) * w * w * w, 0.0) {}

std::span<const double> AggregatedTensor::map(std::size_t row) const {
    return {data.data() + row * map_size(), map_size()};
}

std::span<double> AggregatedTensor::map(std::size_t row) {
    return {data.data() + row * map_size(), map_size()};
}

WeightScheme WeightScheme::proportional() { return {}; }

WeightScheme WeightScheme::only_resolution(int resolution) {
    if (resolution <= 0) throw ValidationError("only:<res> needs a positive resolution");
    WeightScheme s;
    s.kind_ = Kind::OnlyResolution;
    s.resolution_ = resolution;
    return s;
}

WeightScheme WeightScheme::custom(std::map<int, double> per_resolution) {
    if (per_resolution.empty()) throw ValidationError("custom weight scheme is empty");
    double total = 0.0;
    for (const auto& [res, w] : per_resolution) {
        if (res <= 0) throw ValidationError("custom weight for non-positive resolution");
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ValidationError("custom weights must be finite and non-negative");
        }
        total += w;
    }
    if (total <= 0.0) throw ValidationError("custom weights are all zero");
    WeightScheme s;
    s.kind_ = Kind::Custom;
    s.custom_ = std::move(per_resolution);
    return s;
}

WeightScheme WeightScheme::parse(const std::string& text) {
    if (text == "propto" || text == "proportional") return proportional();
    if (text.rfind("only:", 0) == 0) {
        const std::string rest = text.substr(5);
        std::size_t used = 0;
        int res = 0;
        try {
            res = std::stoi(rest, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != rest.size()) {
            throw ValidationError("bad weight scheme '" + text + "'");
        }
        return only_resolution(res);
    }
    std::ifstream in(text);
    if (!in) throw IoError("cannot open weight file " + text);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("weight file " + text + ": " + e.what());
    }
    if (!j.is_object()) throw ValidationError("weight file must hold a JSON object");
    std::map<int, double> weights;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) throw ValidationError("weight for " + key + " is not a number");
        try {
            weights[std::stoi(key)] = value.get<double>();
        } catch (const std::exception&) {
            throw ValidationError("weight key '" + key + "' is not a resolution");
        }
    }
    return custom(std::move(weights));
}

std::string WeightScheme::to_string() const {
    switch (kind_) {
        case Kind::Proportional:
            return "propto";
        case Kind::OnlyResolution:
            return "only:" + std::to_string(resolution_);
        case Kind::Custom: {
            std::ostringstream os;
            os << "custom{";
            bool first = true;
            for (const auto& [res, w] : custom_) {
                os << (first ? "" : ",") << res << ":" << w;
                first = false;
            }
            os << "}";
            return os.str();
        }
    }
    return {};
}

namespace {

void check_upsample_args(std::span<const float> map, int w, int target) {
    if (w <= 0 || target <= 0) throw ValidationError("upsample_map: sizes must be positive");
    if (w > target) {
        throw ValidationError("upsample_map: source resolution " + std::to_string(w) +
                              " exceeds target " + std::to_string(target));
    }
    if (map.size() != static_cast<std::size_t>(w) * w) {
        throw ValidationError("upsample_map: map size does not match resolution");
    }
}

// upsample_map into a caller-provided target x target buffer; `scratch`
// holds the widened source between calls.
void upsample_into(std::span<const float> map, int w, int target, std::span<double> out,
                   std::vector<double>& scratch) {
    if (w == target) {
        std::copy(map.begin(), map.end(), out.begin());
    } else {
        scratch.assign(map.begin(), map.end());
        bilinear_resize(scratch, w, w, out, target, target);
    }
    double sum = 0.0;
    for (double v : out) sum += v;
    if (sum > 0.0) {
        for (double& v : out) v /= sum;
    }
}

}  // namespace

std::vector<double> upsample_map(std::span<const float> map, int w, int target) {
    check_upsample_args(map, w, target);
    std::vector<double> out(static_cast<std::size_t>(target) * target);
    std::vector<double> scratch;
    upsample_into(map, w, target, out, scratch);
    return out;
}

std::vector<double> compute_weights(const AttentionStack& stack, const WeightScheme& scheme) {
    if (stack.layers.empty()) throw ValidationError("compute_weights: empty stack");
    std::vector<double> raw(stack.layers.size(), 0.0);

    auto has_resolution = [&](int res) {
        return std::any_of(stack.layers.begin(), stack.layers.end(),
                           [res](const LayerTensor& l) { return l.resolution == res; });
    };

    switch (scheme.kind()) {
        case WeightScheme::Kind::Proportional:
            for (std::size_t k = 0; k < raw.size(); ++k) raw[k] = stack.layers[k].resolution;
            break;
        case WeightScheme::Kind::OnlyResolution:
            if (!has_resolution(scheme.resolution())) {
                throw ValidationError("weight scheme selects resolution " +
                                      std::to_string(scheme.resolution()) +
                                      ", which is absent from the stack");
            }
            for (std::size_t k = 0; k < raw.size(); ++k) {
                raw[k] = stack.layers[k].resolution == scheme.resolution() ? 1.0 : 0.0;
            }
            break;
        case WeightScheme::Kind::Custom:
            for (const auto& [res, w] : scheme.custom_weights()) {
                if (!has_resolution(res)) {
                    throw ValidationError("custom weights name resolution " + std::to_string(res) +
                                          ", which is absent from the stack");
                }
            }
            for (std::size_t k = 0; k < raw.size(); ++k) {
                const auto it = scheme.custom_weights().find(stack.layers[k].resolution);
                raw[k] = it == scheme.custom_weights().end() ? 0.0 : it->second;
            }
            break;
    }

    const double total = std::accumulate(raw.begin(), raw.end(), 0.0);
    if (!(total > 0.0)) throw ValidationError("weight scheme selects no layers");
    for (double& r : raw) r /= total;
    return raw;
}

AggregatedTensor accumulate_layers(const AttentionStack& stack, std::span<const double> weights) {
    if (weights.size() != stack.layers.size()) {
        throw ValidationError("accumulate_layers: one weight per layer required");
    }
    const int w_max = stack.max_resolution();
    if (w_max <= 0) throw ValidationError("accumulate_layers: empty stack");
    AggregatedTensor field(w_max);
    const std::size_t n = field.map_size();

    std::vector<int> deltas(stack.layers.size());
    for (std::size_t k = 0; k < stack.layers.size(); ++k) {
        const int w = stack.layers[k].resolution;
        if (w <= 0 || w_max % w != 0) {
            throw ValidationError("resolution " + std::to_string(w) + " does not divide " +
                                  std::to_string(w_max));
        }
        deltas[k] = w_max / w;
    }

    // Upsampled maps of the current coarse row of every layer. Each output map
    // is summed in layer order, so the result does not depend on the loop nest.
    std::vector<std::vector<double>> cache(stack.layers.size());
    std::vector<int> cached_row(stack.layers.size(), -1);
    std::vector<double> scratch;
    for (int I = 0; I < w_max; ++I) {
        for (std::size_t k = 0; k < stack.layers.size(); ++k) {
            if (weights[k] == 0.0) continue;
            const LayerTensor& layer = stack.layers[k];
            const int a = I / deltas[k];
            if (cached_row[k] == a) continue;
            cached_row[k] = a;
            cache[k].resize(static_cast<std::size_t>(layer.resolution) * n);
            for (int b = 0; b < layer.resolution; ++b) {
                check_upsample_args(layer.map(a, b), layer.resolution, w_max);
                upsample_into(layer.map(a, b), layer.resolution, w_max,
                              std::span<double>(cache[k].data() + static_cast<std::size_t>(b) * n, n),
                              scratch);
            }
        }
        for (int J = 0; J < w_max; ++J) {
            double* dst = field.data.data() + (static_cast<std::size_t>(I) * w_max + J) * n;
            for (std::size_t k = 0; k < stack.layers.size(); ++k) {
                const double r = weights[k];
                if (r == 0.0) continue;
                const double* up = cache[k].data() + static_cast<std::size_t>(J / deltas[k]) * n;
                for (std::size_t c = 0; c < n; ++c) dst[c] += r * up[c];
            }
        }
    }
    return field;
}

void normalize_maps(AggregatedTensor& field) {
    for (std::size_t row = 0; row < field.map_count(); ++row) {
        auto m = field.map(row);
        double sum = 0.0;
        for (double v : m) sum += v;
        if (sum > 0.0) {
            for (double& v : m) v /= sum;
        }
    }
}

AggregatedTensor aggregate(const AttentionStack& stack, const WeightScheme& scheme) {
    const auto weights = compute_weights(stack, scheme);
    AggregatedTensor field = accumulate_layers(stack, weights);
    normalize_maps(field);
    return field;
}

}  // namespace diffseg
