#include "diffseg/attn_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "diffseg/errors.hpp"
#include "json.hpp"

namespace diffseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::array<char, 8> kMagic = {'A', 'T', 'T', 'N', '4', 'D', '\0', '\1'};
constexpr std::size_t kHeaderBytes = kMagic.size() + sizeof(std::uint32_t);

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
    }
}

void swap_floats_if_big_endian(std::vector<float>& values) {
    if constexpr (std::endian::native != std::endian::little) {
        for (float& f : values) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            bits = to_little(bits);
            std::memcpy(&f, &bits, sizeof bits);
        }
    }
}

std::size_t tensor_elements(std::uint64_t w) { return static_cast<std::size_t>(w * w * w * w); }

std::string layer_file_name(std::size_t index) {
    std::ostringstream os;
    os << "layer_" << std::setw(2) << std::setfill('0') << index << ".bin";
    return os.str();
}

void write_layer(const LayerTensor& layer, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(kMagic.data(), kMagic.size());
    const std::uint32_t w = to_little(static_cast<std::uint32_t>(layer.resolution));
    out.write(reinterpret_cast<const char*>(&w), sizeof w);
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(layer.data.data()),
                  static_cast<std::streamsize>(layer.data.size() * sizeof(float)));
    } else {
        std::vector<float> copy = layer.data;
        swap_floats_if_big_endian(copy);
        out.write(reinterpret_cast<const char*>(copy.data()),
                  static_cast<std::streamsize>(copy.size() * sizeof(float)));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

LayerTensor read_layer(const fs::path& path, int expected_resolution) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) {
        throw ValidationError("missing layer file " + path.string());
    }
    const auto file_size = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());

    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::array<char, 8> magic{};
    std::uint32_t w_raw = 0;
    in.read(magic.data(), magic.size());
    in.read(reinterpret_cast<char*>(&w_raw), sizeof w_raw);
    if (!in || magic != kMagic) {
        throw ValidationError("bad tensor header in " + path.string());
    }
    const std::uint32_t w = to_little(w_raw);
    if (static_cast<int>(w) != expected_resolution) {
        throw ValidationError("shape mismatch in " + path.string() + ": manifest says resolution " +
                              std::to_string(expected_resolution) + ", header says " +
                              std::to_string(w));
    }
    const std::size_t count = tensor_elements(w);
    const std::uint64_t expected_size = kHeaderBytes + count * sizeof(float);
    if (file_size != expected_size) {
        throw ValidationError("shape mismatch in " + path.string() + ": expected " +
                              std::to_string(expected_size) + " bytes for " + std::to_string(w) +
                              "^4 floats, found " + std::to_string(file_size));
    }
    std::vector<float> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw IoError("short read from " + path.string());
    swap_floats_if_big_endian(values);
    return LayerTensor(static_cast<int>(w), std::move(values));
}

template <typename T>
T required(const json& j, const char* key, const fs::path& where) {
    if (!j.contains(key)) {
        throw ValidationError(where.string() + ": manifest is missing \"" + key + "\"");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ValidationError(where.string() + ": bad value for \"" + key + "\": " + e.what());
    }
}

}  // namespace

LayerTensor::LayerTensor(int res, std::vector<float> values)
    : resolution(res), data(std::move(values)) {}

std::span<const float> LayerTensor::map(int i, int j) const {
    const std::size_t n = map_size();
    const std::size_t offset = (static_cast<std::size_t>(i) * resolution + j) * n;
    return {data.data() + offset, n};
}

std::span<float> LayerTensor::map(int i, int j) {
    const std::size_t n = map_size();
    const std::size_t offset = (static_cast<std::size_t>(i) * resolution + j) * n;
    return {data.data() + offset, n};
}

int AttentionStack::max_resolution() const {
    int w = 0;
    for (const auto& layer : layers) w = std::max(w, layer.resolution);
    return w;
}

std::vector<Violation> validate_stack(const AttentionStack& stack) {
    std::vector<Violation> out;
    if (stack.layers.empty()) {
        out.push_back({-1, -1, -1, "non_empty", "stack has no layers"});
        return out;
    }
    if (stack.image_height <= 0 || stack.image_width <= 0) {
        out.push_back({-1, -1, -1, "image_size",
                       "image size must be positive, got " + std::to_string(stack.image_height) +
                           "x" + std::to_string(stack.image_width)});
    }

    const int w_max = stack.max_resolution();
    for (std::size_t k = 0; k < stack.layers.size(); ++k) {
        const auto& layer = stack.layers[k];
        const int layer_id = static_cast<int>(k);
        if (layer.resolution <= 0) {
            out.push_back({layer_id, -1, -1, "resolution",
                           "resolution must be positive, got " + std::to_string(layer.resolution)});
            continue;
        }
        if (w_max % layer.resolution != 0) {
            out.push_back({layer_id, -1, -1, "divisibility",
                           "resolution " + std::to_string(layer.resolution) +
                               " does not divide the maximum resolution " + std::to_string(w_max)});
        }
        if (layer.data.size() != tensor_elements(layer.resolution)) {
            out.push_back({layer_id, -1, -1, "shape",
                           "expected " + std::to_string(tensor_elements(layer.resolution)) +
                               " values, found " + std::to_string(layer.data.size())});
            continue;
        }
        for (int i = 0; i < layer.resolution; ++i) {
            for (int j = 0; j < layer.resolution; ++j) {
                const auto m = layer.map(i, j);
                double sum = 0.0;
                bool bad_entry = false;
                for (float v : m) {
                    if (!(v >= 0.0f) || !std::isfinite(v)) {
                        bad_entry = true;
                        break;
                    }
                    sum += v;
                }
                if (bad_entry) {
                    out.push_back({layer_id, i, j, "non_negative",
                                   "map contains a negative or non-finite entry"});
                } else if (std::abs(sum - 1.0) > kLoadNormTolerance) {
                    std::ostringstream os;
                    os << "map sums to " << std::setprecision(9) << sum;
                    out.push_back({layer_id, i, j, "normalization", os.str()});
                }
            }
        }
    }
    return out;
}

std::string describe(const Violation& v) {
    std::ostringstream os;
    if (v.layer >= 0) os << "layer " << v.layer;
    else os << "stack";
    if (v.i >= 0) os << " map (" << v.i << "," << v.j << ")";
    os << " [" << v.rule << "]: " << v.message;
    return os.str();
}

void write_stack(const AttentionStack& stack, const fs::path& dir) {
    const auto violations = validate_stack(stack);
    if (!violations.empty()) {
        throw ValidationError("refusing to write invalid stack: " + describe(violations.front()) +
                              (violations.size() > 1
                                   ? " (+" + std::to_string(violations.size() - 1) + " more)"
                                   : std::string{}));
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    json manifest = {
        {"format_version", kFormatVersion},
        {"image_height", stack.image_height},
        {"image_width", stack.image_width},
        {"time_step", stack.time_step},
        {"source_id", stack.source_id},
        {"layers", json::array()},
    };
    for (std::size_t k = 0; k < stack.layers.size(); ++k) {
        const std::string name = layer_file_name(k);
        write_layer(stack.layers[k], dir / name);
        manifest["layers"].push_back({{"resolution", stack.layers[k].resolution}, {"file", name}});
    }

    const fs::path manifest_path = dir / "manifest.json";
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + manifest_path.string() + " for writing");
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + manifest_path.string());
}

AttentionStack read_stack(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::error_code ec;
    if (!fs::is_regular_file(manifest_path, ec)) {
        throw ValidationError("missing manifest: " + manifest_path.string());
    }
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());

    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(manifest_path.string() + ": corrupt manifest: " + e.what());
    }
    if (!manifest.is_object()) {
        throw ValidationError(manifest_path.string() + ": manifest must be a JSON object");
    }

    const int version = required<int>(manifest, "format_version", manifest_path);
    if (version != kFormatVersion) {
        throw ValidationError(manifest_path.string() + ": unsupported format_version " +
                              std::to_string(version));
    }

    AttentionStack stack;
    stack.image_height = required<int>(manifest, "image_height", manifest_path);
    stack.image_width = required<int>(manifest, "image_width", manifest_path);
    stack.time_step = required<int>(manifest, "time_step", manifest_path);
    stack.source_id = required<std::string>(manifest, "source_id", manifest_path);

    const json layers = required<json>(manifest, "layers", manifest_path);
    if (!layers.is_array()) {
        throw ValidationError(manifest_path.string() + ": \"layers\" must be an array");
    }
    for (const auto& entry : layers) {
        const int res = required<int>(entry, "resolution", manifest_path);
        const auto file = required<std::string>(entry, "file", manifest_path);
        if (res <= 0) {
            throw ValidationError(manifest_path.string() + ": non-positive resolution " +
                                  std::to_string(res));
        }
        stack.layers.push_back(read_layer(dir / file, res));
    }

    const auto violations = validate_stack(stack);
    if (!violations.empty()) {
        throw ValidationError(dir.string() + ": " + describe(violations.front()) +
                              (violations.size() > 1
                                   ? " (+" + std::to_string(violations.size() - 1) + " more)"
                                   : std::string{}));
    }
    return stack;
}

}  // namespace diffseg
