#include "diffseg/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "diffseg/errors.hpp"
#include "diffseg/interp.hpp"

namespace diffseg {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

class PngReader {
public:
    explicit PngReader(const fs::path& path) : path_(path), file_(open_file(path, "rb")) {
        png_byte sig[8];
        if (std::fread(sig, 1, 8, file_.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
            throw ValidationError(path.string() + " is not a PNG file");
        }
        png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!png_) throw IoError("png_create_read_struct failed");
        info_ = png_create_info_struct(png_);
        if (!info_) throw IoError("png_create_info_struct failed");
    }
    ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    png_structp png() { return png_; }
    png_infop info() { return info_; }
    std::FILE* file() { return file_.get(); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
    FilePtr file_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

// Decodes the image after `configure` has installed transforms; returns rows
// of `png_get_rowbytes` bytes each.
template <typename Configure>
std::vector<std::uint8_t> decode(PngReader& r, int& height, int& width, std::size_t& rowbytes,
                                 Configure configure) {
    std::vector<std::uint8_t> buffer;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(r.png()))) {
        throw ValidationError("corrupt PNG: " + r.path().string());
    }
    png_init_io(r.png(), r.file());
    png_set_sig_bytes(r.png(), 8);
    png_read_info(r.png(), r.info());
    configure(r.png(), r.info());
    png_read_update_info(r.png(), r.info());
    height = static_cast<int>(png_get_image_height(r.png(), r.info()));
    width = static_cast<int>(png_get_image_width(r.png(), r.info()));
    rowbytes = png_get_rowbytes(r.png(), r.info());
    buffer.resize(rowbytes * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(r.png(), rows.data());
    png_read_end(r.png(), nullptr);
    return buffer;
}

void encode(const fs::path& path, int height, int width, int bit_depth, int color_type,
            const std::vector<std::uint8_t>& buffer, std::size_t rowbytes) {
    FilePtr file = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
        rows[y] = const_cast<png_bytep>(buffer.data() + rowbytes * y);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed to write " + path.string());
    }
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(file.get()) != 0) throw IoError("failed to flush " + path.string());
}

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = h * 6.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
        case 0: r = c; g = x; break;
        case 1: r = x; g = c; break;
        case 2: g = c; b = x; break;
        case 3: g = x; b = c; break;
        case 4: r = x; b = c; break;
        default: r = c; b = x; break;
    }
    const double m = v - c;
    auto to_byte = [m](double ch) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(ch + m, 0.0, 1.0) * 255.0));
    };
    return {to_byte(r), to_byte(g), to_byte(b)};
}

}  // namespace

LabelImage read_label_png(const fs::path& path) {
    PngReader reader(path);
    int color_type = 0;
    int bit_depth = 0;
    int height = 0;
    int width = 0;
    std::size_t rowbytes = 0;
    auto buffer = decode(reader, height, width, rowbytes, [&](png_structp png, png_infop info) {
        color_type = png_get_color_type(png, info);
        bit_depth = png_get_bit_depth(png, info);
        if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_PALETTE) {
            return;
        }
        if (bit_depth < 8) png_set_packing(png);
    });
    if (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_PALETTE) {
        throw ValidationError(path.string() + ": label maps must be single-channel PNGs");
    }
    LabelImage out(height, width);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t* row = buffer.data() + rowbytes * y;
        for (int x = 0; x < width; ++x) {
            out.at(y, x) = bit_depth == 16 ? (row[2 * x] << 8) | row[2 * x + 1] : row[x];
        }
    }
    return out;
}

void write_label_png(const fs::path& path, const LabelImage& labels) {
    if (labels.height <= 0 || labels.width <= 0) throw ValidationError("empty label map");
    std::int32_t lo = 0;
    std::int32_t hi = 0;
    for (auto l : labels.labels) {
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    if (lo < 0 || hi > 65535) throw ValidationError("labels out of PNG range");
    const bool wide = hi > 255;
    const std::size_t rowbytes = static_cast<std::size_t>(labels.width) * (wide ? 2 : 1);
    std::vector<std::uint8_t> buffer(rowbytes * labels.height);
    for (int y = 0; y < labels.height; ++y) {
        std::uint8_t* row = buffer.data() + rowbytes * y;
        for (int x = 0; x < labels.width; ++x) {
            const auto v = static_cast<std::uint32_t>(labels.at(y, x));
            if (wide) {
                row[2 * x] = static_cast<std::uint8_t>(v >> 8);
                row[2 * x + 1] = static_cast<std::uint8_t>(v & 0xFF);
            } else {
                row[x] = static_cast<std::uint8_t>(v);
            }
        }
    }
    encode(path, labels.height, labels.width, wide ? 16 : 8, PNG_COLOR_TYPE_GRAY, buffer, rowbytes);
}

void write_label_png(const fs::path& path, const SegmentationMask& mask) {
    write_label_png(path, LabelImage(mask.height, mask.width, mask.labels));
}

RgbImage read_rgb_png(const fs::path& path) {
    PngReader reader(path);
    RgbImage out;
    std::size_t rowbytes = 0;
    auto buffer = decode(reader, out.height, out.width, rowbytes, [](png_structp png, png_infop info) {
        const int color_type = png_get_color_type(png, info);
        if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
            png_set_expand_gray_1_2_4_to_8(png);
            png_set_gray_to_rgb(png);
        }
        if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
        png_set_strip_alpha(png);
    });
    out.pixels.resize(static_cast<std::size_t>(out.height) * out.width * 3);
    for (int y = 0; y < out.height; ++y) {
        std::copy_n(buffer.data() + rowbytes * y, static_cast<std::size_t>(out.width) * 3,
                    out.pixels.data() + static_cast<std::size_t>(y) * out.width * 3);
    }
    return out;
}

void write_rgb_png(const fs::path& path, const RgbImage& image) {
    if (image.height <= 0 || image.width <= 0) throw ValidationError("empty image");
    encode(path, image.height, image.width, 8, PNG_COLOR_TYPE_RGB, image.pixels,
           static_cast<std::size_t>(image.width) * 3);
}

std::array<std::uint8_t, 3> palette_color(int label) {
    constexpr double kGolden = 0.618033988749894848;
    const int index = ((label % 256) + 256) % 256;
    const double hue = std::fmod(index * kGolden, 1.0);
    // alternate value bands so neighbouring ids stay distinguishable in print
    const double value = index % 2 == 0 ? 0.95 : 0.75;
    return hsv_to_rgb(hue, 0.7, value);
}

RgbImage colorize(const SegmentationMask& mask) {
    RgbImage out{mask.height, mask.width,
                 std::vector<std::uint8_t>(static_cast<std::size_t>(mask.height) * mask.width * 3)};
    for (std::size_t i = 0; i < mask.labels.size(); ++i) {
        const auto c = palette_color(mask.labels[i]);
        std::copy(c.begin(), c.end(), out.pixels.begin() + i * 3);
    }
    return out;
}

RgbImage render_overlay(const RgbImage& image, const SegmentationMask& mask, double alpha) {
    if (image.height <= 0 || image.width <= 0) throw ValidationError("overlay: empty image");
    alpha = std::clamp(alpha, 0.0, 1.0);
    RgbImage out = colorize(mask);
    for (int y = 0; y < mask.height; ++y) {
        const int sy = static_cast<int>(((2LL * y + 1) * image.height) / (2LL * mask.height));
        for (int x = 0; x < mask.width; ++x) {
            const int sx = static_cast<int>(((2LL * x + 1) * image.width) / (2LL * mask.width));
            const std::uint8_t* src =
                image.pixels.data() + (static_cast<std::size_t>(sy) * image.width + sx) * 3;
            std::uint8_t* dst = out.pixels.data() + (static_cast<std::size_t>(y) * mask.width + x) * 3;
            for (int ch = 0; ch < 3; ++ch) {
                dst[ch] = static_cast<std::uint8_t>(
                    std::lround((1.0 - alpha) * src[ch] + alpha * dst[ch]));
            }
        }
    }
    return out;
}

}  // namespace diffseg
