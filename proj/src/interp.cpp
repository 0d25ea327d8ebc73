#include "diffseg/interp.hpp"

#include <algorithm>
#include <cmath>

#include "diffseg/errors.hpp"

namespace diffseg {

namespace {

struct AxisTap {
    int lo;
    int hi;
    double frac;  // weight of hi
};

std::vector<AxisTap> axis_taps(int in, int out) {
    std::vector<AxisTap> taps(out);
    for (int d = 0; d < out; ++d) {
        // ((2d + 1) * in) / (2 * out) - 0.5, kept in one division so that
        // integer-ratio cases land on exact coordinates.
        double s = static_cast<double>((2 * static_cast<long long>(d) + 1) * in) /
                       static_cast<double>(2 * static_cast<long long>(out)) -
                   0.5;
        if (s < 0.0) s = 0.0;
        int lo = static_cast<int>(std::floor(s));
        if (lo > in - 1) lo = in - 1;
        const int hi = std::min(lo + 1, in - 1);
        taps[d] = {lo, hi, hi == lo ? 0.0 : s - lo};
    }
    return taps;
}

}  // namespace

void bilinear_resize(std::span<const double> src, int in_h, int in_w, std::span<double> dst,
                     int out_h, int out_w) {
    if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0) {
        throw ValidationError("bilinear_resize: sizes must be positive");
    }
    if (src.size() != static_cast<std::size_t>(in_h) * in_w ||
        dst.size() != static_cast<std::size_t>(out_h) * out_w) {
        throw ValidationError("bilinear_resize: buffer size does not match shape");
    }
    if (in_h == out_h && in_w == out_w) {
        std::copy(src.begin(), src.end(), dst.begin());
        return;
    }

    const auto rows = axis_taps(in_h, out_h);
    const auto cols = axis_taps(in_w, out_w);

    // Horizontal pass into an in_h x out_w buffer, then vertical.
    std::vector<double> tmp(static_cast<std::size_t>(in_h) * out_w);
    for (int y = 0; y < in_h; ++y) {
        const double* row = src.data() + static_cast<std::size_t>(y) * in_w;
        double* t = tmp.data() + static_cast<std::size_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x) {
            const auto& c = cols[x];
            t[x] = row[c.lo] * (1.0 - c.frac) + row[c.hi] * c.frac;
        }
    }
    for (int y = 0; y < out_h; ++y) {
        const auto& r = rows[y];
        const double* top = tmp.data() + static_cast<std::size_t>(r.lo) * out_w;
        const double* bottom = tmp.data() + static_cast<std::size_t>(r.hi) * out_w;
        double* o = dst.data() + static_cast<std::size_t>(y) * out_w;
        for (int x = 0; x < out_w; ++x) {
            o[x] = top[x] * (1.0 - r.frac) + bottom[x] * r.frac;
        }
    }
}

std::vector<double> bilinear_resize(std::span<const double> src, int in_h, int in_w, int out_h,
                                    int out_w) {
    std::vector<double> out(static_cast<std::size_t>(out_h) * out_w);
    bilinear_resize(src, in_h, in_w, out, out_h, out_w);
    return out;
}

std::vector<std::int32_t> nearest_resize(std::span<const std::int32_t> src, int in_h, int in_w,
                                         int out_h, int out_w) {
    if (in_h <= 0 || in_w <= 0 || out_h <= 0 || out_w <= 0) {
        throw ValidationError("nearest_resize: sizes must be positive");
    }
    if (src.size() != static_cast<std::size_t>(in_h) * in_w) {
        throw ValidationError("nearest_resize: buffer size does not match shape");
    }
    std::vector<int> row_of(out_h);
    std::vector<int> col_of(out_w);
    for (int y = 0; y < out_h; ++y) {
        row_of[y] = static_cast<int>(((2LL * y + 1) * in_h) / (2LL * out_h));
    }
    for (int x = 0; x < out_w; ++x) {
        col_of[x] = static_cast<int>(((2LL * x + 1) * in_w) / (2LL * out_w));
    }
    std::vector<std::int32_t> out(static_cast<std::size_t>(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            out[static_cast<std::size_t>(y) * out_w + x] =
                src[static_cast<std::size_t>(row_of[y]) * in_w + col_of[x]];
        }
    }
    return out;
}

}  // namespace diffseg
