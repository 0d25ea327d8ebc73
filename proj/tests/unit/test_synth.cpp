#include "diffseg/errors.hpp"
#include "diffseg/segmenter.hpp"
#include "diffseg/synth.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace diffseg;

namespace {

LabelImage halves(int side) {
    LabelImage img(side, side);
    for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) img.at(y, x) = x < side / 2 ? 0 : 1;
    }
    return img;
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("epsilon 0 gives identical in-segment maps uniform on the segment") {
    SynthSpec spec;
    spec.label_map = random_block_layout(16, 4, 3, 5);
    spec.resolutions = {16};
    spec.epsilon = 0.0;
    const auto out = generate_stack(spec);
    const auto& layer = out.stack.layers[0];
    for (int i = 0; i < 16; ++i) {
        for (int j = 0; j < 16; ++j) {
            const auto seg = out.labels.at(i, j);
            std::size_t size = 0;
            for (auto l : out.labels.labels) size += l == seg;
            const auto m = layer.map(i, j);
            for (std::size_t c = 0; c < m.size(); ++c) {
                const float expected = out.labels.labels[c] == seg ? static_cast<float>(1.0 / size) : 0.0f;
                CHECK(m[c] == expected);
            }
        }
    }
    CHECK(validate_stack(out.stack).empty());
    CHECK(out.stack.image_height == 128);
}

TEST_CASE("two equal halves at epsilon 0.1 are 0.9 ln 19 apart at any size") {
    for (int side : {4, 8, 16, 64}) {
        SynthSpec spec;
        spec.label_map = halves(side);
        spec.resolutions = {side};
        spec.epsilon = 0.1;
        CHECK(min_cross_distance(spec) == doctest::Approx(0.9 * std::log(19.0)).epsilon(1e-12));
    }
}

TEST_CASE("min_cross_distance is symmetric in label names and needs epsilon > 0") {
    SynthSpec spec;
    spec.label_map = random_block_layout(16, 4, 4, 9);
    spec.resolutions = {16, 8};
    spec.epsilon = 0.05;
    const double d = min_cross_distance(spec);
    SynthSpec renamed = spec;
    for (auto& l : renamed.label_map.labels) l = 3 - l;
    CHECK(min_cross_distance(renamed) == doctest::Approx(d).epsilon(1e-13));
    spec.epsilon = 0.0;
    CHECK_THROWS_AS(min_cross_distance(spec), ValidationError);
}

TEST_CASE("tau inside (0, min cross distance) yields exactly K proposals") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const int k = 2 + static_cast<int>(seed);
        SynthSpec spec;
        spec.label_map = random_block_layout(16, 4, k, seed);
        spec.resolutions = {16};
        spec.epsilon = 0.05;
        spec.seed = seed;
        const auto out = generate_stack(spec);
        PipelineParams params;
        params.merge.tau = 0.5 * min_cross_distance(spec);
        params.out_height = params.out_width = 16;
        SegmentTrace trace;
        const auto mask = segment(out.stack, params, &trace);
        CHECK(trace.merge.counts.back() == static_cast<std::size_t>(k));
        CHECK(mask.num_labels == k);
        CHECK(mask.labels == testing::canonical(out.labels.labels));
    }
}

TEST_CASE("majority downsampling breaks ties toward the smallest id") {
    const LabelImage img(2, 2, std::vector<std::int32_t>{5, 3, 3, 5});
    CHECK(downsample_majority(img, 1).labels == std::vector<std::int32_t>{3});
    const LabelImage skew(2, 2, std::vector<std::int32_t>{5, 5, 3, 5});
    CHECK(downsample_majority(skew, 1).labels == std::vector<std::int32_t>{5});
    CHECK_THROWS_AS(downsample_majority(img, 3), ValidationError);
}

TEST_CASE("noise is seeded and keeps maps normalised") {
    SynthSpec spec;
    spec.label_map = halves(8);
    spec.resolutions = {8, 4};
    spec.noise = 0.3;
    spec.seed = 42;
    const auto a = generate_stack(spec);
    const auto b = generate_stack(spec);
    CHECK(a.stack == b.stack);
    CHECK(validate_stack(a.stack).empty());
    spec.seed = 43;
    CHECK_FALSE(generate_stack(spec).stack == a.stack);
}

TEST_CASE("block layouts contain every label") {
    for (int k : {1, 3, 7, 16}) {
        const auto img = random_block_layout(32, 8, k, static_cast<std::uint64_t>(k));
        std::vector<int> seen(k, 0);
        for (auto l : img.labels) {
            REQUIRE(l >= 0);
            REQUIRE(l < k);
            seen[l] = 1;
        }
        for (int s : seen) CHECK(s == 1);
    }
    CHECK_THROWS_AS(random_block_layout(32, 5, 3, 0), ValidationError);
    CHECK_THROWS_AS(random_block_layout(32, 4, 17, 0), ValidationError);
}

TEST_CASE("SynthSpec validation") {
    SynthSpec spec;
    spec.label_map = halves(8);
    spec.resolutions = {3};
    CHECK_THROWS_AS(generate_stack(spec), ValidationError);
    spec.resolutions = {8};
    spec.epsilon = 1.0;
    CHECK_THROWS_AS(generate_stack(spec), ValidationError);
}

}  // TEST_SUITE
