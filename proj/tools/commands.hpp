#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace diffseg::cli {

enum ExitCode : int {
    kOk = 0,
    kIoFailure = 1,
    kValidationFailure = 2,
    kBadFlags = 3,
};

struct SegmentOptions {
    std::filesystem::path attn_dir;
    std::string out_prefix;
    std::string weights = "propto";
    int anchors = 16;
    int iterations = 3;
    std::string tau = "1.0";
    std::string preset;  // "", "coco", "cityscapes"
    std::string size;    // "", "HxW" or "N"
    std::filesystem::path image;
    std::optional<int> expect_t;
};

struct EvalOptions {
    std::filesystem::path pred_dir;
    std::filesystem::path gt_dir;
    std::filesystem::path report;
    int jobs = 1;
    int ignore_label = 255;
};

struct SynthOptions {
    std::filesystem::path labels_png;
    std::filesystem::path out_dir;
    double eps = 0.05;
    std::string resolutions = "64x5,32x5,16x5,8x1";
    std::uint64_t seed = 0;
    double noise = 0.0;
    int image_size = 0;
    int time_step = 300;
    std::string source_id;
};

struct KMeansOptions {
    std::filesystem::path attn_dir;
    std::string out_prefix;
    std::optional<int> k;
    std::filesystem::path k_from_gt;
    std::uint64_t seed = 0;
    int max_iters = 300;
    int restarts = 1;
    std::string weights = "propto";
    std::string size;
};

int cmd_segment(const SegmentOptions& opts);
int cmd_eval(const EvalOptions& opts);
int cmd_synth(const SynthOptions& opts);
int cmd_kmeans(const KMeansOptions& opts);

// Parses argv and dispatches; returns the process exit code.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

// "64x5,32,16x2" -> {64,64,64,64,64,32,16,16}
std::vector<int> parse_resolution_list(const std::string& text);

}  // namespace diffseg::cli
