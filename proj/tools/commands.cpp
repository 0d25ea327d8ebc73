#include "commands.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include "CLI11.hpp"
#include "diffseg/aggregator.hpp"
#include "diffseg/attn_store.hpp"
#include "diffseg/baselines.hpp"
#include "diffseg/errors.hpp"
#include "diffseg/evaluator.hpp"
#include "diffseg/image_io.hpp"
#include "diffseg/interp.hpp"
#include "diffseg/segmenter.hpp"
#include "diffseg/synth.hpp"
#include "json.hpp"

namespace diffseg::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class FlagError : public Error {
public:
    using Error::Error;
};

void setup_logging() {
    static bool done = false;
    if (done) return;
    done = true;
    auto logger = spdlog::stderr_color_mt("diffseg");
    logger->set_pattern("diffseg: %^%l%$: %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("DIFFSEG_LOG")) {
        spdlog::set_level(spdlog::level::from_str(env));
    }
}

template <typename Body>
int guarded(const char* command, Body body) {
    setup_logging();
    try {
        return body();
    } catch (const FlagError& e) {
        spdlog::error("{}: {}", command, e.what());
        return kBadFlags;
    } catch (const ValidationError& e) {
        spdlog::error("{}: {}", command, e.what());
        return kValidationFailure;
    } catch (const IoError& e) {
        spdlog::error("{}: {}", command, e.what());
        return kIoFailure;
    } catch (const fs::filesystem_error& e) {
        spdlog::error("{}: {}", command, e.what());
        return kIoFailure;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", command, e.what());
        return kIoFailure;
    }
}

double parse_tau(const std::string& text) {
    double tau = 0.0;
    std::size_t used = 0;
    try {
        tau = std::stod(text, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != text.size() || !(tau > 0.0)) {
        throw FlagError("--tau must be a positive number or 'inf', got '" + text + "'");
    }
    return tau;
}

// "", "N" or "HxW"; zero means "use the stack's image size".
std::pair<int, int> parse_size(const std::string& text) {
    if (text.empty()) return {0, 0};
    const auto x = text.find('x');
    try {
        std::size_t used = 0;
        if (x == std::string::npos) {
            const int n = std::stoi(text, &used);
            if (used == text.size() && n > 0) return {n, n};
        } else {
            const std::string hs = text.substr(0, x);
            const std::string ws = text.substr(x + 1);
            std::size_t uh = 0, uw = 0;
            const int h = std::stoi(hs, &uh);
            const int w = std::stoi(ws, &uw);
            if (uh == hs.size() && uw == ws.size() && h > 0 && w > 0) return {h, w};
        }
    } catch (const std::exception&) {
    }
    throw FlagError("--size must be N or HxW, got '" + text + "'");
}

WeightScheme parse_weights(const std::string& text) {
    try {
        return WeightScheme::parse(text);
    } catch (const ValidationError& e) {
        throw FlagError(e.what());
    }
}

json tau_json(double tau) { return std::isinf(tau) ? json("inf") : json(tau); }

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

fs::path with_suffix(const std::string& prefix, const std::string& suffix) {
    fs::path p(prefix + suffix);
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

json stack_json(const fs::path& dir, const AttentionStack& stack) {
    json res = json::array();
    for (const auto& l : stack.layers) res.push_back(l.resolution);
    return {{"path", dir.string()},
            {"source_id", stack.source_id},
            {"image_height", stack.image_height},
            {"image_width", stack.image_width},
            {"time_step", stack.time_step},
            {"resolutions", res}};
}

SegmentationMask mask_from_labels(LabelImage labels) {
    SegmentationMask mask;
    mask.height = labels.height;
    mask.width = labels.width;
    std::set<std::int32_t> distinct(labels.labels.begin(), labels.labels.end());
    mask.num_labels = static_cast<int>(distinct.size());
    mask.num_proposals = mask.num_labels;
    mask.labels = std::move(labels.labels);
    return mask;
}

}  // namespace

std::vector<int> parse_resolution_list(const std::string& text) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const std::string item =
            text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
        const auto x = item.find('x');
        try {
            std::size_t used = 0;
            const std::string res_text = item.substr(0, x);
            const int res = std::stoi(res_text, &used);
            if (used != res_text.size() || res <= 0) throw FlagError("");
            int count = 1;
            if (x != std::string::npos) {
                const std::string count_text = item.substr(x + 1);
                count = std::stoi(count_text, &used);
                if (used != count_text.size() || count <= 0) throw FlagError("");
            }
            out.insert(out.end(), count, res);
        } catch (const std::exception&) {
            throw FlagError("bad resolution list entry '" + item + "' (expected RES or RESxCOUNT)");
        }
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

int cmd_segment(const SegmentOptions& opts) {
    return guarded("segment", [&] {
        const auto t_start = std::chrono::steady_clock::now();
        PipelineParams params;
        params.weights = parse_weights(opts.weights);
        params.anchors_per_side = opts.anchors;
        params.merge.iterations = opts.iterations;
        if (opts.preset == "coco") {
            params.merge.tau = 1.1;
        } else if (opts.preset == "cityscapes") {
            params.merge.tau = 0.9;
        } else if (!opts.preset.empty()) {
            throw FlagError("unknown preset '" + opts.preset + "' (coco, cityscapes)");
        } else {
            params.merge.tau = parse_tau(opts.tau);
        }
        if (opts.iterations < 1) throw FlagError("--iterations must be >= 1");
        if (opts.anchors < 1) throw FlagError("--anchors must be >= 1");
        std::tie(params.out_height, params.out_width) = parse_size(opts.size);
        params.expected_time_step = opts.expect_t;

        auto t0 = std::chrono::steady_clock::now();
        const AttentionStack stack = read_stack(opts.attn_dir);
        const double load_ms = ms_since(t0);
        spdlog::info("loaded {} layers from {}", stack.layers.size(), opts.attn_dir.string());

        SegmentTrace trace;
        const SegmentationMask mask = segment(stack, params, &trace);
        spdlog::info("{} proposals -> {} labels", mask.num_proposals, mask.num_labels);

        write_label_png(with_suffix(opts.out_prefix, "_mask.png"), mask);
        if (!opts.image.empty()) {
            const RgbImage image = read_rgb_png(opts.image);
            write_rgb_png(with_suffix(opts.out_prefix, "_overlay.png"), render_overlay(image, mask));
        }

        json meta = {
            {"stack", stack_json(opts.attn_dir, stack)},
            {"params",
             {{"weights", params.weights.to_string()},
              {"anchors_per_side", params.anchors_per_side},
              {"iterations", params.merge.iterations},
              {"tau", tau_json(params.merge.tau)},
              {"preset", opts.preset.empty() ? json(nullptr) : json(opts.preset)},
              {"output_height", mask.height},
              {"output_width", mask.width}}},
            {"num_proposals", mask.num_proposals},
            {"num_labels", mask.num_labels},
            {"proposal_of_label", mask.source_proposal},
            {"proposals_per_iteration", trace.merge.counts},
            {"timings_ms",
             {{"load", load_ms},
              {"aggregate", trace.aggregate_ms},
              {"merge", trace.merge_ms},
              {"nms", trace.nms_ms},
              {"total", ms_since(t_start)}}},
        };
        write_json(with_suffix(opts.out_prefix, "_meta.json"), meta);
        return static_cast<int>(kOk);
    });
}

int cmd_eval(const EvalOptions& opts) {
    return guarded("eval", [&] {
        if (opts.jobs < 1) throw FlagError("--jobs must be >= 1");
        for (const auto& dir : {opts.pred_dir, opts.gt_dir}) {
            if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
        }
        auto png_files = [](const fs::path& dir) {
            std::vector<std::string> names;
            for (const auto& entry : fs::directory_iterator(dir)) {
                if (entry.is_regular_file() && entry.path().extension() == ".png") {
                    names.push_back(entry.path().filename().string());
                }
            }
            std::sort(names.begin(), names.end());
            return names;
        };
        const auto gt_names = png_files(opts.gt_dir);
        const auto pred_names = png_files(opts.pred_dir);
        const std::set<std::string> pred_set(pred_names.begin(), pred_names.end());

        struct Job {
            std::string id;
            fs::path pred;
            fs::path gt;
        };
        std::vector<Job> jobs;
        std::set<std::string> used_preds;
        json unpaired_gt = json::array();
        for (const auto& name : gt_names) {
            const std::string stem = fs::path(name).stem().string();
            std::string match;
            if (pred_set.count(name)) match = name;
            else if (pred_set.count(stem + "_mask.png")) match = stem + "_mask.png";
            if (match.empty()) {
                spdlog::warn("no prediction for ground truth {}", name);
                unpaired_gt.push_back(name);
                continue;
            }
            used_preds.insert(match);
            jobs.push_back({stem, opts.pred_dir / match, opts.gt_dir / name});
        }
        json unpaired_pred = json::array();
        for (const auto& name : pred_names) {
            if (!used_preds.count(name)) {
                spdlog::warn("no ground truth for prediction {}", name);
                unpaired_pred.push_back(name);
            }
        }
        if (jobs.empty()) {
            throw ValidationError("no prediction/ground-truth pairs between " +
                                  opts.pred_dir.string() + " and " + opts.gt_dir.string());
        }

        std::vector<ImageResult> results(jobs.size());
        auto work = [&](std::size_t i) {
            const LabelImage gt = read_label_png(jobs[i].gt);
            LabelImage pred = read_label_png(jobs[i].pred);
            if (pred.height != gt.height || pred.width != gt.width) {
                pred = LabelImage(gt.height, gt.width,
                                  nearest_resize(pred.labels, pred.height, pred.width, gt.height,
                                                 gt.width));
            }
            results[i] = evaluate_image(jobs[i].id, mask_from_labels(std::move(pred)), gt,
                                        opts.ignore_label);
        };
        const std::size_t workers = std::min<std::size_t>(opts.jobs, jobs.size());
        if (workers <= 1) {
            for (std::size_t i = 0; i < jobs.size(); ++i) work(i);
        } else {
            std::vector<std::exception_ptr> errors(workers);
            std::vector<std::thread> threads;
            for (std::size_t t = 0; t < workers; ++t) {
                threads.emplace_back([&, t] {
                    try {
                        for (std::size_t i = t; i < jobs.size(); i += workers) work(i);
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            }
            for (auto& th : threads) th.join();
            for (auto& e : errors) {
                if (e) std::rethrow_exception(e);
            }
        }

        const EvalReport report = summarize(std::move(results));
        json per_image = json::array();
        for (const auto& r : report.per_image) {
            json assignment = json::object();
            for (const auto& [p, g] : r.assignment) assignment[std::to_string(p)] = g;
            per_image.push_back({{"source_id", r.source_id},
                                 {"acc", r.acc},
                                 {"miou", r.miou},
                                 {"pixels", r.pixels},
                                 {"skipped", r.skipped},
                                 {"assignment", assignment}});
        }
        json out = {{"aggregate", {{"acc", report.acc}, {"miou", report.miou}, {"images", report.images}}},
                    {"per_image", per_image},
                    {"unpaired", {{"ground_truth", unpaired_gt}, {"predictions", unpaired_pred}}},
                    {"ignore_label", opts.ignore_label}};
        write_json(opts.report, out);
        spdlog::info("ACC {:.4f} mIoU {:.4f} over {} images", report.acc, report.miou, report.images);
        return static_cast<int>(kOk);
    });
}

int cmd_synth(const SynthOptions& opts) {
    return guarded("synth", [&] {
        if (!(opts.eps > 0.0)) {
            throw FlagError("--eps must be > 0: with eps = 0 segment maps have disjoint support "
                            "and the KL distance degenerates to the log floor");
        }
        if (opts.eps >= 1.0) throw FlagError("--eps must be < 1");
        SynthSpec spec;
        spec.label_map = read_label_png(opts.labels_png);
        spec.resolutions = parse_resolution_list(opts.resolutions);
        spec.epsilon = opts.eps;
        spec.seed = opts.seed;
        spec.noise = opts.noise;
        spec.image_size = opts.image_size;
        spec.time_step = opts.time_step;
        spec.source_id =
            opts.source_id.empty() ? opts.labels_png.stem().string() : opts.source_id;
        const SynthOutput out = generate_stack(spec);
        write_stack(out.stack, opts.out_dir);
        spdlog::info("wrote {} layers to {}", out.stack.layers.size(), opts.out_dir.string());
        return static_cast<int>(kOk);
    });
}

int cmd_kmeans(const KMeansOptions& opts) {
    return guarded("kmeans", [&] {
        KMeansConfig config;
        if (opts.k && !opts.k_from_gt.empty()) throw FlagError("--k and --k-from-gt are exclusive");
        if (opts.k) {
            config.k = *opts.k;
        } else if (!opts.k_from_gt.empty()) {
            const LabelImage gt = read_label_png(opts.k_from_gt);
            std::set<std::int32_t> classes(gt.labels.begin(), gt.labels.end());
            classes.erase(kIgnoreLabel);
            if (classes.empty()) throw ValidationError(opts.k_from_gt.string() + " has no classes");
            config.k = static_cast<int>(classes.size());
        }
        if (config.k < 1) throw FlagError("--k must be >= 1");
        if (opts.max_iters < 1) throw FlagError("--max-iters must be >= 1");
        if (opts.restarts < 1) throw FlagError("--restarts must be >= 1");
        config.seed = opts.seed;
        config.max_iters = opts.max_iters;
        config.restarts = opts.restarts;
        const WeightScheme weights = parse_weights(opts.weights);
        auto [out_h, out_w] = parse_size(opts.size);

        const AttentionStack stack = read_stack(opts.attn_dir);
        if (out_h == 0) {
            out_h = stack.image_height;
            out_w = stack.image_width;
        }
        const AggregatedTensor field = aggregate(stack, weights);
        KMeansResult details;
        const SegmentationMask mask = kmeans_segment(field, config, out_h, out_w, &details);
        for (const auto& w : details.warnings) spdlog::warn("{}", w);

        write_label_png(with_suffix(opts.out_prefix, "_mask.png"), mask);
        json meta = {{"stack", stack_json(opts.attn_dir, stack)},
                     {"params",
                      {{"weights", weights.to_string()},
                       {"k", config.k},
                       {"seed", config.seed},
                       {"max_iters", config.max_iters},
                       {"restarts", config.restarts}}},
                     {"k_used", details.k_used},
                     {"num_labels", mask.num_labels},
                     {"iterations", details.iterations},
                     {"inertia", details.inertia},
                     {"warnings", details.warnings}};
        write_json(with_suffix(opts.out_prefix, "_meta.json"), meta);
        return static_cast<int>(kOk);
    });
}

int run(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Unsupervised zero-shot segmentation from diffusion self-attention"};
    app.require_subcommand(1);

    SegmentOptions seg;
    auto* segment_cmd = app.add_subcommand("segment", "Segment an attention stack");
    segment_cmd->add_option("attn_dir", seg.attn_dir, "Attention stack directory")->required();
    segment_cmd->add_option("-o,--out", seg.out_prefix, "Output prefix")->required();
    segment_cmd->add_option("--weights", seg.weights, "propto | only:<res> | weights.json")
        ->capture_default_str();
    segment_cmd->add_option("--anchors", seg.anchors, "Anchor grid side M")->capture_default_str();
    segment_cmd->add_option("--iterations", seg.iterations, "Merging iterations N")
        ->capture_default_str();
    auto* tau_opt =
        segment_cmd->add_option("--tau", seg.tau, "KL threshold (number or inf)")->capture_default_str();
    segment_cmd->add_option("--preset", seg.preset, "coco (tau 1.1) | cityscapes (tau 0.9)")
        ->excludes(tau_opt);
    segment_cmd->add_option("--size", seg.size, "Output size N or HxW (default: image size)");
    segment_cmd->add_option("--image", seg.image, "Source image for the overlay PNG");
    segment_cmd->add_option("--expect-t", seg.expect_t, "Reject stacks extracted at another time step");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Score predicted masks against ground truth");
    eval_cmd->add_option("pred_dir", ev.pred_dir)->required();
    eval_cmd->add_option("gt_dir", ev.gt_dir)->required();
    eval_cmd->add_option("-r,--report", ev.report, "Report JSON path")->required();
    eval_cmd->add_option("-j,--jobs", ev.jobs, "Parallel images")->capture_default_str();
    eval_cmd->add_option("--ignore", ev.ignore_label, "Ignore label")->capture_default_str();

    SynthOptions syn;
    auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic stack from a label PNG");
    synth_cmd->add_option("labels_png", syn.labels_png)->required();
    synth_cmd->add_option("out_dir", syn.out_dir)->required();
    synth_cmd->add_option("--eps", syn.eps, "Uniform mixing weight")->capture_default_str();
    synth_cmd->add_option("--resolutions", syn.resolutions, "RES[xCOUNT],...")->capture_default_str();
    synth_cmd->add_option("--seed", syn.seed)->capture_default_str();
    synth_cmd->add_option("--noise", syn.noise, "Multiplicative jitter")->capture_default_str();
    synth_cmd->add_option("--image-size", syn.image_size, "Recorded image size (0: 8 x max res)");
    synth_cmd->add_option("--t", syn.time_step, "Recorded time step")->capture_default_str();
    synth_cmd->add_option("--source-id", syn.source_id);

    KMeansOptions km;
    auto* kmeans_cmd = app.add_subcommand("kmeans", "K-means baseline on the aggregated tensor");
    kmeans_cmd->add_option("attn_dir", km.attn_dir)->required();
    kmeans_cmd->add_option("-o,--out", km.out_prefix, "Output prefix")->required();
    auto* k_opt = kmeans_cmd->add_option("-k,--k", km.k, "Cluster count");
    kmeans_cmd->add_option("--k-from-gt", km.k_from_gt, "Take k from a ground-truth PNG")
        ->excludes(k_opt);
    kmeans_cmd->add_option("--seed", km.seed)->capture_default_str();
    kmeans_cmd->add_option("--max-iters", km.max_iters)->capture_default_str();
    kmeans_cmd->add_option("--restarts", km.restarts)->capture_default_str();
    kmeans_cmd->add_option("--weights", km.weights)->capture_default_str();
    kmeans_cmd->add_option("--size", km.size);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kBadFlags;
    }

    if (*segment_cmd) return cmd_segment(seg);
    if (*eval_cmd) return cmd_eval(ev);
    if (*synth_cmd) return cmd_synth(syn);
    if (*kmeans_cmd) {
        if (!km.k && km.k_from_gt.empty()) km.k = 6;
        return cmd_kmeans(km);
    }
    return kBadFlags;
}

int run(const std::vector<std::string>& args) {
    std::vector<std::string> storage = args;
    storage.insert(storage.begin(), "diffseg");
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace diffseg::cli
