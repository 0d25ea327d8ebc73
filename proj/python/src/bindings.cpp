#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

#include "diffseg/aggregator.hpp"
#include "diffseg/attn_store.hpp"
#include "diffseg/baselines.hpp"
#include "diffseg/errors.hpp"
#include "diffseg/evaluator.hpp"
#include "diffseg/merger.hpp"
#include "diffseg/segmenter.hpp"
#include "diffseg/synth.hpp"

namespace py = pybind11;
using namespace diffseg;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

py::array_t<float> layer_to_numpy(const LayerTensor& layer) {
    const py::ssize_t w = layer.resolution;
    py::array_t<float> out({w, w, w, w});
    std::copy(layer.data.begin(), layer.data.end(), out.mutable_data());
    return out;
}

LayerTensor layer_from_numpy(const FloatArray& a) {
    if (a.ndim() != 4 || a.shape(0) != a.shape(1) || a.shape(0) != a.shape(2) ||
        a.shape(0) != a.shape(3)) {
        throw ValidationError("layer arrays must have shape (w, w, w, w)");
    }
    return LayerTensor(static_cast<int>(a.shape(0)),
                       std::vector<float>(a.data(), a.data() + a.size()));
}

AggregatedTensor field_from_numpy(const DoubleArray& a) {
    if (a.ndim() != 4 || a.shape(0) != a.shape(1) || a.shape(0) != a.shape(2) ||
        a.shape(0) != a.shape(3)) {
        throw ValidationError("field must have shape (w, w, w, w)");
    }
    AggregatedTensor field(static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), field.data.begin());
    return field;
}

py::array_t<double> field_to_numpy(const AggregatedTensor& field) {
    const py::ssize_t w = field.w_max;
    py::array_t<double> out({w, w, w, w});
    std::copy(field.data.begin(), field.data.end(), out.mutable_data());
    return out;
}

py::array_t<double> proposals_to_numpy(const ProposalList& list) {
    const py::ssize_t n = static_cast<py::ssize_t>(list.size());
    const py::ssize_t s = list.side;
    py::array_t<double> out({n, s, s});
    double* dst = out.mutable_data();
    for (const auto& m : list.maps) dst = std::copy(m.begin(), m.end(), dst);
    return out;
}

ProposalList proposals_from_numpy(const DoubleArray& a) {
    if (a.ndim() != 3 || a.shape(1) != a.shape(2)) {
        throw ValidationError("proposals must have shape (n, w, w)");
    }
    ProposalList list{static_cast<int>(a.shape(1)), {}};
    const std::size_t n = static_cast<std::size_t>(a.shape(1) * a.shape(2));
    for (py::ssize_t p = 0; p < a.shape(0); ++p) {
        const double* src = a.data() + p * n;
        list.maps.emplace_back(src, src + n);
    }
    return list;
}

py::array_t<std::int32_t> labels_to_numpy(int h, int w, const std::vector<std::int32_t>& labels) {
    py::array_t<std::int32_t> out({static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
    std::copy(labels.begin(), labels.end(), out.mutable_data());
    return out;
}

LabelImage labels_from_numpy(const IntArray& a) {
    if (a.ndim() != 2) throw ValidationError("label maps must be 2-D");
    return LabelImage(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                      std::vector<std::int32_t>(a.data(), a.data() + a.size()));
}

SegmentationMask mask_from_numpy(const IntArray& a) {
    const LabelImage img = labels_from_numpy(a);
    SegmentationMask m;
    m.height = img.height;
    m.width = img.width;
    m.labels = img.labels;
    return m;
}

MergeConfig merge_config(double tau, int iterations) {
    MergeConfig c{tau, iterations};
    c.validate();
    return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Attention-merging segmentation core";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    py::class_<AttentionStack>(m, "AttentionStack")
        .def(py::init([](const std::vector<FloatArray>& layers, int image_height, int image_width,
                         int time_step, std::string source_id) {
                 AttentionStack s;
                 for (const auto& a : layers) s.layers.push_back(layer_from_numpy(a));
                 s.image_height = image_height;
                 s.image_width = image_width;
                 s.time_step = time_step;
                 s.source_id = std::move(source_id);
                 return s;
             }),
             py::arg("layers"), py::arg("image_height"), py::arg("image_width"),
             py::arg("time_step") = 300, py::arg("source_id") = "")
        .def_property_readonly("layers",
                               [](const AttentionStack& s) {
                                   py::list out;
                                   for (const auto& l : s.layers) out.append(layer_to_numpy(l));
                                   return out;
                               })
        .def_property_readonly("resolutions",
                               [](const AttentionStack& s) {
                                   std::vector<int> r;
                                   for (const auto& l : s.layers) r.push_back(l.resolution);
                                   return r;
                               })
        .def_readonly("image_height", &AttentionStack::image_height)
        .def_readonly("image_width", &AttentionStack::image_width)
        .def_readonly("time_step", &AttentionStack::time_step)
        .def_readonly("source_id", &AttentionStack::source_id)
        .def_property_readonly("max_resolution", &AttentionStack::max_resolution)
        .def("__eq__", [](const AttentionStack& a, const AttentionStack& b) { return a == b; });

    m.def("read_stack", &read_stack, py::arg("path"));
    m.def("write_stack", &write_stack, py::arg("stack"), py::arg("path"));
    m.def(
        "validate_stack",
        [](const AttentionStack& s) {
            py::list out;
            for (const auto& v : validate_stack(s)) {
                py::dict d;
                d["layer"] = v.layer;
                d["i"] = v.i;
                d["j"] = v.j;
                d["rule"] = v.rule;
                d["message"] = v.message;
                out.append(d);
            }
            return out;
        },
        py::arg("stack"));

    m.def(
        "compute_weights",
        [](const AttentionStack& s, const std::string& weights) {
            return compute_weights(s, WeightScheme::parse(weights));
        },
        py::arg("stack"), py::arg("weights") = "propto");
    m.def(
        "aggregate",
        [](const AttentionStack& s, const std::string& weights) {
            return field_to_numpy(aggregate(s, WeightScheme::parse(weights)));
        },
        py::arg("stack"), py::arg("weights") = "propto");

    m.def(
        "kl_distance",
        [](const DoubleArray& p, const DoubleArray& q) {
            if (p.size() != q.size()) throw ValidationError("kl_distance: shape mismatch");
            return kl_distance({p.data(), static_cast<std::size_t>(p.size())},
                               {q.data(), static_cast<std::size_t>(q.size())});
        },
        py::arg("p"), py::arg("q"));
    m.def(
        "anchor_grid",
        [](int m_side, int w_max) {
            std::vector<std::pair<int, int>> out;
            for (const auto& pt : generate_anchor_grid(m_side, w_max).points) {
                out.emplace_back(pt.row, pt.col);
            }
            return out;
        },
        py::arg("m"), py::arg("w_max"));
    m.def(
        "run_merging",
        [](const DoubleArray& field, int anchors, double tau, int iterations) {
            const AggregatedTensor f = field_from_numpy(field);
            MergeTrace trace;
            const auto list = run_merging(f, generate_anchor_grid(anchors, f.w_max),
                                          merge_config(tau, iterations), &trace);
            return py::make_tuple(proposals_to_numpy(list), trace.counts);
        },
        py::arg("field"), py::arg("anchors") = 16, py::arg("tau") = 1.0, py::arg("iterations") = 3);
    m.def(
        "nms_assign",
        [](const DoubleArray& proposals, int out_h, int out_w) {
            const auto mask = nms_assign(proposals_from_numpy(proposals), out_h, out_w);
            return labels_to_numpy(mask.height, mask.width, mask.labels);
        },
        py::arg("proposals"), py::arg("out_h"), py::arg("out_w"));
    m.def(
        "segment",
        [](const AttentionStack& s, const std::string& weights, int anchors, int iterations,
           double tau, int out_h, int out_w) {
            PipelineParams params;
            params.weights = WeightScheme::parse(weights);
            params.anchors_per_side = anchors;
            params.merge = merge_config(tau, iterations);
            params.out_height = out_h;
            params.out_width = out_w;
            SegmentTrace trace;
            const auto mask = segment(s, params, &trace);
            py::dict out;
            out["labels"] = labels_to_numpy(mask.height, mask.width, mask.labels);
            out["num_labels"] = mask.num_labels;
            out["num_proposals"] = mask.num_proposals;
            out["proposal_of_label"] = mask.source_proposal;
            out["proposals_per_iteration"] = trace.merge.counts;
            return out;
        },
        py::arg("stack"), py::arg("weights") = "propto", py::arg("anchors") = 16,
        py::arg("iterations") = 3, py::arg("tau") = 1.0, py::arg("out_h") = 0, py::arg("out_w") = 0);

    m.def(
        "hungarian_match",
        [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& counts) {
            if (counts.ndim() != 2) throw ValidationError("counts must be 2-D");
            CountMatrix cm(static_cast<int>(counts.shape(0)), static_cast<int>(counts.shape(1)));
            std::copy(counts.data(), counts.data() + counts.size(), cm.counts.begin());
            return hungarian_match(cm);
        },
        py::arg("counts"));
    m.def(
        "evaluate",
        [](const IntArray& pred, const IntArray& gt, int ignore_label) {
            const auto r = evaluate_image("", mask_from_numpy(pred), labels_from_numpy(gt), ignore_label);
            py::dict out;
            out["acc"] = r.acc;
            out["miou"] = r.miou;
            out["pixels"] = r.pixels;
            out["skipped"] = r.skipped;
            out["assignment"] = r.assignment;
            return out;
        },
        py::arg("pred"), py::arg("gt"), py::arg("ignore_label") = kIgnoreLabel);

    m.def(
        "kmeans_segment",
        [](const DoubleArray& field, int k, std::uint64_t seed, int max_iters, int restarts,
           int out_h, int out_w) {
            const AggregatedTensor f = field_from_numpy(field);
            KMeansConfig config{k, seed, max_iters, restarts};
            const auto mask = kmeans_segment(f, config, out_h > 0 ? out_h : f.w_max,
                                             out_w > 0 ? out_w : f.w_max);
            return labels_to_numpy(mask.height, mask.width, mask.labels);
        },
        py::arg("field"), py::arg("k") = 6, py::arg("seed") = 0, py::arg("max_iters") = 300,
        py::arg("restarts") = 1, py::arg("out_h") = 0, py::arg("out_w") = 0);

    m.def(
        "generate_stack",
        [](const IntArray& label_map, std::vector<int> resolutions, double epsilon,
           std::uint64_t seed, double noise) {
            SynthSpec spec;
            spec.label_map = labels_from_numpy(label_map);
            spec.resolutions = std::move(resolutions);
            spec.epsilon = epsilon;
            spec.seed = seed;
            spec.noise = noise;
            auto out = generate_stack(spec);
            auto labels = labels_to_numpy(out.labels.height, out.labels.width, out.labels.labels);
            return py::make_tuple(std::move(out.stack), labels);
        },
        py::arg("label_map"), py::arg("resolutions"), py::arg("epsilon") = 0.05,
        py::arg("seed") = 0, py::arg("noise") = 0.0);
    m.def(
        "min_cross_distance",
        [](const IntArray& label_map, std::vector<int> resolutions, double epsilon) {
            SynthSpec spec;
            spec.label_map = labels_from_numpy(label_map);
            spec.resolutions = std::move(resolutions);
            spec.epsilon = epsilon;
            return min_cross_distance(spec);
        },
        py::arg("label_map"), py::arg("resolutions"), py::arg("epsilon") = 0.05);
}
