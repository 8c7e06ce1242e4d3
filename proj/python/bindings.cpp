#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "commands.hpp"
#include "lesioncad/config.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/eval.hpp"
#include "lesioncad/fuse.hpp"
#include "lesioncad/synthgen.hpp"

namespace py = pybind11;
using namespace lesioncad;

namespace {

detect::ScoredBox to_box(const py::tuple& t) {
    // (x0, y0, x1, y1, confidence)
    detect::ScoredBox b;
    b.box = {t[0].cast<int>(), t[1].cast<int>(), t[2].cast<int>(), t[3].cast<int>()};
    b.confidence = t[4].cast<double>();
    return b;
}

py::dict roi_dict(const fuse::KeyRoi& r) {
    py::dict d;
    d["z"] = r.z;
    d["box"] = py::make_tuple(r.box.x0, r.box.y0, r.box.x1, r.box.y1);
    d["confidence"] = r.confidence;
    d["contributors"] = r.contributor_count;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Liver lesion CAD pipeline on synthetic phantoms";
    m.attr("__version__") = LESIONCAD_VERSION;

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a CLI subcommand; returns (exit_code, stdout, stderr).");

    m.def(
        "default_config",
        [] { return config_to_text(PipelineConfig{}); }, "Canonical text of the default pipeline config.");
    m.def(
        "normalize_config", [](const std::string& text) { return config_to_text(config_from_text(text)); },
        py::arg("text"));

    m.def(
        "fuse_slice",
        [](const std::vector<py::tuple>& boxes, int nx, int ny) -> py::object {
            std::vector<detect::ScoredBox> b;
            for (const auto& t : boxes) b.push_back(to_box(t));
            const auto r = fuse::fuse_slice(b, nx, ny);
            if (!r) return py::none();
            return roi_dict(*r);
        },
        py::arg("boxes"), py::arg("nx"), py::arg("ny"),
        "Fuse (x0, y0, x1, y1, confidence) boxes on one slice; None when empty.");

    m.def("keep_count", &fuse::keep_count, py::arg("n"), py::arg("keep_fraction"));

    m.def(
        "retention_threshold",
        [](const std::vector<double>& c, double target) { return eval::retention_threshold(c, target); },
        py::arg("confidences"), py::arg("target_fraction"));

    m.def(
        "lroc",
        [](const std::vector<double>& scores, const std::vector<bool>& positive, const std::vector<bool>& localized) {
            if (scores.size() != positive.size() || scores.size() != localized.size()) {
                throw std::invalid_argument("lroc: length mismatch");
            }
            std::vector<eval::LrocSample> samples(scores.size());
            for (std::size_t i = 0; i < scores.size(); ++i) samples[i] = {scores[i], positive[i], localized[i]};
            const auto c = eval::lroc_curve(samples);
            py::list pts;
            for (const auto& p : c.points) pts.append(py::make_tuple(p.fpf, p.tpf, p.threshold));
            py::dict d;
            d["points"] = pts;
            d["area"] = c.area;
            d["max_sensitivity"] = c.max_sensitivity;
            return d;
        },
        py::arg("scores"), py::arg("positive"), py::arg("localized"));

    m.def(
        "cohort_summary",
        [](int n_hcc, int n_icc, int n_meta, double noise_std, std::uint64_t seed) {
            synth::GenSpec spec;
            spec.n_per_class = {n_hcc, n_icc, n_meta};
            spec.noise_std = noise_std;
            spec.seed = seed;
            spec.validate();
            const auto cohort = synth::generate_cohort(spec);
            py::list out;
            for (const auto& s : cohort) {
                py::dict d;
                d["id"] = s.id;
                d["class"] = std::string(to_string(s.truth_class));
                d["truth_boxes"] = s.truth_boxes.size();
                d["largest_diameter_mm"] = eval::largest_diameter_mm(s);
                out.append(d);
            }
            return out;
        },
        py::arg("n_hcc"), py::arg("n_icc"), py::arg("n_meta"), py::arg("noise_std") = synth::kModerateNoise,
        py::arg("seed") = 7, "Generate a cohort in memory and summarize each study.");

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
}
