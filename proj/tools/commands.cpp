#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lesioncad/classify.hpp"
#include "lesioncad/config.hpp"
#include "lesioncad/csv.hpp"
#include "lesioncad/detect.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/eval.hpp"
#include "lesioncad/fuse.hpp"
#include "lesioncad/io.hpp"
#include "lesioncad/parallel.hpp"
#include "lesioncad/pipeline.hpp"
#include "lesioncad/rng.hpp"
#include "lesioncad/synthgen.hpp"

namespace lesioncad::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string data;
    std::string out;
    bool strict_lroc = false;
    int threads = 1;
    std::string detections;
    std::string keyrois;
    std::string model;
    std::string save_model;
    std::string replay;
    std::string readers;
    std::string reader_rates;
    std::string preset;
    std::string lroc;
};

PipelineConfig pipeline_config(const Options& o) {
    PipelineConfig cfg = o.config.empty() ? PipelineConfig{} : load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    if (o.strict_lroc) cfg.lroc_rule = LocalizationRule::AnyRoi;
    cfg.validate();
    return cfg;
}

void require_flag(const std::string& value, const std::string& flag) {
    if (value.empty()) throw ConfigError(flag + " is required");
}

std::string fixed(double v, int digits = 3) {
    if (std::isnan(v)) return "NA";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::vector<double> parse_rates(const std::string& text) {
    std::vector<double> rates;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const double r = parse_double("--readers", item);
        if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("--readers: rates must lie in [0,1]");
        rates.push_back(r);
    }
    return rates;
}

std::vector<eval::StudyRef> refs_of(const std::vector<std::pair<std::string, LesionClass>>& labels) {
    std::vector<eval::StudyRef> refs;
    for (const auto& [id, cls] : labels) refs.push_back({id, cls});
    return refs;
}

int cmd_gen(const Options& o, std::ostream& out) {
    require_flag(o.out, "--out");
    synth::GenSpec spec = o.config.empty() ? synth::GenSpec{} : synth::load_genspec(o.config);
    if (o.preset == "moderate") spec.noise_std = synth::kModerateNoise;
    else if (o.preset == "hard") spec.noise_std = synth::kHardNoise;
    else if (!o.preset.empty()) throw ConfigError("--preset: expected moderate or hard");
    if (o.seed) spec.seed = *o.seed;
    spec.validate();
    const auto rates = parse_rates(o.reader_rates);

    const auto cohort = synth::generate_cohort(spec, o.threads);
    io::write_cohort(cohort, o.out);
    io::write_text_file(fs::path(o.out) / "genspec.conf", synth::genspec_to_text(spec));
    if (!rates.empty()) {
        std::vector<eval::StudyRef> refs;
        for (const auto& s : cohort) refs.push_back({s.id, s.truth_class});
        std::sort(refs.begin(), refs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        std::vector<eval::ReaderRecord> records;
        for (std::size_t k = 0; k < rates.size(); ++k) {
            const std::string id = "reader_" + std::to_string(k + 1);
            const auto r = eval::synthesize_reader(refs, id, rates[k], derive_seed(spec.seed, id, "readers"));
            records.insert(records.end(), r.begin(), r.end());
        }
        std::ofstream f(fs::path(o.out) / "readers.csv");
        eval::write_reader_csv(f, records);
    }
    out << "wrote " << cohort.size() << " studies to " << o.out << "\n";
    return kOk;
}

int cmd_detect(const Options& o, std::ostream& out) {
    require_flag(o.data, "--data");
    require_flag(o.out, "--out");
    const auto cfg = pipeline_config(o);
    const auto cohort = io::read_cohort(o.data, o.threads);
    const detect::ReferenceDetector det(cfg.detector);
    std::vector<std::pair<std::string, std::vector<detect::ScoredBox>>> rows(cohort.size());
    parallel_for(cohort.size(), o.threads, [&](std::size_t i) { rows[i] = {cohort[i].id, det.detect(cohort[i])}; });
    fs::create_directories(o.out);
    std::ofstream f(fs::path(o.out) / "detections.csv");
    detect::write_detections_csv(f, rows);
    std::size_t n = 0;
    for (const auto& r : rows) n += r.second.size();
    out << "wrote " << n << " boxes for " << rows.size() << " studies\n";
    return kOk;
}

int cmd_fuse(const Options& o, std::ostream& out) {
    require_flag(o.data, "--data");
    require_flag(o.out, "--out");
    require_flag(o.detections, "--detections");
    const auto cfg = pipeline_config(o);
    const auto cohort = io::read_cohort(o.data, o.threads);
    const auto replay = detect::ReplayDetector::from_file(o.detections);
    std::vector<std::pair<std::string, std::vector<fuse::KeyRoi>>> rows(cohort.size());
    std::size_t failures = 0;
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        rows[i] = {cohort[i].id, fuse::localize_study(cohort[i], replay.detect(cohort[i]), cfg.roi_conf_threshold,
                                                      cfg.keyroi_keep_fraction)};
        failures += rows[i].second.empty() ? 1 : 0;
    }
    fs::create_directories(o.out);
    std::ofstream f(fs::path(o.out) / "keyrois.csv");
    fuse::write_keyrois_csv(f, rows);
    out << "fused " << rows.size() << " studies, " << failures << " without key ROIs\n";
    return kOk;
}

int cmd_classify(const Options& o, std::ostream& out) {
    require_flag(o.data, "--data");
    require_flag(o.out, "--out");
    const auto cfg = pipeline_config(o);
    const auto cohort = io::read_cohort(o.data, o.threads);
    std::vector<classify::StudyPrediction> preds(cohort.size());

    if (!o.replay.empty()) {
        const auto replay = classify::ReplayClassifier::from_file(o.replay);
        for (std::size_t i = 0; i < cohort.size(); ++i) preds[i] = classify::aggregate_study(replay.predict(cohort[i].id));
    } else {
        require_flag(o.keyrois, "--keyrois");
        std::ifstream kf(o.keyrois);
        if (!kf) throw IngestError("cannot read " + o.keyrois);
        const auto rows = fuse::read_keyrois_csv(kf);
        std::map<std::string, std::vector<fuse::KeyRoi>, std::less<>> rois;
        for (const auto& [id, r] : rows) rois[id] = r;

        classify::MlpModel model;
        if (!o.model.empty()) {
            model = classify::MlpModel::load_file(o.model);
        } else {
            std::vector<classify::LabeledFeatures> train_set;
            for (const auto& s : cohort) {
                for (const auto& t : s.truth_boxes) {
                    train_set.push_back({classify::extract_features(s, {t.z, t.box, 1.0, 1}), s.truth_class});
                }
            }
            model = classify::train(cfg.classifier, derive_seed(cfg.seed, "cli", "train"), train_set);
        }
        if (!o.save_model.empty()) model.save_file(o.save_model);

        parallel_for(cohort.size(), o.threads, [&](std::size_t i) {
            const auto it = rois.find(cohort[i].id);
            std::vector<classify::RoiPrediction> roi_preds;
            if (it != rois.end()) {
                for (std::size_t j = 0; j < it->second.size(); ++j) {
                    roi_preds.push_back(classify::mc_predict_roi(
                        model, classify::extract_features(cohort[i], it->second[j]), cfg.classifier.mc_passes,
                        derive_seed(cfg.seed, cohort[i].id, "mc:" + std::to_string(j))));
                }
            }
            preds[i] = classify::aggregate_study(roi_preds);
        });
    }

    fs::create_directories(o.out);
    std::ofstream f(fs::path(o.out) / "predictions.csv");
    f << "study_id,localized,p_hcc,p_icc,p_meta,uncertainty,confidence,predicted\n";
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        const auto& p = preds[i];
        f << cohort[i].id << ',' << (p.localized ? 1 : 0) << ',' << format_double(p.probs[0]) << ','
          << format_double(p.probs[1]) << ',' << format_double(p.probs[2]) << ',' << format_double(p.uncertainty)
          << ',' << format_double(p.confidence) << ',' << (p.localized ? to_string(p.predicted) : "NA") << '\n';
    }
    out << "classified " << cohort.size() << " studies\n";
    return kOk;
}

int cmd_pipeline(const Options& o, std::ostream& out) {
    require_flag(o.data, "--data");
    require_flag(o.out, "--out");
    const auto cfg = pipeline_config(o);
    const auto cohort = io::read_cohort(o.data, o.threads);
    std::unique_ptr<detect::Detector> det;
    if (!o.detections.empty()) det = std::make_unique<detect::ReplayDetector>(detect::ReplayDetector::from_file(o.detections));
    else det = std::make_unique<detect::ReferenceDetector>(cfg.detector);
    const auto result = pipeline::run_pipeline(cohort, cfg, *det, o.threads);
    std::map<std::string, std::string> provenance{{"data", o.data}, {"out", o.out}};
    if (!o.config.empty()) provenance["config"] = o.config;
    if (!o.detections.empty()) provenance["detections"] = o.detections;
    pipeline::write_outputs(result, cfg, det->name(), o.out, provenance);
    const auto acc = eval::mean_sd(
        [&] {
            std::vector<double> v;
            for (const auto& f : result.folds) v.push_back(f.metrics.accuracy);
            return v;
        }());
    out << "pipeline: " << cohort.size() << " studies, " << result.folds.size() << " folds, accuracy "
        << fixed(acc.mean) << " +/- " << fixed(acc.sd) << ", localization failures " << result.localization_failures
        << "\n";
    return kOk;
}

std::vector<eval::LrocPoint> read_lroc_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read " + path.string());
    const auto rows = read_csv(in, {"fpf", "tpf", "threshold"}, "lroc csv");
    std::vector<eval::LrocPoint> points;
    for (const auto& r : rows) {
        points.push_back({csv_double(r, 0, "fpf"), csv_double(r, 1, "tpf"), csv_double(r, 2, "threshold")});
    }
    return points;
}

int cmd_readers(const Options& o, std::ostream& out) {
    require_flag(o.data, "--data");
    require_flag(o.out, "--out");
    require_flag(o.readers, "--readers");
    const auto refs = refs_of(io::read_cohort_labels(o.data));
    std::ifstream in(o.readers);
    if (!in) throw IngestError("cannot read " + o.readers);
    const auto records = eval::read_reader_csv(in);
    const auto summaries = eval::reader_compare(records, refs);

    ordered_json j = ordered_json::array();
    for (const auto& s : summaries) {
        ordered_json r;
        r["reader_id"] = s.reader_id;
        r["accuracy"] = s.metrics.accuracy;
        r["mean_f1"] = s.metrics.mean_f1;
        for (auto c : kAllClasses) {
            const auto& m = s.metrics.per_class[index_of(c)];
            r[std::string(to_string(c))] = {{"sensitivity", m.sensitivity}, {"specificity", m.specificity}, {"f1", m.f1}};
        }
        r["hcc_operating_point"] = {{"fpf", s.hcc_point.fpf}, {"tpf", s.hcc_point.tpf}};
        ordered_json sweep = ordered_json::array();
        for (const auto& p : s.sweep) {
            sweep.push_back({{"threshold", p.threshold},
                             {"retained_fraction", p.retained_fraction},
                             {"accuracy", std::isnan(p.accuracy) ? ordered_json(nullptr) : ordered_json(p.accuracy)},
                             {"mean_f1", std::isnan(p.mean_f1) ? ordered_json(nullptr) : ordered_json(p.mean_f1)}});
        }
        r["confidence_sweep"] = sweep;
        j.push_back(r);
    }
    fs::create_directories(o.out);
    io::write_text_file(fs::path(o.out) / "readers.json", ordered_json{{"readers", j}}.dump(2) + "\n");

    std::string overlay = "series,kind,fpf,tpf,threshold\n";
    const fs::path lroc = o.lroc.empty() ? fs::path(o.out) / "lroc.csv" : fs::path(o.lroc);
    if (fs::exists(lroc)) {
        for (const auto& p : read_lroc_csv(lroc)) {
            overlay += "cad,curve," + format_double(p.fpf) + "," + format_double(p.tpf) + "," +
                       format_double(p.threshold) + "\n";
        }
    } else if (!o.lroc.empty()) {
        throw IngestError("cannot read " + o.lroc);
    }
    for (const auto& s : summaries) {
        overlay += s.reader_id + ",point," + format_double(s.hcc_point.fpf) + "," + format_double(s.hcc_point.tpf) +
                   ",NA\n";
    }
    io::write_text_file(fs::path(o.out) / "overlay.csv", overlay);
    for (const auto& s : summaries) {
        out << s.reader_id << ": accuracy " << fixed(s.metrics.accuracy) << ", HCC operating point (FPF "
            << fixed(s.hcc_point.fpf) << ", TPF " << fixed(s.hcc_point.tpf) << ")\n";
    }
    return kOk;
}

double num(const json& j) { return j.is_number() ? j.get<double>() : eval::kUndefined; }

std::string render_report(const json& m, const json* readers) {
    std::ostringstream os;
    os << "Manifest " << m.at("manifest_hash").get<std::string>() << "\n";
    os << "Studies " << m.at("n_studies").get<long>() << ", localization failures "
       << m.at("localization_failures").get<long>() << "\n\n";

    const auto& s = m.at("summary");
    char line[160];
    std::snprintf(line, sizeof line, "%-24s %s\n", "Metric", "CAD (mean +/- sd over folds)");
    os << line;
    auto row = [&](const std::string& name, const json& ms) {
        std::snprintf(line, sizeof line, "%-24s %s +/- %s\n", name.c_str(), fixed(num(ms.at("mean"))).c_str(),
                      fixed(num(ms.at("sd"))).c_str());
        os << line;
    };
    row("Accuracy", s.at("accuracy"));
    row("Mean F1", s.at("mean_f1"));
    for (auto c : kAllClasses) {
        const std::string cn(to_string(c));
        row(cn + " Sensitivity", s.at(cn).at("sensitivity"));
        row(cn + " Specificity", s.at(cn).at("specificity"));
        row(cn + " F1", s.at(cn).at("f1"));
    }

    const auto& l = m.at("lroc");
    const double op = l.at("operating_specificity").get<double>();
    os << "\nLROC, HCC vs. others\n";
    std::snprintf(line, sizeof line, "%-16s %6s %8s %10s %14s\n", "Stratum", "n", "AUC", "Max sens",
                  ("Sens@" + fixed(100 * op, 0) + "%spec").c_str());
    os << line;
    for (const auto& [key, name] : {std::pair{"all", "All"}, std::pair{"gt2cm", ">2cm"}, std::pair{"le2cm", "<=2cm"}}) {
        const auto& e = l.at(key);
        std::snprintf(line, sizeof line, "%-16s %6ld %8s %10s %14s\n", name, e.at("n").get<long>(),
                      fixed(num(e.at("auc"))).c_str(), fixed(num(e.at("max_sensitivity"))).c_str(),
                      fixed(num(e.at("sens_at_spec"))).c_str());
        os << line;
    }

    const auto& r = m.at("retention");
    os << "\nRetention " << fixed(100 * r.at("target_fraction").get<double>(), 0) << "% (confidence >= "
       << fixed(r.at("threshold").get<double>(), 4) << ", kept " << r.at("retained").get<long>() << ")\n";
    std::snprintf(line, sizeof line, "%-24s %10s %10s\n", "", "Unfiltered", "Filtered");
    os << line;
    const auto& u = r.at("unfiltered");
    const auto& f = r.at("filtered");
    auto rrow = [&](const std::string& name, double a, double b) {
        std::snprintf(line, sizeof line, "%-24s %10s %10s\n", name.c_str(), fixed(a).c_str(), fixed(b).c_str());
        os << line;
    };
    rrow("Accuracy", num(u.at("metrics").at("accuracy")), num(f.at("metrics").at("accuracy")));
    rrow("Mean F1", num(u.at("metrics").at("mean_f1")), num(f.at("metrics").at("mean_f1")));
    rrow("AUC", num(u.at("lroc").at("auc")), num(f.at("lroc").at("auc")));
    rrow("Sens@" + fixed(100 * op, 0) + "%spec", num(u.at("lroc").at("sens_at_spec")),
         num(f.at("lroc").at("sens_at_spec")));

    if (readers) {
        os << "\nReaders\n";
        std::snprintf(line, sizeof line, "%-16s %9s %8s %8s %8s\n", "Reader", "Accuracy", "Mean F1", "FPF", "TPF");
        os << line;
        for (const auto& rd : readers->at("readers")) {
            const auto& pt = rd.at("hcc_operating_point");
            std::snprintf(line, sizeof line, "%-16s %9s %8s %8s %8s\n", rd.at("reader_id").get<std::string>().c_str(),
                          fixed(num(rd.at("accuracy"))).c_str(), fixed(num(rd.at("mean_f1"))).c_str(),
                          fixed(num(pt.at("fpf"))).c_str(), fixed(num(pt.at("tpf"))).c_str());
            os << line;
        }
    }
    return os.str();
}

int cmd_report(const Options& o, std::ostream& out) {
    require_flag(o.out, "--out");
    const fs::path dir(o.out);
    for (const char* name : {"metrics.json", "lroc.csv", "sweep.csv"}) {
        if (!fs::exists(dir / name)) throw std::runtime_error("missing pipeline output " + (dir / name).string());
    }
    json m;
    try {
        m = json::parse(io::read_text_file(dir / "metrics.json"));
    } catch (const json::exception& e) {
        throw std::runtime_error("metrics.json: " + std::string(e.what()));
    }
    std::optional<json> readers;
    if (fs::exists(dir / "readers.json")) readers = json::parse(io::read_text_file(dir / "readers.json"));
    std::string text;
    try {
        text = render_report(m, readers ? &*readers : nullptr);
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed pipeline outputs: " + std::string(e.what()));
    }
    io::write_text_file(dir / "report.txt", text);
    out << text;
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-sequence liver lesion localization and classification"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "Config file (key = value)");
        sub->add_option("--seed", o.seed, "Override the configured seed");
        sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::Range(1, 1024));
    };

    auto* gen = app.add_subcommand("gen", "Generate a synthetic phantom cohort");
    common(gen);
    gen->add_option("--out", o.out, "Output directory")->required();
    gen->add_option("--preset", o.preset, "Noise preset: moderate or hard");
    gen->add_option("--readers", o.reader_rates, "Comma-separated corruption rates for synthetic readers");

    auto* det = app.add_subcommand("detect", "Run the reference detector");
    common(det);
    det->add_option("--data", o.data, "Cohort directory")->required();
    det->add_option("--out", o.out, "Output directory")->required();

    auto* fus = app.add_subcommand("fuse", "Fuse detections into key ROIs");
    common(fus);
    fus->add_option("--data", o.data, "Cohort directory")->required();
    fus->add_option("--detections", o.detections, "Detections CSV")->required();
    fus->add_option("--out", o.out, "Output directory")->required();

    auto* cls = app.add_subcommand("classify", "Classify key ROIs with MC dropout");
    common(cls);
    cls->add_option("--data", o.data, "Cohort directory")->required();
    cls->add_option("--keyrois", o.keyrois, "Key ROI CSV");
    cls->add_option("--model", o.model, "Load a trained model instead of training on --data");
    cls->add_option("--save-model", o.save_model, "Write the model used");
    cls->add_option("--replay", o.replay, "Per-pass probability CSV to aggregate instead");
    cls->add_option("--out", o.out, "Output directory")->required();

    auto* pipe = app.add_subcommand("pipeline", "Cross-validated end-to-end evaluation");
    common(pipe);
    pipe->add_option("--data", o.data, "Cohort directory")->required();
    pipe->add_option("--out", o.out, "Output directory")->required();
    pipe->add_option("--detections", o.detections, "Replay detections CSV instead of the reference detector");
    pipe->add_flag("--strict-lroc", o.strict_lroc, "Only studies without key ROIs count as unlocalized");

    auto* rdr = app.add_subcommand("readers", "Compare reader labels with the truth");
    rdr->add_option("--data", o.data, "Cohort directory")->required();
    rdr->add_option("--readers", o.readers, "Reader CSV")->required();
    rdr->add_option("--out", o.out, "Output directory")->required();
    rdr->add_option("--lroc", o.lroc, "LROC CSV to overlay (default <out>/lroc.csv when present)");

    auto* rep = app.add_subcommand("report", "Summarize pipeline outputs");
    rep->add_option("--out", o.out, "Pipeline output directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidationFailure;
    }

    try {
        if (gen->parsed()) return cmd_gen(o, out);
        if (det->parsed()) return cmd_detect(o, out);
        if (fus->parsed()) return cmd_fuse(o, out);
        if (cls->parsed()) return cmd_classify(o, out);
        if (pipe->parsed()) return cmd_pipeline(o, out);
        if (rdr->parsed()) return cmd_readers(o, out);
        if (rep->parsed()) return cmd_report(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const IngestError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const SplitError& e) {
        err << "error: " << e.what() << "\n";
        return kValidationFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return kRuntimeFailure;
}

}  // namespace lesioncad::cli
