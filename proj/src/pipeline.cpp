#include "lesioncad/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/io.hpp"
#include "lesioncad/parallel.hpp"
#include "lesioncad/rng.hpp"

namespace lesioncad::pipeline {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<classify::LabeledFeatures> gather(const std::vector<std::string>& ids,
                                              const std::unordered_map<std::string, std::size_t>& index,
                                              const std::vector<std::vector<classify::LabeledFeatures>>& per_study) {
    std::vector<classify::LabeledFeatures> out;
    for (const auto& id : ids) {
        const auto& f = per_study[index.at(id)];
        out.insert(out.end(), f.begin(), f.end());
    }
    return out;
}

eval::CategoricalMetrics metrics_for(std::span<const StudyOutcome> outcomes) {
    std::vector<classify::StudyPrediction> preds;
    std::vector<LesionClass> truth;
    for (const auto& o : outcomes) {
        preds.push_back(o.prediction);
        truth.push_back(o.truth);
    }
    return eval::categorical_metrics(preds, truth);
}

ordered_json number(double v) {
    if (std::isnan(v)) return nullptr;
    return v;
}

ordered_json metrics_json(const eval::CategoricalMetrics& m) {
    ordered_json j;
    j["n"] = m.n;
    j["accuracy"] = number(m.accuracy);
    j["mean_f1"] = number(m.mean_f1);
    for (auto c : kAllClasses) {
        const auto& cm = m.per_class[index_of(c)];
        j[std::string(to_string(c))] = {{"sensitivity", cm.sensitivity}, {"specificity", cm.specificity},
                                        {"f1", cm.f1}, {"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
    }
    return j;
}

ordered_json lroc_json(const LrocSummary& s) {
    ordered_json j;
    j["n"] = s.n;
    j["auc"] = s.curve ? number(s.curve->area) : ordered_json(nullptr);
    j["max_sensitivity"] = s.curve ? number(s.curve->max_sensitivity) : ordered_json(nullptr);
    j["sens_at_spec"] = number(s.sens_at_spec);
    return j;
}

ordered_json mean_sd_json(const std::vector<double>& values) {
    const auto ms = eval::mean_sd(values);
    return {{"mean", number(ms.mean)}, {"sd", number(ms.sd)}};
}

std::string lroc_csv(const LrocSummary& s, const std::string& hash) {
    std::string out = "fpf,tpf,threshold\n";
    if (s.curve) {
        for (const auto& p : s.curve->points) {
            out += format_double(p.fpf) + "," + format_double(p.tpf) + "," + format_double(p.threshold) + "\n";
        }
    }
    return out + "# manifest=" + hash + "\n";
}

}  // namespace

std::vector<double> default_sweep_thresholds() {
    std::vector<double> t;
    for (int i = 0; i <= 200; ++i) t.push_back(i / 200.0);
    return t;
}

LrocSummary lroc_for(std::span<const StudyOutcome> outcomes, double operating_specificity) {
    LrocSummary s;
    s.n = outcomes.size();
    std::vector<classify::StudyPrediction> preds;
    std::vector<LesionClass> truth;
    std::vector<char> localized;
    bool has_pos = false, has_neg = false;
    for (const auto& o : outcomes) {
        preds.push_back(o.prediction);
        truth.push_back(o.truth);
        localized.push_back(o.localized_by_rule ? 1 : 0);
        (o.truth == LesionClass::HCC ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) return s;
    const auto samples = eval::lroc_samples(preds, truth, localized);
    s.curve = eval::lroc_curve(samples);
    s.sens_at_spec = eval::sensitivity_at_specificity(*s.curve, operating_specificity);
    return s;
}

std::string manifest_hash(const PipelineConfig& config, const std::string& detector_name,
                          std::uint64_t cohort_fingerprint) {
    std::uint64_t h = fnv1a64(config_to_text(config));
    h = fnv1a64(detector_name, h);
    char fp[17];
    std::snprintf(fp, sizeof fp, "%016llx", static_cast<unsigned long long>(cohort_fingerprint));
    h = fnv1a64(fp, h);
    char out[17];
    std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
    return out;
}

PipelineResult run_pipeline(std::span<const Study> cohort, const PipelineConfig& config,
                            const detect::Detector& detector, int threads) {
    config.validate();
    PipelineResult result;
    const std::size_t n = cohort.size();

    std::vector<eval::StudyRef> refs;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < n; ++i) {
        refs.push_back({cohort[i].id, cohort[i].truth_class});
        if (!index.emplace(cohort[i].id, i).second) throw IngestError("duplicate study id " + cohort[i].id);
    }
    const auto splits = eval::stratified_folds(refs, config.folds, config.seed, config.val_fraction);

    auto t0 = Clock::now();
    result.outcomes.resize(n);
    std::vector<std::vector<classify::RoiFeatures>> roi_features(n);
    std::vector<std::vector<classify::LabeledFeatures>> truth_features(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const Study& s = cohort[i];
        auto& o = result.outcomes[i];
        o.id = s.id;
        o.truth = s.truth_class;
        o.largest_diameter_mm = eval::largest_diameter_mm(s);
        const auto boxes = detector.detect(s);
        o.rois = fuse::localize_study(s, boxes, config.roi_conf_threshold, config.keyroi_keep_fraction);
        o.localized_by_rule = eval::localized_by_rule(o.rois, s.truth_boxes, config.lroc_rule);
        for (const auto& r : o.rois) roi_features[i].push_back(classify::extract_features(s, r));
        for (const auto& t : s.truth_boxes) {
            const fuse::KeyRoi roi{t.z, t.box, 1.0, 1};
            truth_features[i].push_back({classify::extract_features(s, roi), s.truth_class});
        }
    });
    result.stage_seconds["detect_localize"] = seconds_since(t0);

    t0 = Clock::now();
    result.folds.resize(splits.size());
    std::vector<classify::MlpModel> models(splits.size());
    parallel_for(splits.size(), threads, [&](std::size_t f) {
        const auto& split = splits[f];
        const auto train_set = gather(split.train_ids, index, truth_features);
        const auto val_set = gather(split.val_ids, index, truth_features);
        models[f] = classify::train(config.classifier,
                                    derive_seed(config.seed, "fold" + std::to_string(f), "train"), train_set, val_set);
        result.folds[f].fold = static_cast<int>(f);
        result.folds[f].n_train_rois = train_set.size();
        result.folds[f].best_epoch = models[f].best_epoch();
        result.folds[f].final_train_loss = models[f].final_train_loss();
    });
    result.stage_seconds["train"] = seconds_since(t0);

    t0 = Clock::now();
    std::vector<std::size_t> test_study;
    std::vector<std::size_t> test_fold;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        for (const auto& id : splits[f].test_ids) {
            test_study.push_back(index.at(id));
            test_fold.push_back(f);
        }
    }
    parallel_for(test_study.size(), threads, [&](std::size_t k) {
        const std::size_t i = test_study[k];
        auto& o = result.outcomes[i];
        o.fold = static_cast<int>(test_fold[k]);
        std::vector<classify::RoiPrediction> roi_preds;
        for (std::size_t j = 0; j < roi_features[i].size(); ++j) {
            roi_preds.push_back(classify::mc_predict_roi(models[test_fold[k]], roi_features[i][j],
                                                         config.classifier.mc_passes,
                                                         derive_seed(config.seed, o.id, "mc:" + std::to_string(j))));
        }
        o.prediction = classify::aggregate_study(roi_preds);
    });
    result.stage_seconds["classify"] = seconds_since(t0);

    t0 = Clock::now();
    for (std::size_t f = 0; f < splits.size(); ++f) {
        std::vector<StudyOutcome> fold_outcomes;
        for (const auto& id : splits[f].test_ids) fold_outcomes.push_back(result.outcomes[index.at(id)]);
        auto& fr = result.folds[f];
        fr.n_test = fold_outcomes.size();
        for (const auto& o : fold_outcomes) fr.localization_failures += o.prediction.localized ? 0 : 1;
        fr.metrics = metrics_for(fold_outcomes);
        const auto lroc = lroc_for(fold_outcomes, config.operating_specificity);
        if (lroc.curve) fr.lroc_area = lroc.curve->area;
        fr.sens_at_spec = lroc.sens_at_spec;
    }

    for (const auto& o : result.outcomes) result.localization_failures += o.prediction.localized ? 0 : 1;
    result.pooled = metrics_for(result.outcomes);
    result.lroc_all = lroc_for(result.outcomes, config.operating_specificity);
    std::vector<StudyOutcome> over, up_to;
    for (const auto& o : result.outcomes) {
        (o.largest_diameter_mm > config.size_threshold_mm ? over : up_to).push_back(o);
    }
    result.lroc_over = lroc_for(over, config.operating_specificity);
    result.lroc_up_to = lroc_for(up_to, config.operating_specificity);

    std::vector<classify::StudyPrediction> preds;
    std::vector<LesionClass> truth;
    std::vector<double> confidences;
    for (const auto& o : result.outcomes) {
        preds.push_back(o.prediction);
        truth.push_back(o.truth);
        confidences.push_back(o.prediction.confidence);
    }
    const auto thresholds = default_sweep_thresholds();
    result.sweep = eval::confidence_sweep(preds, truth, thresholds);

    auto& ret = result.retention;
    ret.target_fraction = config.retention_fraction;
    ret.threshold = n > 0 ? eval::retention_threshold(confidences, config.retention_fraction) : 0.0;
    std::vector<StudyOutcome> kept;
    for (const auto& o : result.outcomes) {
        if (o.prediction.confidence >= ret.threshold) kept.push_back(o);
    }
    ret.retained = kept.size();
    ret.retained_fraction = n > 0 ? static_cast<double>(kept.size()) / static_cast<double>(n) : 0.0;
    ret.unfiltered = result.pooled;
    ret.filtered = metrics_for(kept);
    ret.lroc_unfiltered = result.lroc_all;
    ret.lroc_filtered = lroc_for(kept, config.operating_specificity);
    result.stage_seconds["evaluate"] = seconds_since(t0);

    result.manifest_hash = manifest_hash(config, detector.name(), io::cohort_fingerprint(cohort));
    return result;
}

void write_outputs(const PipelineResult& result, const PipelineConfig& config, const std::string& detector_name,
                   const std::filesystem::path& out_dir, const std::map<std::string, std::string>& provenance) {
    std::filesystem::create_directories(out_dir);
    const std::string& hash = result.manifest_hash;
    const std::string trailer = "# manifest=" + hash + "\n";

    ordered_json m;
    m["manifest_hash"] = hash;
    m["n_studies"] = result.outcomes.size();
    m["localization_failures"] = result.localization_failures;
    m["lroc_rule"] = config.lroc_rule == LocalizationRule::CenterInBox ? "center_in_box" : "any_roi";

    ordered_json folds = ordered_json::array();
    for (const auto& f : result.folds) {
        ordered_json j;
        j["fold"] = f.fold;
        j["n_test"] = f.n_test;
        j["n_train_rois"] = f.n_train_rois;
        j["localization_failures"] = f.localization_failures;
        j["best_epoch"] = f.best_epoch;
        j["final_train_loss"] = number(f.final_train_loss);
        j["metrics"] = metrics_json(f.metrics);
        j["lroc_auc"] = number(f.lroc_area);
        j["sens_at_spec"] = number(f.sens_at_spec);
        folds.push_back(j);
    }
    m["folds"] = folds;

    auto collect = [&](auto get) {
        std::vector<double> v;
        for (const auto& f : result.folds) v.push_back(get(f));
        return v;
    };
    ordered_json summary;
    summary["accuracy"] = mean_sd_json(collect([](const FoldResult& f) { return f.metrics.accuracy; }));
    summary["mean_f1"] = mean_sd_json(collect([](const FoldResult& f) { return f.metrics.mean_f1; }));
    for (auto c : kAllClasses) {
        const auto k = index_of(c);
        summary[std::string(to_string(c))] = {
            {"sensitivity", mean_sd_json(collect([k](const FoldResult& f) { return f.metrics.per_class[k].sensitivity; }))},
            {"specificity", mean_sd_json(collect([k](const FoldResult& f) { return f.metrics.per_class[k].specificity; }))},
            {"f1", mean_sd_json(collect([k](const FoldResult& f) { return f.metrics.per_class[k].f1; }))}};
    }
    summary["lroc_auc"] = mean_sd_json(collect([](const FoldResult& f) { return f.lroc_area; }));
    summary["sens_at_spec"] = mean_sd_json(collect([](const FoldResult& f) { return f.sens_at_spec; }));
    m["summary"] = summary;

    m["pooled"] = metrics_json(result.pooled);
    m["lroc"] = {{"operating_specificity", config.operating_specificity},
                 {"all", lroc_json(result.lroc_all)},
                 {"gt2cm", lroc_json(result.lroc_over)},
                 {"le2cm", lroc_json(result.lroc_up_to)}};
    const auto& r = result.retention;
    m["retention"] = {{"target_fraction", r.target_fraction},
                      {"threshold", r.threshold},
                      {"retained", r.retained},
                      {"retained_fraction", r.retained_fraction},
                      {"unfiltered", {{"metrics", metrics_json(r.unfiltered)}, {"lroc", lroc_json(r.lroc_unfiltered)}}},
                      {"filtered", {{"metrics", metrics_json(r.filtered)}, {"lroc", lroc_json(r.lroc_filtered)}}}};
    io::write_text_file(out_dir / "metrics.json", m.dump(2) + "\n");

    io::write_text_file(out_dir / "lroc.csv", lroc_csv(result.lroc_all, hash));
    io::write_text_file(out_dir / "lroc_gt2cm.csv", lroc_csv(result.lroc_over, hash));
    io::write_text_file(out_dir / "lroc_le2cm.csv", lroc_csv(result.lroc_up_to, hash));

    std::string sweep = "threshold,retained,retained_fraction,accuracy,mean_f1\n";
    for (const auto& p : result.sweep.points) {
        sweep += format_double(p.threshold) + "," + std::to_string(p.retained) + "," +
                 format_double(p.retained_fraction) + "," + format_double(p.accuracy) + "," +
                 format_double(p.mean_f1) + "\n";
    }
    io::write_text_file(out_dir / "sweep.csv", sweep + trailer);

    std::string failures = "study_id,truth_class,fold\n";
    std::string predictions =
        "study_id,fold,truth_class,localized,localized_by_rule,n_rois,p_hcc,p_icc,p_meta,uncertainty,confidence,"
        "predicted\n";
    std::vector<std::pair<std::string, std::vector<fuse::KeyRoi>>> rois;
    for (const auto& o : result.outcomes) {
        const auto& p = o.prediction;
        if (!p.localized) failures += o.id + "," + std::string(to_string(o.truth)) + "," + std::to_string(o.fold) + "\n";
        predictions += o.id + "," + std::to_string(o.fold) + "," + std::string(to_string(o.truth)) + "," +
                       (p.localized ? "1" : "0") + "," + (o.localized_by_rule ? "1" : "0") + "," +
                       std::to_string(o.rois.size()) + "," + format_double(p.probs[0]) + "," +
                       format_double(p.probs[1]) + "," + format_double(p.probs[2]) + "," +
                       format_double(p.uncertainty) + "," + format_double(p.confidence) + "," +
                       (p.localized ? std::string(to_string(p.predicted)) : std::string("NA")) + "\n";
        rois.emplace_back(o.id, o.rois);
    }
    io::write_text_file(out_dir / "failures.csv", failures + trailer);
    io::write_text_file(out_dir / "predictions.csv", predictions + trailer);
    std::ostringstream keyrois;
    fuse::write_keyrois_csv(keyrois, rois);
    io::write_text_file(out_dir / "keyrois.csv", keyrois.str() + trailer);

    ordered_json manifest;
    manifest["manifest_hash"] = hash;
    manifest["version"] = LESIONCAD_VERSION;
    manifest["seed"] = config.seed;
    manifest["detector"] = detector_name;
    manifest["config"] = config_to_text(config);
    ordered_json paths = ordered_json::object();
    for (const auto& [k, v] : provenance) paths[k] = v;
    manifest["paths"] = paths;
    ordered_json timings = ordered_json::object();
    for (const auto& [k, v] : result.stage_seconds) timings[k] = v;
    manifest["stage_seconds"] = timings;
    manifest["artifacts"] = {"metrics.json", "lroc.csv",      "lroc_gt2cm.csv", "lroc_le2cm.csv", "sweep.csv",
                             "failures.csv", "predictions.csv", "keyrois.csv"};
    io::write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace lesioncad::pipeline
