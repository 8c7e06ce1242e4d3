#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lesioncad/classify.hpp"
#include "lesioncad/config.hpp"
#include "lesioncad/detect.hpp"
#include "lesioncad/eval.hpp"
#include "lesioncad/fuse.hpp"
#include "lesioncad/types.hpp"

namespace lesioncad::pipeline {

struct StudyOutcome {
    std::string id;
    LesionClass truth = LesionClass::HCC;
    int fold = -1;
    std::vector<fuse::KeyRoi> rois;
    classify::StudyPrediction prediction;
    bool localized_by_rule = false;
    double largest_diameter_mm = 0.0;
};

struct FoldResult {
    int fold = 0;
    std::size_t n_train_rois = 0;
    std::size_t n_test = 0;
    std::size_t localization_failures = 0;
    eval::CategoricalMetrics metrics;
    double lroc_area = eval::kUndefined;
    double sens_at_spec = eval::kUndefined;
    int best_epoch = 0;
    double final_train_loss = 0.0;
};

struct LrocSummary {
    std::size_t n = 0;
    std::optional<eval::LrocCurve> curve;  // absent without positives or negatives
    double sens_at_spec = eval::kUndefined;
};

struct RetentionSummary {
    double target_fraction = 0.0;
    double threshold = 0.0;
    std::size_t retained = 0;
    double retained_fraction = 0.0;
    eval::CategoricalMetrics unfiltered;
    eval::CategoricalMetrics filtered;
    LrocSummary lroc_unfiltered;
    LrocSummary lroc_filtered;
};

struct PipelineResult {
    std::vector<StudyOutcome> outcomes;  // cohort order
    std::vector<FoldResult> folds;
    eval::CategoricalMetrics pooled;
    LrocSummary lroc_all;
    LrocSummary lroc_over;   // largest lesion > size threshold
    LrocSummary lroc_up_to;  // largest lesion <= size threshold
    eval::ConfidenceSweep sweep;
    RetentionSummary retention;
    std::size_t localization_failures = 0;
    std::string manifest_hash;
    std::map<std::string, double> stage_seconds;
};

// Pooled LROC over a subset of outcomes; `sensitivity at specificity` uses
// the configured operating specificity.
LrocSummary lroc_for(std::span<const StudyOutcome> outcomes, double operating_specificity);

// Detection and key-ROI selection run once per study. For each fold a fresh
// classifier is trained on ground-truth ROI features of the training studies
// (validation studies pick the epoch) and applied with MC dropout to the key
// ROIs of the test studies.
PipelineResult run_pipeline(std::span<const Study> cohort, const PipelineConfig& config,
                            const detect::Detector& detector, int threads = 1);

// Hex digest over the config snapshot, the detector name and the cohort
// fingerprint. Paths and timings are excluded.
std::string manifest_hash(const PipelineConfig& config, const std::string& detector_name,
                          std::uint64_t cohort_fingerprint);

// metrics.json, lroc.csv, lroc_gt2cm.csv, lroc_le2cm.csv, sweep.csv,
// failures.csv, predictions.csv, keyrois.csv and manifest.json.
void write_outputs(const PipelineResult& result, const PipelineConfig& config, const std::string& detector_name,
                   const std::filesystem::path& out_dir, const std::map<std::string, std::string>& provenance);

// Sweep thresholds 0, 0.005, ..., 1.
std::vector<double> default_sweep_thresholds();

}  // namespace lesioncad::pipeline
