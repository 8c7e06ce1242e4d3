#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lesioncad/classify.hpp"
#include "lesioncad/config.hpp"
#include "lesioncad/fuse.hpp"
#include "lesioncad/types.hpp"

namespace lesioncad::eval {

using classify::StudyPrediction;

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

struct StudyRef {
    std::string id;
    LesionClass truth = LesionClass::HCC;
};

struct FoldSplit {
    int fold_index = 0;
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> test_ids;
};

// Per class: ids sorted, shuffled by the seed, dealt round-robin into test
// folds. Validation takes round(val_fraction * class size) of the remaining
// ids, preferring members of the next fold. Throws SplitError when a class
// has fewer members than folds.
std::vector<FoldSplit> stratified_folds(std::span<const StudyRef> cohort, int folds, std::uint64_t seed,
                                        double val_fraction = 0.10);

struct ClassMetrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

struct CategoricalMetrics {
    std::size_t n = 0;
    double accuracy = kUndefined;
    double mean_f1 = kUndefined;
    std::array<ClassMetrics, kNumClasses> per_class{};
};

// One-vs-others tables per class. Unlocalized studies are wrong for accuracy,
// a false negative for their true class and a true negative elsewhere.
// Zero-denominator rates and F1 are 0; an empty input yields undefined (NaN)
// accuracy and mean F1.
CategoricalMetrics categorical_metrics(std::span<const StudyPrediction> preds, std::span<const LesionClass> truth);

struct LrocPoint {
    double fpf = 0.0;
    double tpf = 0.0;
    double threshold = 0.0;
};

struct LrocCurve {
    std::vector<LrocPoint> points;
    double max_sensitivity = 0.0;
    double area = 0.0;
};

struct LrocSample {
    double score = -std::numeric_limits<double>::infinity();  // -inf when nothing was localized
    bool positive = false;
    bool localized = false;  // localization rule satisfied (meaningful for positives)
};

// Sweeps every distinct finite score. A positive counts at threshold t when
// its score >= t and it is localized; a negative counts when its score >= t.
// The curve ends with a horizontal segment to FPF = 1 at max_sensitivity;
// area is trapezoidal. Throws MetricError without positives or negatives.
LrocCurve lroc_curve(std::span<const LrocSample> samples);

// TPF at FPF = 1 - specificity by linear interpolation (top of any vertical
// step at exactly that FPF). specificity must lie in (0, 1).
double sensitivity_at_specificity(const LrocCurve& curve, double specificity);

// Positive class HCC. Score = probs[HCC] for localized studies.
std::vector<LrocSample> lroc_samples(std::span<const StudyPrediction> preds, std::span<const LesionClass> truth,
                                     std::span<const char> localized_by_rule);

bool localized_by_rule(const std::vector<fuse::KeyRoi>& rois, const std::vector<TruthBox>& truth,
                       LocalizationRule rule);

struct SweepPoint {
    double threshold = 0.0;
    std::size_t retained = 0;
    double retained_fraction = 0.0;
    double accuracy = kUndefined;
    double mean_f1 = kUndefined;
};

struct ConfidenceSweep {
    std::vector<SweepPoint> points;
};

// Metrics on the studies with confidence >= t for each ascending threshold t.
ConfidenceSweep confidence_sweep(std::span<const StudyPrediction> preds, std::span<const LesionClass> truth,
                                 std::span<const double> thresholds);

// The k-th largest confidence with k = max(1, floor(target * n)); keeping
// everything >= it keeps ties.
double retention_threshold(std::span<const double> confidences, double target_fraction);

// Largest in-plane extent of any truth box, in mm.
double largest_diameter_mm(const Study& study);

struct SizeStrata {
    std::vector<std::string> over;     // largest lesion > threshold
    std::vector<std::string> up_to;    // largest lesion <= threshold
};

SizeStrata size_strata(std::span<const Study> cohort, double threshold_mm = 20.0);

struct ReaderRecord {
    std::string study_id;
    std::string reader_id;
    LesionClass label = LesionClass::HCC;
    int confidence = 1;  // ordinal 1..5
};

// CSV header: study_id,reader_id,label,confidence. Throws IngestError on bad
// labels, confidences outside 1..5 or a study read twice by one reader.
std::vector<ReaderRecord> read_reader_csv(std::istream& in);
void write_reader_csv(std::ostream& out, std::span<const ReaderRecord> records);

struct OperatingPoint {
    double fpf = 0.0;
    double tpf = 0.0;
};

struct ReaderSummary {
    std::string reader_id;
    CategoricalMetrics metrics;
    OperatingPoint hcc_point;           // HCC vs. others, ignoring confidence
    std::vector<SweepPoint> sweep;      // ordinal thresholds 1..5
};

// Throws IngestError listing unknown study ids, duplicates or studies a
// reader did not label.
std::vector<ReaderSummary> reader_compare(std::span<const ReaderRecord> records, std::span<const StudyRef> truth);

// Reader whose labels are the truth except for round(rate * n) studies,
// relabeled to another class. Wrong reads get confidence 1-3, right ones 3-5.
std::vector<ReaderRecord> synthesize_reader(std::span<const StudyRef> truth, const std::string& reader_id,
                                            double corruption_rate, std::uint64_t seed);

struct MeanSd {
    double mean = kUndefined;
    double sd = kUndefined;
};

// Population standard deviation.
MeanSd mean_sd(std::span<const double> values);

}  // namespace lesioncad::eval
