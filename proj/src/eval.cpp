#include "lesioncad/eval.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/rng.hpp"

namespace lesioncad::eval {

namespace {

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }

}  // namespace

std::vector<FoldSplit> stratified_folds(std::span<const StudyRef> cohort, int folds, std::uint64_t seed,
                                        double val_fraction) {
    if (folds < 2) throw SplitError("folds must be at least 2");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw SplitError("val_fraction must be in [0,1)");
    std::set<std::string> seen;
    for (const auto& s : cohort) {
        if (!seen.insert(s.id).second) throw SplitError("duplicate study id " + s.id);
    }

    std::vector<FoldSplit> splits(static_cast<std::size_t>(folds));
    for (int f = 0; f < folds; ++f) splits[static_cast<std::size_t>(f)].fold_index = f;

    for (auto c : kAllClasses) {
        std::vector<std::string> ids;
        for (const auto& s : cohort) {
            if (s.truth == c) ids.push_back(s.id);
        }
        if (static_cast<int>(ids.size()) < folds) {
            throw SplitError("class " + std::string(to_string(c)) + " has " + std::to_string(ids.size()) +
                             " studies, fewer than " + std::to_string(folds) + " folds");
        }
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, to_string(c), "folds"));
        rng.shuffle(ids);

        const std::size_t n = ids.size();
        for (int f = 0; f < folds; ++f) {
            auto& split = splits[static_cast<std::size_t>(f)];
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < n; ++i) {
                if (static_cast<int>(i % folds) == f) split.test_ids.push_back(ids[i]);
                else rest.push_back(i);
            }
            // Validation prefers the members of the following folds.
            std::stable_sort(rest.begin(), rest.end(), [&](std::size_t a, std::size_t b) {
                const auto ka = (static_cast<int>(a % folds) - f - 1 + 2 * folds) % folds;
                const auto kb = (static_cast<int>(b % folds) - f - 1 + 2 * folds) % folds;
                return ka < kb;
            });
            auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
            n_val = std::min(n_val, rest.size() - 1);
            for (std::size_t k = 0; k < rest.size(); ++k) {
                (k < n_val ? split.val_ids : split.train_ids).push_back(ids[rest[k]]);
            }
        }
    }
    for (auto& s : splits) {
        std::sort(s.train_ids.begin(), s.train_ids.end());
        std::sort(s.val_ids.begin(), s.val_ids.end());
        std::sort(s.test_ids.begin(), s.test_ids.end());
    }
    return splits;
}

CategoricalMetrics categorical_metrics(std::span<const StudyPrediction> preds, std::span<const LesionClass> truth) {
    if (preds.size() != truth.size()) throw std::invalid_argument("categorical_metrics: size mismatch");
    CategoricalMetrics m;
    m.n = preds.size();
    if (preds.empty()) return m;
    long correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].localized && preds[i].predicted == truth[i]) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    double f1_sum = 0.0;
    for (auto c : kAllClasses) {
        auto& cm = m.per_class[index_of(c)];
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool actual = truth[i] == c;
            const bool called = preds[i].localized && preds[i].predicted == c;
            if (actual && called) ++cm.tp;
            else if (actual) ++cm.fn;
            else if (called) ++cm.fp;
            else ++cm.tn;
        }
        cm.sensitivity = ratio(cm.tp, cm.tp + cm.fn);
        cm.specificity = ratio(cm.tn, cm.tn + cm.fp);
        cm.f1 = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn);
        f1_sum += cm.f1;
    }
    m.mean_f1 = f1_sum / static_cast<double>(kNumClasses);
    return m;
}

LrocCurve lroc_curve(std::span<const LrocSample> samples) {
    long positives = 0;
    long negatives = 0;
    long reachable = 0;
    std::vector<double> thresholds;
    for (const auto& s : samples) {
        if (s.positive) {
            ++positives;
            if (s.localized && std::isfinite(s.score)) ++reachable;
        } else {
            ++negatives;
        }
        if (std::isfinite(s.score)) thresholds.push_back(s.score);
    }
    if (positives == 0 || negatives == 0) throw MetricError("LROC needs at least one positive and one negative");
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    LrocCurve curve;
    curve.max_sensitivity = static_cast<double>(reachable) / static_cast<double>(positives);
    curve.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});

    // Walk samples in descending score order alongside the thresholds.
    std::vector<const LrocSample*> order;
    for (const auto& s : samples) {
        if (std::isfinite(s.score)) order.push_back(&s);
    }
    std::sort(order.begin(), order.end(), [](const LrocSample* a, const LrocSample* b) { return a->score > b->score; });
    long tp = 0, fp = 0;
    std::size_t k = 0;
    for (double t : thresholds) {
        while (k < order.size() && order[k]->score >= t) {
            if (order[k]->positive) {
                if (order[k]->localized) ++tp;
            } else {
                ++fp;
            }
            ++k;
        }
        curve.points.push_back({static_cast<double>(fp) / static_cast<double>(negatives),
                                static_cast<double>(tp) / static_cast<double>(positives), t});
    }
    curve.points.push_back({1.0, curve.max_sensitivity, -std::numeric_limits<double>::infinity()});

    double area = 0.0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        area += (b.fpf - a.fpf) * 0.5 * (a.tpf + b.tpf);
    }
    curve.area = area;
    return curve;
}

double sensitivity_at_specificity(const LrocCurve& curve, double specificity) {
    if (!(specificity > 0.0 && specificity < 1.0)) {
        throw std::invalid_argument("sensitivity_at_specificity: specificity must be in (0,1)");
    }
    if (curve.points.empty()) throw std::invalid_argument("sensitivity_at_specificity: empty curve");
    const double x = 1.0 - specificity;
    std::size_t last = 0;
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        if (curve.points[i].fpf <= x) last = i;
    }
    const auto& a = curve.points[last];
    if (a.fpf == x || last + 1 == curve.points.size()) return a.tpf;
    const auto& b = curve.points[last + 1];
    return a.tpf + (b.tpf - a.tpf) * (x - a.fpf) / (b.fpf - a.fpf);
}

std::vector<LrocSample> lroc_samples(std::span<const StudyPrediction> preds, std::span<const LesionClass> truth,
                                     std::span<const char> localized_by_rule) {
    if (preds.size() != truth.size() || preds.size() != localized_by_rule.size()) {
        throw std::invalid_argument("lroc_samples: size mismatch");
    }
    std::vector<LrocSample> out(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out[i].positive = truth[i] == LesionClass::HCC;
        out[i].score = preds[i].localized ? preds[i].probs[index_of(LesionClass::HCC)]
                                          : -std::numeric_limits<double>::infinity();
        out[i].localized = preds[i].localized && localized_by_rule[i];
    }
    return out;
}

bool localized_by_rule(const std::vector<fuse::KeyRoi>& rois, const std::vector<TruthBox>& truth,
                       LocalizationRule rule) {
    if (rois.empty()) return false;
    if (rule == LocalizationRule::AnyRoi) return true;
    for (const auto& r : rois) {
        for (const auto& t : truth) {
            if (t.z == r.z && t.box.contains(r.center_x(), r.center_y())) return true;
        }
    }
    return false;
}

ConfidenceSweep confidence_sweep(std::span<const StudyPrediction> preds, std::span<const LesionClass> truth,
                                 std::span<const double> thresholds) {
    if (preds.size() != truth.size()) throw std::invalid_argument("confidence_sweep: size mismatch");
    if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
        throw std::invalid_argument("confidence_sweep: thresholds must be ascending");
    }
    ConfidenceSweep sweep;
    for (double t : thresholds) {
        std::vector<StudyPrediction> kept;
        std::vector<LesionClass> kept_truth;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i].confidence >= t) {
                kept.push_back(preds[i]);
                kept_truth.push_back(truth[i]);
            }
        }
        const auto m = categorical_metrics(kept, kept_truth);
        SweepPoint p;
        p.threshold = t;
        p.retained = kept.size();
        p.retained_fraction = preds.empty() ? 0.0 : static_cast<double>(kept.size()) / static_cast<double>(preds.size());
        p.accuracy = m.accuracy;
        p.mean_f1 = m.mean_f1;
        sweep.points.push_back(p);
    }
    return sweep;
}

double retention_threshold(std::span<const double> confidences, double target_fraction) {
    if (confidences.empty()) throw std::invalid_argument("retention_threshold: no confidences");
    if (!(target_fraction > 0.0 && target_fraction <= 1.0)) {
        throw std::invalid_argument("retention_threshold: target_fraction must be in (0,1]");
    }
    std::vector<double> sorted(confidences.begin(), confidences.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto n = sorted.size();
    auto k = static_cast<std::size_t>(std::floor(target_fraction * static_cast<double>(n) + 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    return sorted[k - 1];
}

double largest_diameter_mm(const Study& study) {
    const Spacing sp = study.spacing();
    double best = 0.0;
    for (const auto& t : study.truth_boxes) {
        best = std::max({best, t.box.width() * sp.sx, t.box.height() * sp.sy});
    }
    return best;
}

SizeStrata size_strata(std::span<const Study> cohort, double threshold_mm) {
    SizeStrata out;
    for (const auto& s : cohort) {
        (largest_diameter_mm(s) > threshold_mm ? out.over : out.up_to).push_back(s.id);
    }
    return out;
}

std::vector<ReaderRecord> read_reader_csv(std::istream& in) {
    static const std::vector<std::string> header = {"study_id", "reader_id", "label", "confidence"};
    std::vector<ReaderRecord> out;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& row : read_csv(in, header, "readers")) {
        ReaderRecord r;
        r.study_id = row.fields[0];
        r.reader_id = row.fields[1];
        const auto label = parse_lesion_class(row.fields[2]);
        if (!label) throw IngestError("readers line " + std::to_string(row.line) + ": unknown label '" + row.fields[2] + "'");
        r.label = *label;
        const auto conf = csv_int(row, 3, "readers");
        if (conf < 1 || conf > 5) {
            throw IngestError("readers line " + std::to_string(row.line) + ": confidence " + std::to_string(conf) +
                              " outside 1..5");
        }
        r.confidence = static_cast<int>(conf);
        if (!seen.emplace(r.study_id, r.reader_id).second) {
            throw IngestError("readers line " + std::to_string(row.line) + ": study " + r.study_id +
                              " labeled twice by reader " + r.reader_id);
        }
        out.push_back(std::move(r));
    }
    return out;
}

void write_reader_csv(std::ostream& out, std::span<const ReaderRecord> records) {
    out << "study_id,reader_id,label,confidence\n";
    for (const auto& r : records) {
        out << r.study_id << ',' << r.reader_id << ',' << to_string(r.label) << ',' << r.confidence << '\n';
    }
}

std::vector<ReaderSummary> reader_compare(std::span<const ReaderRecord> records, std::span<const StudyRef> truth) {
    std::map<std::string, std::size_t, std::less<>> index;
    for (std::size_t i = 0; i < truth.size(); ++i) index.emplace(truth[i].id, i);

    std::set<std::string> unknown;
    std::map<std::string, std::vector<const ReaderRecord*>> by_reader;
    for (const auto& r : records) {
        if (!index.contains(r.study_id)) unknown.insert(r.study_id);
        by_reader[r.reader_id].push_back(&r);
    }
    if (!unknown.empty()) {
        std::string msg = "unknown study ids in reader file:";
        for (const auto& id : unknown) msg += " " + id;
        throw IngestError(msg);
    }

    std::vector<LesionClass> labels(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) labels[i] = truth[i].truth;

    std::vector<ReaderSummary> out;
    for (const auto& [reader, rows] : by_reader) {
        std::vector<StudyPrediction> preds(truth.size());
        std::vector<int> conf(truth.size(), 0);
        std::vector<bool> filled(truth.size(), false);
        for (const auto* r : rows) {
            const auto i = index.at(r->study_id);
            if (filled[i]) throw IngestError("study " + r->study_id + " labeled twice by reader " + reader);
            filled[i] = true;
            auto& p = preds[i];
            p.localized = true;
            p.predicted = r->label;
            p.probs = {0.0, 0.0, 0.0};
            p.probs[index_of(r->label)] = 1.0;
            p.confidence = r->confidence;
            conf[i] = r->confidence;
        }
        std::string missing;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            if (!filled[i]) missing += " " + truth[i].id;
        }
        if (!missing.empty()) throw IngestError("reader " + reader + " did not label:" + missing);

        ReaderSummary s;
        s.reader_id = reader;
        s.metrics = categorical_metrics(preds, labels);
        const auto& hcc = s.metrics.per_class[index_of(LesionClass::HCC)];
        s.hcc_point = {1.0 - hcc.specificity, hcc.sensitivity};
        const std::array<double, 5> ordinal = {1, 2, 3, 4, 5};
        s.sweep = confidence_sweep(preds, labels, ordinal).points;
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<ReaderRecord> synthesize_reader(std::span<const StudyRef> truth, const std::string& reader_id,
                                            double corruption_rate, std::uint64_t seed) {
    Rng rng(derive_seed(seed, reader_id, "reader"));
    std::vector<std::size_t> order(truth.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    const auto n_wrong = static_cast<std::size_t>(std::llround(corruption_rate * static_cast<double>(truth.size())));
    std::vector<bool> wrong(truth.size(), false);
    for (std::size_t k = 0; k < std::min(n_wrong, order.size()); ++k) wrong[order[k]] = true;

    std::vector<ReaderRecord> out;
    out.reserve(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ReaderRecord r;
        r.study_id = truth[i].id;
        r.reader_id = reader_id;
        if (wrong[i]) {
            const auto shift = 1 + rng.below(2);
            r.label = static_cast<LesionClass>((index_of(truth[i].truth) + shift) % kNumClasses);
            r.confidence = rng.uniform_int(1, 3);
        } else {
            r.label = truth[i].truth;
            r.confidence = rng.uniform_int(3, 5);
        }
        out.push_back(std::move(r));
    }
    return out;
}

MeanSd mean_sd(std::span<const double> values) {
    MeanSd out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(values.size()));
    return out;
}

}  // namespace lesioncad::eval
