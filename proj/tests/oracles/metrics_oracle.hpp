#pragma once

#include <array>
#include <vector>

#include "lesioncad/classify.hpp"
#include "lesioncad/rng.hpp"
#include "lesioncad/types.hpp"

namespace oracle {

struct NaiveClass {
    long tp = 0, fp = 0, tn = 0, fn = 0;
    double sens = 0, spec = 0, f1 = 0;
};

struct NaiveMetrics {
    double accuracy = 0;
    double mean_f1 = 0;
    std::array<NaiveClass, lesioncad::kNumClasses> cls{};
};

// Literal 3x3 confusion matrix with an extra "not localized" column.
inline NaiveMetrics naive_metrics(const std::vector<lesioncad::classify::StudyPrediction>& preds,
                                  const std::vector<lesioncad::LesionClass>& truth) {
    using namespace lesioncad;
    long cm[3][4] = {};
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const auto t = index_of(truth[i]);
        const std::size_t p = preds[i].localized ? index_of(preds[i].predicted) : 3;
        ++cm[t][p];
    }
    NaiveMetrics m;
    const long n = static_cast<long>(preds.size());
    long correct = 0;
    for (int c = 0; c < 3; ++c) correct += cm[c][c];
    m.accuracy = n ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    const auto div = [](long a, long b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    for (int c = 0; c < 3; ++c) {
        auto& k = m.cls[static_cast<std::size_t>(c)];
        long row = 0, col = 0;
        for (int j = 0; j < 4; ++j) row += cm[c][j];
        for (int r = 0; r < 3; ++r) col += cm[r][c];
        k.tp = cm[c][c];
        k.fn = row - k.tp;
        k.fp = col - k.tp;
        k.tn = n - k.tp - k.fn - k.fp;
        k.sens = div(k.tp, k.tp + k.fn);
        k.spec = div(k.tn, k.tn + k.fp);
        k.f1 = div(2 * k.tp, 2 * k.tp + k.fp + k.fn);
        m.mean_f1 += k.f1 / 3.0;
    }
    return m;
}

struct MetricsCase {
    std::vector<lesioncad::classify::StudyPrediction> preds;
    std::vector<lesioncad::LesionClass> truth;
};

inline MetricsCase random_metrics_case(lesioncad::Rng& rng) {
    using namespace lesioncad;
    MetricsCase c;
    const int n = rng.uniform_int(1, 60);
    for (int i = 0; i < n; ++i) {
        c.truth.push_back(static_cast<LesionClass>(rng.uniform_int(0, 2)));
        classify::StudyPrediction p;
        p.localized = rng.bernoulli(0.85);
        p.predicted = static_cast<LesionClass>(rng.uniform_int(0, 2));
        p.probs[index_of(p.predicted)] = 1.0;
        p.confidence = p.localized ? rng.uniform() : 0.0;
        c.preds.push_back(p);
    }
    return c;
}

}  // namespace oracle
