#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "gradient_check.hpp"
#include "helpers.hpp"
#include "lesioncad/classify.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/rng.hpp"

using namespace lesioncad;
using namespace lesioncad::classify;

namespace {

std::vector<LabeledFeatures> blobs(int per_class, double spread, std::uint64_t seed) {
    Rng rng(seed);
    std::array<RoiFeatures, kNumClasses> centers{};
    for (auto& c : centers)
        for (auto& v : c) v = rng.normal(0.0, 1.0);
    std::vector<LabeledFeatures> out;
    for (auto cls : kAllClasses)
        for (int i = 0; i < per_class; ++i) {
            LabeledFeatures ex;
            ex.y = cls;
            for (std::size_t k = 0; k < kFeatureCount; ++k) ex.x[k] = centers[index_of(cls)][k] + rng.normal(0.0, spread);
            out.push_back(ex);
        }
    return out;
}

double accuracy(const MlpModel& m, const std::vector<LabeledFeatures>& data) {
    int ok = 0;
    for (const auto& ex : data) ok += argmax(m.predict(ex.x)) == index_of(ex.y) ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(data.size());
}

ClassifierParams quick_params() {
    ClassifierParams p;
    p.epochs = 30;
    p.batch_size = 16;
    return p;
}

}  // namespace

TEST_CASE("analytic gradient matches central differences") {
    Rng rng(42);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, oracle::gradient_relative_error(rng));
    CHECK(worst < 1e-4);
}

TEST_CASE("softmax output is a distribution and argmax breaks ties low") {
    const auto m = MlpModel::initialize(ClassifierParams{}, 3);
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        RoiFeatures x{};
        for (auto& v : x) v = rng.normal(0.0, 3.0);
        const auto p = m.predict(x);
        CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : p) CHECK(v >= 0.0);
    }
    CHECK(argmax({0.4, 0.4, 0.2}) == 0);
    CHECK(argmax({0.2, 0.4, 0.4}) == 1);
    CHECK(argmax({0.1, 0.2, 0.7}) == 2);
}

TEST_CASE("summarize_passes and aggregate_study") {
    std::vector<ClassProbs> passes;
    for (int i = 0; i < 10; ++i) passes.push_back(i % 2 == 0 ? ClassProbs{1, 0, 0} : ClassProbs{0, 1, 0});
    const auto r = summarize_passes(passes);
    CHECK(r.probs[0] == doctest::Approx(0.5));
    CHECK(r.probs[1] == doctest::Approx(0.5));
    CHECK(r.probs[2] == 0.0);
    CHECK(r.per_class_variance[0] == doctest::Approx(0.25));
    CHECK(r.per_class_variance[1] == doctest::Approx(0.25));
    CHECK(r.per_class_variance[2] == 0.0);
    const std::vector<RoiPrediction> one{r};
    const auto s = aggregate_study(one);
    CHECK(s.uncertainty == doctest::Approx(0.5));
    CHECK(s.confidence == doctest::Approx(0.5));
    CHECK(s.localized);

    const std::vector<ClassProbs> same(7, ClassProbs{0.2, 0.3, 0.5});
    const auto z = summarize_passes(same);
    CHECK(z.per_class_variance == ClassProbs{0, 0, 0});

    RoiPrediction a{{0.6, 0.3, 0.1}, {0.01, 0.02, 0.0}};
    RoiPrediction b{{0.2, 0.7, 0.1}, {0.03, 0.0, 0.0}};
    const std::vector<RoiPrediction> two{a, b};
    const auto agg = aggregate_study(two);
    CHECK(agg.probs[0] == doctest::Approx(0.4));
    CHECK(agg.probs[1] == doctest::Approx(0.5));
    CHECK(agg.predicted == LesionClass::ICC);
    CHECK(agg.uncertainty == doctest::Approx(0.03));
    CHECK(agg.confidence == doctest::Approx(0.97));

    const auto empty = aggregate_study({});
    CHECK_FALSE(empty.localized);
    CHECK(empty.confidence == 0.0);
}

TEST_CASE("summed per-class variance stays within bounds on random passes") {
    Rng rng(8);
    for (int t = 0; t < 500; ++t) {
        std::vector<ClassProbs> passes(static_cast<std::size_t>(rng.uniform_int(1, 30)));
        for (auto& p : passes) {
            double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
            const double s = a + b + c;
            p = {a / s, b / s, c / s};
        }
        const auto r = summarize_passes(passes);
        const double total = r.per_class_variance[0] + r.per_class_variance[1] + r.per_class_variance[2];
        CHECK(total >= 0.0);
        CHECK(total <= 2.0 / 3.0 + 1e-12);
    }
}

TEST_CASE("dropout 0 makes MC passes deterministic") {
    ClassifierParams p;
    p.dropout_rate = 0.0;
    const auto m = MlpModel::initialize(p, 5);
    RoiFeatures x{};
    x.fill(0.3);
    const auto r = mc_predict_roi(m, x, 50, 9);
    CHECK(r.per_class_variance == ClassProbs{0, 0, 0});
    CHECK(r.probs == m.predict(x));
    const std::vector<RoiPrediction> one{r};
    CHECK(aggregate_study(one).confidence == 1.0);
    CHECK_THROWS_AS(mc_predict_roi(m, x, 0, 9), std::invalid_argument);
}

TEST_CASE("MC estimates converge with more passes") {
    const auto data = blobs(30, 1.5, 4);
    const auto m = train(quick_params(), 1, data);
    const auto& x = data[5].x;
    const auto ref = mc_predict_roi(m, x, 20000, 77);
    const auto err = [&](int passes) {
        const auto r = mc_predict_roi(m, x, passes, 78);
        double e = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) e = std::max(e, std::abs(r.probs[c] - ref.probs[c]));
        return e;
    };
    const double e10 = err(10), e1000 = err(1000);
    CHECK(e1000 <= e10 + 1e-12);
    CHECK(e1000 < 0.02);
    CHECK(mc_predict_roi(m, x, 100, 5).probs == mc_predict_roi(m, x, 100, 5).probs);
}

TEST_CASE("training separates well-separated blobs") {
    const auto data = blobs(40, 0.5, 2);
    const auto m = train(quick_params(), 11, data);
    CHECK(accuracy(m, data) >= 0.95);
    CHECK(m.best_epoch() == quick_params().epochs);
    CHECK(m.final_train_loss() < 0.5);
    CHECK(train(quick_params(), 11, data) == m);

    const auto val = blobs(10, 0.5, 2);
    const auto mv = train(quick_params(), 11, data, val);
    CHECK(mv.best_epoch() >= 0);
    CHECK(mv.best_epoch() <= quick_params().epochs);
}

TEST_CASE("zero epochs returns the standardized initialization") {
    auto p = quick_params();
    p.epochs = 0;
    const auto data = blobs(5, 1.0, 3);
    const auto m = train(p, 21, data);
    CHECK(m.parameters() == MlpModel::initialize(p, 21).parameters());
    CHECK(m.best_epoch() == 0);
}

TEST_CASE("contradictory labels keep the loss away from zero") {
    std::vector<LabeledFeatures> data;
    Rng rng(6);
    for (int i = 0; i < 20; ++i) {
        RoiFeatures x{};
        for (auto& v : x) v = rng.normal(0.0, 1.0);
        for (auto c : kAllClasses) data.push_back({x, c});
    }
    const auto m = train(quick_params(), 2, data);
    CHECK(m.final_train_loss() > 0.9);
}

TEST_CASE("missing class is a training error naming the class") {
    auto data = blobs(5, 1.0, 1);
    std::erase_if(data, [](const LabeledFeatures& ex) { return ex.y == LesionClass::ICC; });
    try {
        (void)train(quick_params(), 1, data);
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("ICC") != std::string::npos);
    }
}

TEST_CASE("ROI features") {
    auto s = testing::flat_study("f", 16, 16, 4, 0.25f);
    const fuse::KeyRoi roi{2, {5, 5, 8, 8}, 0.9, 1};
    auto f = extract_features(s, roi);
    for (std::size_t q = 0; q < kNumSequences; ++q) {
        CHECK(f[6 * q + 0] == doctest::Approx(0.25));
        CHECK(f[6 * q + 1] == doctest::Approx(0.0));
        CHECK(f[6 * q + 2] == doctest::Approx(0.25));
        CHECK(f[6 * q + 3] == doctest::Approx(0.25));
        CHECK(f[6 * q + 4] == doctest::Approx(0.0));
        CHECK(f[6 * q + 5] == doctest::Approx(0.0));
    }
    CHECK(f[30] == doctest::Approx(16.0 / 256.0));
    CHECK(f[31] == doctest::Approx(2.0 / 3.0));

    for (auto k : kAllSequences) {
        auto& v = *s.volumes[index_of(k)];
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) v.at(x, y, 2) = roi.box.contains(x, y) ? 1.0f : 0.0f;
    }
    f = extract_features(s, roi);
    CHECK(f[4] == doctest::Approx(1.0));
    CHECK(f[6 + 4] == doctest::Approx(1.0));

    // Box covering the slice: no ring, ring statistics fall back to the interior.
    const fuse::KeyRoi whole{2, {0, 0, 15, 15}, 0.9, 1};
    f = extract_features(s, whole);
    CHECK(f[4] == doctest::Approx(0.0));
    CHECK(f[5] == doctest::Approx(f[1]));
    CHECK(f[30] == doctest::Approx(1.0));

    CHECK_THROWS_AS(extract_features(s, {4, {0, 0, 1, 1}, 0.5, 1}), std::invalid_argument);
}

TEST_CASE("model save and load are bit exact") {
    const auto m = train(quick_params(), 3, blobs(10, 1.0, 9));
    std::stringstream buf;
    m.save(buf);
    const auto back = MlpModel::load(buf);
    CHECK(back == m);
    std::istringstream bad("not a model");
    CHECK_THROWS_AS(MlpModel::load(bad), IngestError);
}

TEST_CASE("replay classifier") {
    std::istringstream ok(
        "study_id,roi_index,pass_index,p_hcc,p_icc,p_meta\n"
        "s1,0,0,1,0,0\n"
        "s1,0,1,0,1,0\n"
        "s1,1,0,0.2,0.3,0.5\n");
    const auto r = ReplayClassifier::from_csv(ok);
    const auto preds = r.predict("s1");
    REQUIRE(preds.size() == 2);
    CHECK(preds[0].probs[0] == doctest::Approx(0.5));
    CHECK(preds[0].per_class_variance[0] == doctest::Approx(0.25));
    CHECK(preds[1].probs[2] == doctest::Approx(0.5));
    CHECK(r.predict("absent").empty());

    std::istringstream dup("study_id,roi_index,pass_index,p_hcc,p_icc,p_meta\ns1,0,0,1,0,0\ns1,0,0,1,0,0\n");
    CHECK_THROWS_AS(ReplayClassifier::from_csv(dup), IngestError);
    std::istringstream bad_sum("study_id,roi_index,pass_index,p_hcc,p_icc,p_meta\ns1,0,0,0.5,0.1,0.1\n");
    CHECK_THROWS_AS(ReplayClassifier::from_csv(bad_sum), IngestError);
}
