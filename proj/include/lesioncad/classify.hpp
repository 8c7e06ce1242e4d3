#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lesioncad/config.hpp"
#include "lesioncad/fuse.hpp"
#include "lesioncad/types.hpp"

namespace lesioncad::classify {

// Feature layout, per sequence s in SequenceKind order (base = 6 * s):
//   base+0 interior mean    base+1 interior std   base+2 interior min
//   base+3 interior max     base+4 interior mean - ring mean
//   base+5 ring std
// followed by [30] box area / slice area and [31] z / (nz - 1).
// The ring is the 2-pixel band around the box, clipped to the slice; when it
// is empty the ring statistics fall back to the interior statistics.
inline constexpr std::size_t kFeatureCount = 32;
inline constexpr int kRingWidth = 2;
using RoiFeatures = std::array<double, kFeatureCount>;

RoiFeatures extract_features(const Study& study, const fuse::KeyRoi& roi);

struct LabeledFeatures {
    RoiFeatures x{};
    LesionClass y = LesionClass::HCC;
};

struct RoiPrediction {
    ClassProbs probs{};
    ClassProbs per_class_variance{};
};

struct StudyPrediction {
    ClassProbs probs{};
    double uncertainty = 0.0;
    double confidence = 0.0;
    LesionClass predicted = LesionClass::HCC;
    bool localized = false;
};

// Feedforward network 32 -> hidden1 -> hidden2 -> 3 with tanh hidden units and
// a softmax output. Dropout acts on the hidden2 activation, the input of the
// final fully connected layer, with inverted scaling. Inputs are standardized
// with statistics fitted on the training set.
class MlpModel {
public:
    static MlpModel initialize(const ClassifierParams& params, std::uint64_t seed);

    const ClassifierParams& params() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<double>& parameters() { return weights_; }
    const std::vector<double>& parameters() const { return weights_; }
    std::array<int, 4> layer_sizes() const {
        return {static_cast<int>(kFeatureCount), params_.hidden1, params_.hidden2, static_cast<int>(kNumClasses)};
    }

    const RoiFeatures& feature_mean() const { return feature_mean_; }
    const RoiFeatures& feature_scale() const { return feature_scale_; }
    void set_standardization(const RoiFeatures& mean, const RoiFeatures& scale);

    double final_train_loss() const { return final_train_loss_; }
    int best_epoch() const { return best_epoch_; }

    // Penultimate activation (hidden2, before dropout).
    std::vector<double> penultimate(const RoiFeatures& x) const;
    // Softmax of the output layer applied to a (possibly dropped-out) penultimate vector.
    ClassProbs head(std::span<const double> hidden) const;
    ClassProbs predict(const RoiFeatures& x) const;

    // Cross-entropy of one example. `keep_scale`, when given, multiplies the
    // hidden2 activation elementwise (0 for dropped units, 1/(1-p) otherwise).
    // When `grad` is non-null it receives d loss / d parameters().
    double loss_and_gradient(const RoiFeatures& x, LesionClass y, std::vector<double>* grad,
                             std::span<const double> keep_scale = {}) const;

    // Mean cross-entropy with dropout disabled.
    double mean_loss(std::span<const LabeledFeatures> data) const;

    void save(std::ostream& out) const;
    static MlpModel load(std::istream& in);
    void save_file(const std::string& path) const;
    static MlpModel load_file(const std::string& path);

    friend bool operator==(const MlpModel&, const MlpModel&) = default;

private:
    friend MlpModel train(const ClassifierParams&, std::uint64_t, std::span<const LabeledFeatures>,
                          std::span<const LabeledFeatures>);

    ClassifierParams params_;
    std::uint64_t seed_ = 0;
    std::vector<double> weights_;
    RoiFeatures feature_mean_{};
    RoiFeatures feature_scale_{};
    double final_train_loss_ = 0.0;
    int best_epoch_ = 0;
};

// Mini-batch SGD with momentum on cross-entropy, dropout active. With a
// non-empty validation set the parameters from the epoch with the lowest
// validation loss are returned. Throws TrainingError when a class has no
// examples.
MlpModel train(const ClassifierParams& params, std::uint64_t seed, std::span<const LabeledFeatures> train_set,
               std::span<const LabeledFeatures> validation_set = {});

// Mean and population variance over pass outputs.
RoiPrediction summarize_passes(std::span<const ClassProbs> passes);

// `passes` stochastic forward passes with dropout at the model's rate.
RoiPrediction mc_predict_roi(const MlpModel& model, const RoiFeatures& features, int passes, std::uint64_t seed);

// Study-wise mean probabilities; uncertainty is the mean over ROIs of the
// summed per-class variance; confidence = 1 - uncertainty. Empty input is a
// localization failure.
StudyPrediction aggregate_study(std::span<const RoiPrediction> roi_preds);

std::size_t argmax(const ClassProbs& p);

// Replayed per-pass probabilities, e.g. from an external CNN.
// CSV header: study_id,roi_index,pass_index,p_hcc,p_icc,p_meta
class ReplayClassifier {
public:
    static ReplayClassifier from_csv(std::istream& in);
    static ReplayClassifier from_file(const std::string& path);

    // ROI predictions of a study in roi_index order; empty when absent.
    std::vector<RoiPrediction> predict(const std::string& study_id) const;
    std::vector<std::string> study_ids() const;

private:
    std::map<std::string, std::map<long long, std::map<long long, ClassProbs>>, std::less<>> samples_;
};

}  // namespace lesioncad::classify
