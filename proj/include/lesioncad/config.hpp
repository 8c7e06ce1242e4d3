#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "lesioncad/types.hpp"

namespace lesioncad {

// Reference blob detector. The response is the channel-blended difference of
// Gaussians minus its slice median. Components are grown at the support level
// and kept when their peak clears the detection level (hysteresis), where
//   detection level = max(response_threshold, noise_k * robust_sigma)
//   support level   = max(support_threshold,  support_k * robust_sigma)
// and robust_sigma is the MAD-based spread of the response over the slice.
struct DetectorParams {
    double dog_sigma_small = 1.5;
    double dog_sigma_large = 5.0;
    double response_threshold = 0.03;
    double noise_k = 5.5;
    double support_threshold = 0.015;
    double support_k = 3.0;
    int min_area = 4;
    double w_primary = 0.7;
    double w_secondary = 0.3;

    void validate() const;
    friend bool operator==(const DetectorParams&, const DetectorParams&) = default;
};

struct ClassifierParams {
    int hidden1 = 64;
    int hidden2 = 32;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int epochs = 200;
    int batch_size = 32;
    double dropout_rate = 0.2;
    int mc_passes = 100;

    void validate() const;
    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

enum class LocalizationRule {
    CenterInBox,  // a selected key ROI center must fall in a truth box on its slice
    AnyRoi,       // strict: only studies without any key ROI count as unlocalized
};

struct PipelineConfig {
    double roi_conf_threshold = 0.5;
    double keyroi_keep_fraction = 0.48;
    int folds = 5;
    // Fraction of each class held out for validation, drawn from the non-test part.
    double val_fraction = 0.10;
    std::uint64_t seed = 2021;
    std::array<DetectorParams, kNumSequences> detector{};
    ClassifierParams classifier{};
    double retention_fraction = 0.70;
    double operating_specificity = 0.80;
    double size_threshold_mm = 20.0;
    LocalizationRule lroc_rule = LocalizationRule::CenterInBox;

    void validate() const;
    friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

// Flat "key = value" text with dotted section names; '#' starts a comment.
using KeyValues = std::map<std::string, std::string, std::less<>>;
KeyValues parse_key_values(std::string_view text);

double parse_double(std::string_view key, std::string_view value);
long long parse_int(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);

// Unknown keys are errors. "detector.<field>" sets every sequence,
// "detector.<SEQ>.<field>" overrides one.
PipelineConfig config_from_text(std::string_view text);
PipelineConfig load_config(const std::string& path);
// Canonical snapshot; config_from_text(config_to_text(c)) == c.
std::string config_to_text(const PipelineConfig& config);

}  // namespace lesioncad
