#include "lesioncad/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"

namespace lesioncad {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string fmt_double(double v) { return format_double(v); }

void require(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) throw ConfigError(field + ": " + rule);
}

bool in_unit_interval(double v) { return v > 0.0 && v <= 1.0; }

using Setter = std::function<void(std::string_view)>;

void apply_detector_key(DetectorParams& p, std::string_view field, std::string_view key,
                        std::string_view value) {
    if (field == "sigma_small") p.dog_sigma_small = parse_double(key, value);
    else if (field == "sigma_large") p.dog_sigma_large = parse_double(key, value);
    else if (field == "response_threshold") p.response_threshold = parse_double(key, value);
    else if (field == "noise_k") p.noise_k = parse_double(key, value);
    else if (field == "support_threshold") p.support_threshold = parse_double(key, value);
    else if (field == "support_k") p.support_k = parse_double(key, value);
    else if (field == "min_area") p.min_area = static_cast<int>(parse_int(key, value));
    else if (field == "w_primary") p.w_primary = parse_double(key, value);
    else if (field == "w_secondary") p.w_secondary = parse_double(key, value);
    else throw ConfigError("unknown key '" + std::string(key) + "'");
}

}  // namespace

void DetectorParams::validate() const {
    require(dog_sigma_small > 0.0, "detector.sigma_small", "must be positive");
    require(dog_sigma_small < dog_sigma_large, "detector.sigma_large", "must exceed sigma_small");
    require(!std::isnan(response_threshold), "detector.response_threshold", "must not be NaN");
    require(noise_k >= 0.0, "detector.noise_k", "must be nonnegative");
    require(support_threshold > 0.0 && std::isfinite(support_threshold), "detector.support_threshold",
            "must be positive and finite");
    require(support_k >= 0.0, "detector.support_k", "must be nonnegative");
    require(min_area >= 1, "detector.min_area", "must be at least 1");
    require(w_primary >= 0.0 && w_secondary >= 0.0, "detector.w_primary", "weights must be nonnegative");
    require(std::abs(w_primary + w_secondary - 1.0) < 1e-9, "detector.w_secondary",
            "weights must sum to 1");
}

void ClassifierParams::validate() const {
    require(hidden1 >= 1 && hidden2 >= 1, "classifier.hidden", "layer sizes must be positive");
    require(learning_rate > 0.0, "classifier.learning_rate", "must be positive");
    require(momentum >= 0.0 && momentum < 1.0, "classifier.momentum", "must be in [0,1)");
    require(epochs >= 0, "classifier.epochs", "must be nonnegative");
    require(batch_size >= 1, "classifier.batch_size", "must be at least 1");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "classifier.dropout_rate", "must be in [0,1)");
    require(mc_passes >= 1, "classifier.mc_passes", "must be at least 1");
}

void PipelineConfig::validate() const {
    require(roi_conf_threshold >= 0.0 && roi_conf_threshold <= 1.0, "roi.conf_threshold", "must be in [0,1]");
    require(in_unit_interval(keyroi_keep_fraction), "roi.keep_fraction", "must be in (0,1]");
    require(folds >= 2, "cv.folds", "must be at least 2");
    require(val_fraction >= 0.0 && val_fraction < 1.0, "cv.val_fraction", "must be in [0,1)");
    require(in_unit_interval(retention_fraction), "eval.retention_fraction", "must be in (0,1]");
    require(operating_specificity > 0.0 && operating_specificity < 1.0, "eval.operating_specificity",
            "must be in (0,1)");
    require(size_threshold_mm > 0.0, "eval.size_threshold_mm", "must be positive");
    for (const auto& d : detector) d.validate();
    classifier.validate();
}

KeyValues parse_key_values(std::string_view text) {
    KeyValues out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        }
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (!out.emplace(std::string(key), std::string(value)).second) {
            throw ConfigError("duplicate key '" + std::string(key) + "'");
        }
    }
    return out;
}

double parse_double(std::string_view key, std::string_view value) {
    if (value == "inf" || value == "+inf") return std::numeric_limits<double>::infinity();
    if (value == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw ConfigError(std::string(key) + ": cannot parse '" + std::string(value) + "' as a number");
    }
    return v;
}

long long parse_int(std::string_view key, std::string_view value) {
    long long v = 0;
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw ConfigError(std::string(key) + ": cannot parse '" + std::string(value) + "' as an integer");
    }
    return v;
}

std::uint64_t parse_u64(std::string_view key, std::string_view value) {
    std::uint64_t v = 0;
    const auto* end = value.data() + value.size();
    const auto res = std::from_chars(value.data(), end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        throw ConfigError(std::string(key) + ": cannot parse '" + std::string(value) + "' as an unsigned integer");
    }
    return v;
}

PipelineConfig config_from_text(std::string_view text) {
    PipelineConfig c;
    const auto kv = parse_key_values(text);
    auto& cl = c.classifier;
    const std::map<std::string, Setter, std::less<>> setters = {
        {"seed", [&](std::string_view v) { c.seed = parse_u64("seed", v); }},
        {"roi.conf_threshold", [&](std::string_view v) { c.roi_conf_threshold = parse_double("roi.conf_threshold", v); }},
        {"roi.keep_fraction", [&](std::string_view v) { c.keyroi_keep_fraction = parse_double("roi.keep_fraction", v); }},
        {"cv.folds", [&](std::string_view v) { c.folds = static_cast<int>(parse_int("cv.folds", v)); }},
        {"cv.val_fraction", [&](std::string_view v) { c.val_fraction = parse_double("cv.val_fraction", v); }},
        {"eval.retention_fraction", [&](std::string_view v) { c.retention_fraction = parse_double("eval.retention_fraction", v); }},
        {"eval.operating_specificity", [&](std::string_view v) { c.operating_specificity = parse_double("eval.operating_specificity", v); }},
        {"eval.size_threshold_mm", [&](std::string_view v) { c.size_threshold_mm = parse_double("eval.size_threshold_mm", v); }},
        {"eval.lroc_rule", [&](std::string_view v) {
             if (v == "center_in_box") c.lroc_rule = LocalizationRule::CenterInBox;
             else if (v == "any_roi") c.lroc_rule = LocalizationRule::AnyRoi;
             else throw ConfigError("eval.lroc_rule: expected center_in_box or any_roi");
         }},
        {"classifier.hidden1", [&](std::string_view v) { cl.hidden1 = static_cast<int>(parse_int("classifier.hidden1", v)); }},
        {"classifier.hidden2", [&](std::string_view v) { cl.hidden2 = static_cast<int>(parse_int("classifier.hidden2", v)); }},
        {"classifier.learning_rate", [&](std::string_view v) { cl.learning_rate = parse_double("classifier.learning_rate", v); }},
        {"classifier.momentum", [&](std::string_view v) { cl.momentum = parse_double("classifier.momentum", v); }},
        {"classifier.epochs", [&](std::string_view v) { cl.epochs = static_cast<int>(parse_int("classifier.epochs", v)); }},
        {"classifier.batch_size", [&](std::string_view v) { cl.batch_size = static_cast<int>(parse_int("classifier.batch_size", v)); }},
        {"classifier.dropout_rate", [&](std::string_view v) { cl.dropout_rate = parse_double("classifier.dropout_rate", v); }},
        {"classifier.mc_passes", [&](std::string_view v) { cl.mc_passes = static_cast<int>(parse_int("classifier.mc_passes", v)); }},
    };

    // Shared detector keys first so per-sequence overrides win regardless of file order.
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& [key, value] : kv) {
            const std::string_view k = key;
            if (k.starts_with("detector.")) {
                const auto rest = k.substr(9);
                const auto dot = rest.find('.');
                if (dot == std::string_view::npos) {
                    if (pass == 0) {
                        for (auto& d : c.detector) apply_detector_key(d, rest, k, value);
                    }
                } else if (pass == 1) {
                    const auto seq = parse_sequence(rest.substr(0, dot));
                    if (!seq) throw ConfigError("unknown key '" + key + "'");
                    apply_detector_key(c.detector[index_of(*seq)], rest.substr(dot + 1), k, value);
                }
                continue;
            }
            if (pass == 1) continue;
            const auto it = setters.find(k);
            if (it == setters.end()) throw ConfigError("unknown key '" + key + "'");
            it->second(value);
        }
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_text(ss.str());
}

std::string config_to_text(const PipelineConfig& c) {
    std::ostringstream os;
    os << "seed = " << c.seed << '\n';
    os << "roi.conf_threshold = " << fmt_double(c.roi_conf_threshold) << '\n';
    os << "roi.keep_fraction = " << fmt_double(c.keyroi_keep_fraction) << '\n';
    os << "cv.folds = " << c.folds << '\n';
    os << "cv.val_fraction = " << fmt_double(c.val_fraction) << '\n';
    os << "eval.retention_fraction = " << fmt_double(c.retention_fraction) << '\n';
    os << "eval.operating_specificity = " << fmt_double(c.operating_specificity) << '\n';
    os << "eval.size_threshold_mm = " << fmt_double(c.size_threshold_mm) << '\n';
    os << "eval.lroc_rule = " << (c.lroc_rule == LocalizationRule::CenterInBox ? "center_in_box" : "any_roi")
       << '\n';
    const auto& cl = c.classifier;
    os << "classifier.hidden1 = " << cl.hidden1 << '\n';
    os << "classifier.hidden2 = " << cl.hidden2 << '\n';
    os << "classifier.learning_rate = " << fmt_double(cl.learning_rate) << '\n';
    os << "classifier.momentum = " << fmt_double(cl.momentum) << '\n';
    os << "classifier.epochs = " << cl.epochs << '\n';
    os << "classifier.batch_size = " << cl.batch_size << '\n';
    os << "classifier.dropout_rate = " << fmt_double(cl.dropout_rate) << '\n';
    os << "classifier.mc_passes = " << cl.mc_passes << '\n';
    for (auto s : kAllSequences) {
        const auto& d = c.detector[index_of(s)];
        const std::string p = "detector." + std::string(to_string(s)) + ".";
        os << p << "sigma_small = " << fmt_double(d.dog_sigma_small) << '\n';
        os << p << "sigma_large = " << fmt_double(d.dog_sigma_large) << '\n';
        os << p << "response_threshold = " << fmt_double(d.response_threshold) << '\n';
        os << p << "noise_k = " << fmt_double(d.noise_k) << '\n';
        os << p << "support_threshold = " << fmt_double(d.support_threshold) << '\n';
        os << p << "support_k = " << fmt_double(d.support_k) << '\n';
        os << p << "min_area = " << d.min_area << '\n';
        os << p << "w_primary = " << fmt_double(d.w_primary) << '\n';
        os << p << "w_secondary = " << fmt_double(d.w_secondary) << '\n';
    }
    return os.str();
}

}  // namespace lesioncad
