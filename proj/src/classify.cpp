#include "lesioncad/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/rng.hpp"

namespace lesioncad::classify {

namespace {

struct RunningStats {
    double n = 0, sum = 0, sum_sq = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        n += 1;
        sum += v;
        sum_sq += v * v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    double mean() const { return sum / n; }
    double stddev() const { return std::sqrt(std::max(0.0, sum_sq / n - mean() * mean())); }
};

struct Layout {
    std::size_t in, h1, h2, out;
    std::size_t w1, b1, w2, b2, w3, b3, total;

    explicit Layout(const ClassifierParams& p)
        : in(kFeatureCount),
          h1(static_cast<std::size_t>(p.hidden1)),
          h2(static_cast<std::size_t>(p.hidden2)),
          out(kNumClasses) {
        w1 = 0;
        b1 = w1 + h1 * in;
        w2 = b1 + h1;
        b2 = w2 + h2 * h1;
        w3 = b2 + h2;
        b3 = w3 + out * h2;
        total = b3 + out;
    }
};

ClassProbs softmax(const std::array<double, kNumClasses>& logits) {
    const double m = *std::max_element(logits.begin(), logits.end());
    ClassProbs p{};
    double z = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        p[c] = std::exp(logits[c] - m);
        z += p[c];
    }
    for (double& v : p) v /= z;
    return p;
}

}  // namespace

RoiFeatures extract_features(const Study& study, const fuse::KeyRoi& roi) {
    const Dims d = study.dims();
    const Box2D& b = roi.box;
    if (!b.valid() || b.x0 < 0 || b.y0 < 0 || b.x1 >= d.nx || b.y1 >= d.ny || roi.z < 0 || roi.z >= d.nz) {
        throw std::invalid_argument("extract_features: ROI outside the volume");
    }
    const int rx0 = std::max(0, b.x0 - kRingWidth);
    const int ry0 = std::max(0, b.y0 - kRingWidth);
    const int rx1 = std::min(d.nx - 1, b.x1 + kRingWidth);
    const int ry1 = std::min(d.ny - 1, b.y1 + kRingWidth);

    RoiFeatures f{};
    for (auto s : kAllSequences) {
        const auto& vol = study.volume(s);
        RunningStats inner;
        RunningStats ring;
        for (int y = ry0; y <= ry1; ++y) {
            for (int x = rx0; x <= rx1; ++x) {
                const double v = vol.at(x, y, roi.z);
                if (b.contains(x, y)) inner.add(v);
                else ring.add(v);
            }
        }
        if (ring.n == 0) ring = inner;
        const std::size_t base = 6 * index_of(s);
        f[base + 0] = inner.mean();
        f[base + 1] = inner.stddev();
        f[base + 2] = inner.lo;
        f[base + 3] = inner.hi;
        f[base + 4] = inner.mean() - ring.mean();
        f[base + 5] = ring.stddev();
    }
    f[30] = static_cast<double>(b.area()) / static_cast<double>(d.slice_size());
    f[31] = d.nz > 1 ? static_cast<double>(roi.z) / (d.nz - 1) : 0.0;
    return f;
}

MlpModel MlpModel::initialize(const ClassifierParams& params, std::uint64_t seed) {
    params.validate();
    MlpModel m;
    m.params_ = params;
    m.seed_ = seed;
    const Layout L(params);
    m.weights_.assign(L.total, 0.0);
    Rng rng(derive_seed(seed, "mlp", "init"));
    const auto fill = [&](std::size_t offset, std::size_t fan_out, std::size_t fan_in) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (std::size_t i = 0; i < fan_out * fan_in; ++i) m.weights_[offset + i] = rng.uniform(-limit, limit);
    };
    fill(L.w1, L.h1, L.in);
    fill(L.w2, L.h2, L.h1);
    fill(L.w3, L.out, L.h2);
    m.feature_mean_.fill(0.0);
    m.feature_scale_.fill(1.0);
    return m;
}

void MlpModel::set_standardization(const RoiFeatures& mean, const RoiFeatures& scale) {
    for (double s : scale) {
        if (!(s > 0.0)) throw std::invalid_argument("feature scale must be positive");
    }
    feature_mean_ = mean;
    feature_scale_ = scale;
}

std::vector<double> MlpModel::penultimate(const RoiFeatures& x) const {
    const Layout L(params_);
    const double* w = weights_.data();
    std::array<double, kFeatureCount> xs{};
    for (std::size_t i = 0; i < L.in; ++i) xs[i] = (x[i] - feature_mean_[i]) / feature_scale_[i];
    std::vector<double> a1(L.h1);
    for (std::size_t j = 0; j < L.h1; ++j) {
        double acc = w[L.b1 + j];
        const double* row = w + L.w1 + j * L.in;
        for (std::size_t i = 0; i < L.in; ++i) acc += row[i] * xs[i];
        a1[j] = std::tanh(acc);
    }
    std::vector<double> a2(L.h2);
    for (std::size_t k = 0; k < L.h2; ++k) {
        double acc = w[L.b2 + k];
        const double* row = w + L.w2 + k * L.h1;
        for (std::size_t j = 0; j < L.h1; ++j) acc += row[j] * a1[j];
        a2[k] = std::tanh(acc);
    }
    return a2;
}

ClassProbs MlpModel::head(std::span<const double> hidden) const {
    const Layout L(params_);
    std::array<double, kNumClasses> logits{};
    for (std::size_t c = 0; c < L.out; ++c) {
        double acc = weights_[L.b3 + c];
        const double* row = weights_.data() + L.w3 + c * L.h2;
        for (std::size_t k = 0; k < L.h2; ++k) acc += row[k] * hidden[k];
        logits[c] = acc;
    }
    return softmax(logits);
}

ClassProbs MlpModel::predict(const RoiFeatures& x) const { return head(penultimate(x)); }

double MlpModel::loss_and_gradient(const RoiFeatures& x, LesionClass y, std::vector<double>* grad,
                                   std::span<const double> keep_scale) const {
    const Layout L(params_);
    const double* w = weights_.data();
    std::array<double, kFeatureCount> xs{};
    for (std::size_t i = 0; i < L.in; ++i) xs[i] = (x[i] - feature_mean_[i]) / feature_scale_[i];

    std::vector<double> a1(L.h1), a2(L.h2), d(L.h2);
    for (std::size_t j = 0; j < L.h1; ++j) {
        double acc = w[L.b1 + j];
        const double* row = w + L.w1 + j * L.in;
        for (std::size_t i = 0; i < L.in; ++i) acc += row[i] * xs[i];
        a1[j] = std::tanh(acc);
    }
    for (std::size_t k = 0; k < L.h2; ++k) {
        double acc = w[L.b2 + k];
        const double* row = w + L.w2 + k * L.h1;
        for (std::size_t j = 0; j < L.h1; ++j) acc += row[j] * a1[j];
        a2[k] = std::tanh(acc);
        d[k] = keep_scale.empty() ? a2[k] : a2[k] * keep_scale[k];
    }
    const ClassProbs p = head(d);
    const std::size_t target = index_of(y);
    const double loss = -std::log(std::max(p[target], 1e-300));
    if (grad == nullptr) return loss;

    grad->assign(L.total, 0.0);
    double* g = grad->data();
    std::array<double, kNumClasses> dz3{};
    for (std::size_t c = 0; c < L.out; ++c) dz3[c] = p[c] - (c == target ? 1.0 : 0.0);

    std::vector<double> dz2(L.h2, 0.0);
    for (std::size_t c = 0; c < L.out; ++c) {
        g[L.b3 + c] = dz3[c];
        for (std::size_t k = 0; k < L.h2; ++k) {
            g[L.w3 + c * L.h2 + k] = dz3[c] * d[k];
            dz2[k] += w[L.w3 + c * L.h2 + k] * dz3[c];
        }
    }
    for (std::size_t k = 0; k < L.h2; ++k) {
        const double scale = keep_scale.empty() ? 1.0 : keep_scale[k];
        dz2[k] *= scale * (1.0 - a2[k] * a2[k]);
    }
    std::vector<double> dz1(L.h1, 0.0);
    for (std::size_t k = 0; k < L.h2; ++k) {
        g[L.b2 + k] = dz2[k];
        for (std::size_t j = 0; j < L.h1; ++j) {
            g[L.w2 + k * L.h1 + j] = dz2[k] * a1[j];
            dz1[j] += w[L.w2 + k * L.h1 + j] * dz2[k];
        }
    }
    for (std::size_t j = 0; j < L.h1; ++j) {
        dz1[j] *= 1.0 - a1[j] * a1[j];
        g[L.b1 + j] = dz1[j];
        for (std::size_t i = 0; i < L.in; ++i) g[L.w1 + j * L.in + i] = dz1[j] * xs[i];
    }
    return loss;
}

double MlpModel::mean_loss(std::span<const LabeledFeatures> data) const {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const auto& ex : data) total += loss_and_gradient(ex.x, ex.y, nullptr);
    return total / static_cast<double>(data.size());
}

MlpModel train(const ClassifierParams& params, std::uint64_t seed, std::span<const LabeledFeatures> train_set,
               std::span<const LabeledFeatures> validation_set) {
    params.validate();
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& ex : train_set) ++counts[index_of(ex.y)];
    for (auto c : kAllClasses) {
        if (counts[index_of(c)] == 0) {
            throw TrainingError("no training examples for class " + std::string(to_string(c)));
        }
    }

    MlpModel model = MlpModel::initialize(params, seed);
    RoiFeatures mean{};
    RoiFeatures scale{};
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        double s = 0.0, s2 = 0.0;
        for (const auto& ex : train_set) {
            s += ex.x[i];
            s2 += ex.x[i] * ex.x[i];
        }
        const double n = static_cast<double>(train_set.size());
        mean[i] = s / n;
        const double sd = std::sqrt(std::max(0.0, s2 / n - mean[i] * mean[i]));
        scale[i] = sd > 1e-12 ? sd : 1.0;
    }
    model.set_standardization(mean, scale);

    const Layout L(params);
    Rng rng(derive_seed(seed, "mlp", "train"));
    std::vector<double> velocity(L.total, 0.0);
    std::vector<double> grad, batch_grad(L.total);
    std::vector<double> keep(L.h2);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const double keep_prob = 1.0 - params.dropout_rate;
    const bool use_val = !validation_set.empty();
    std::vector<double> best_weights = model.weights_;
    double best_val = use_val ? model.mean_loss(validation_set) : 0.0;
    int best_epoch = 0;

    for (int epoch = 1; epoch <= params.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(params.batch_size)) {
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(params.batch_size));
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            for (std::size_t b = start; b < stop; ++b) {
                for (double& k : keep) k = rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
                const auto& ex = train_set[order[b]];
                model.loss_and_gradient(ex.x, ex.y, &grad, keep);
                for (std::size_t i = 0; i < L.total; ++i) batch_grad[i] += grad[i];
            }
            const double inv = 1.0 / static_cast<double>(stop - start);
            for (std::size_t i = 0; i < L.total; ++i) {
                velocity[i] = params.momentum * velocity[i] - params.learning_rate * batch_grad[i] * inv;
                model.weights_[i] += velocity[i];
            }
        }
        if (use_val) {
            const double v = model.mean_loss(validation_set);
            if (v < best_val) {
                best_val = v;
                best_epoch = epoch;
                best_weights = model.weights_;
            }
        } else {
            best_epoch = epoch;
        }
    }
    if (use_val) model.weights_ = best_weights;
    model.best_epoch_ = best_epoch;
    model.final_train_loss_ = model.mean_loss(train_set);
    return model;
}

RoiPrediction summarize_passes(std::span<const ClassProbs> passes) {
    RoiPrediction out;
    if (passes.empty()) return out;
    // Welford: exact zero variance when every pass is identical.
    ClassProbs mean{}, m2{};
    double n = 0.0;
    for (const auto& p : passes) {
        n += 1.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
            const double delta = p[c] - mean[c];
            mean[c] += delta / n;
            m2[c] += delta * (p[c] - mean[c]);
        }
    }
    out.probs = mean;
    for (std::size_t c = 0; c < kNumClasses; ++c) out.per_class_variance[c] = std::max(0.0, m2[c] / n);
    return out;
}

RoiPrediction mc_predict_roi(const MlpModel& model, const RoiFeatures& features, int passes, std::uint64_t seed) {
    if (passes < 1) throw std::invalid_argument("mc_predict_roi: passes must be at least 1");
    const auto hidden = model.penultimate(features);
    const double rate = model.params().dropout_rate;
    const double keep_prob = 1.0 - rate;
    Rng rng(seed);
    std::vector<ClassProbs> outputs;
    outputs.reserve(static_cast<std::size_t>(passes));
    std::vector<double> dropped(hidden.size());
    for (int p = 0; p < passes; ++p) {
        for (std::size_t k = 0; k < hidden.size(); ++k) {
            dropped[k] = rate > 0.0 ? (rng.uniform() < keep_prob ? hidden[k] / keep_prob : 0.0) : hidden[k];
        }
        outputs.push_back(model.head(dropped));
    }
    return summarize_passes(outputs);
}

std::size_t argmax(const ClassProbs& p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c) {
        if (p[c] > p[best]) best = c;
    }
    return best;
}

StudyPrediction aggregate_study(std::span<const RoiPrediction> roi_preds) {
    StudyPrediction out;
    if (roi_preds.empty()) {
        out.probs = {0.0, 0.0, 0.0};
        out.uncertainty = 1.0;
        out.confidence = 0.0;
        out.localized = false;
        return out;
    }
    const double n = static_cast<double>(roi_preds.size());
    double u = 0.0;
    for (const auto& r : roi_preds) {
        for (std::size_t c = 0; c < kNumClasses; ++c) out.probs[c] += r.probs[c];
        u += r.per_class_variance[0] + r.per_class_variance[1] + r.per_class_variance[2];
    }
    for (double& p : out.probs) p /= n;
    out.uncertainty = u / n;
    out.confidence = 1.0 - out.uncertainty;
    out.predicted = static_cast<LesionClass>(argmax(out.probs));
    out.localized = true;
    return out;
}

// --- persistence -------------------------------------------------------------

namespace {

constexpr const char* kModelMagic = "lesioncad-mlp";
constexpr int kModelVersion = 1;

template <typename T>
T expect_field(std::istream& in, const std::string& name) {
    std::string key;
    if (!(in >> key) || key != name) throw IngestError("model file: expected field '" + name + "'");
    std::string token;
    if (!(in >> token)) throw IngestError("model file: missing value for '" + name + "'");
    if constexpr (std::is_same_v<T, double>) {
        return parse_double(name, token);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        return parse_u64(name, token);
    } else {
        return static_cast<T>(parse_int(name, token));
    }
}

double read_double(std::istream& in, const std::string& what) {
    std::string token;
    if (!(in >> token)) throw IngestError("model file: truncated " + what);
    try {
        return parse_double(what, token);
    } catch (const ConfigError& e) {
        throw IngestError(std::string("model file: ") + e.what());
    }
}

}  // namespace

void MlpModel::save(std::ostream& out) const {
    const auto sizes = layer_sizes();
    out << kModelMagic << ' ' << kModelVersion << '\n';
    out << "layers " << sizes[0] << ' ' << sizes[1] << ' ' << sizes[2] << ' ' << sizes[3] << '\n';
    out << "learning_rate " << format_double(params_.learning_rate) << '\n';
    out << "momentum " << format_double(params_.momentum) << '\n';
    out << "epochs " << params_.epochs << '\n';
    out << "batch_size " << params_.batch_size << '\n';
    out << "dropout_rate " << format_double(params_.dropout_rate) << '\n';
    out << "mc_passes " << params_.mc_passes << '\n';
    out << "seed " << seed_ << '\n';
    out << "final_train_loss " << format_double(final_train_loss_) << '\n';
    out << "best_epoch " << best_epoch_ << '\n';
    out << "feature_mean";
    for (double v : feature_mean_) out << ' ' << format_double(v);
    out << "\nfeature_scale";
    for (double v : feature_scale_) out << ' ' << format_double(v);
    out << "\nweights " << weights_.size() << '\n';
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        out << format_double(weights_[i]) << ((i + 1) % 8 == 0 || i + 1 == weights_.size() ? '\n' : ' ');
    }
}

MlpModel MlpModel::load(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kModelMagic) throw IngestError("model file: bad magic");
    if (version != kModelVersion) throw IngestError("model file: unsupported version " + std::to_string(version));
    std::string key;
    int l0 = 0, l1 = 0, l2 = 0, l3 = 0;
    if (!(in >> key >> l0 >> l1 >> l2 >> l3) || key != "layers") throw IngestError("model file: bad layers line");
    if (l0 != static_cast<int>(kFeatureCount) || l3 != static_cast<int>(kNumClasses)) {
        throw IngestError("model file: layer sizes incompatible with features/classes");
    }
    ClassifierParams p;
    p.hidden1 = l1;
    p.hidden2 = l2;
    p.learning_rate = expect_field<double>(in, "learning_rate");
    p.momentum = expect_field<double>(in, "momentum");
    p.epochs = expect_field<int>(in, "epochs");
    p.batch_size = expect_field<int>(in, "batch_size");
    p.dropout_rate = expect_field<double>(in, "dropout_rate");
    p.mc_passes = expect_field<int>(in, "mc_passes");
    const auto seed = expect_field<std::uint64_t>(in, "seed");
    MlpModel m = MlpModel::initialize(p, seed);
    m.final_train_loss_ = expect_field<double>(in, "final_train_loss");
    m.best_epoch_ = expect_field<int>(in, "best_epoch");
    if (!(in >> key) || key != "feature_mean") throw IngestError("model file: expected feature_mean");
    for (double& v : m.feature_mean_) v = read_double(in, "feature_mean");
    if (!(in >> key) || key != "feature_scale") throw IngestError("model file: expected feature_scale");
    for (double& v : m.feature_scale_) v = read_double(in, "feature_scale");
    std::size_t count = 0;
    if (!(in >> key >> count) || key != "weights" || count != m.weights_.size()) {
        throw IngestError("model file: weight count does not match layer sizes");
    }
    for (double& v : m.weights_) v = read_double(in, "weights");
    return m;
}

void MlpModel::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model file " + path);
    save(out);
}

MlpModel MlpModel::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot read model file " + path);
    return load(in);
}

ReplayClassifier ReplayClassifier::from_csv(std::istream& in) {
    static const std::vector<std::string> header = {"study_id", "roi_index", "pass_index", "p_hcc", "p_icc", "p_meta"};
    ReplayClassifier rc;
    for (const auto& row : read_csv(in, header, "replay predictions")) {
        const auto roi = csv_int(row, 1, "replay predictions");
        const auto pass = csv_int(row, 2, "replay predictions");
        ClassProbs p{csv_double(row, 3, "replay predictions"), csv_double(row, 4, "replay predictions"),
                     csv_double(row, 5, "replay predictions")};
        const double sum = p[0] + p[1] + p[2];
        if (p[0] < 0 || p[1] < 0 || p[2] < 0 || std::abs(sum - 1.0) > 1e-6) {
            throw IngestError("replay predictions line " + std::to_string(row.line) +
                              ": probabilities must be nonnegative and sum to 1");
        }
        auto& passes = rc.samples_[row.fields[0]][roi];
        if (!passes.emplace(pass, p).second) {
            throw IngestError("replay predictions line " + std::to_string(row.line) + ": duplicate pass");
        }
    }
    return rc;
}

ReplayClassifier ReplayClassifier::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read replay predictions " + path);
    return from_csv(in);
}

std::vector<RoiPrediction> ReplayClassifier::predict(const std::string& study_id) const {
    std::vector<RoiPrediction> out;
    const auto it = samples_.find(study_id);
    if (it == samples_.end()) return out;
    for (const auto& [roi, passes] : it->second) {
        std::vector<ClassProbs> samples;
        samples.reserve(passes.size());
        for (const auto& [idx, p] : passes) samples.push_back(p);
        out.push_back(summarize_passes(samples));
    }
    return out;
}

std::vector<std::string> ReplayClassifier::study_ids() const {
    std::vector<std::string> ids;
    for (const auto& [id, rois] : samples_) ids.push_back(id);
    return ids;
}

}  // namespace lesioncad::classify
