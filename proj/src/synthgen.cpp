#include "lesioncad/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <tuple>

#include "lesioncad/config.hpp"
#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/parallel.hpp"
#include "lesioncad/rng.hpp"

namespace lesioncad::synth {

namespace {

void require(bool ok, const std::string& field, const std::string& rule) {
    if (!ok) throw ConfigError(field + ": " + rule);
}

std::string class_key(LesionClass c) {
    return c == LesionClass::Metastasis ? std::string("Meta") : std::string(to_string(c));
}

std::string fmt_double(double v) { return format_double(v); }

}  // namespace

std::array<ClassSignature, kNumClasses> GenSpec::default_signatures() {
    // Offsets per sequence in order T1WI, T2WI, T1WI_A, T1WI_V, DWI.
    // HCC: arterial enhancement with venous washout.
    ClassSignature hcc;
    hcc.offsets = {{{-0.08, 0.04}, {0.10, 0.06}, {0.26, 0.12}, {-0.12, 0.08}, {0.12, 0.06}}};
    hcc.count_min = 1;
    hcc.count_max = 2;
    hcc.radius_min_mm = 7.0;
    hcc.radius_max_mm = 20.0;

    // ICC: moderate T2 signal, delayed-type venous enhancement.
    ClassSignature icc;
    icc.offsets = {{{-0.10, 0.04}, {0.18, 0.08}, {0.07, 0.08}, {0.15, 0.08}, {0.14, 0.06}}};
    icc.count_min = 1;
    icc.count_max = 1;
    icc.radius_min_mm = 9.0;
    icc.radius_max_mm = 22.0;

    // Metastasis: bright on T2 and DWI, several smaller lesions.
    ClassSignature meta;
    meta.offsets = {{{-0.10, 0.04}, {0.26, 0.08}, {0.05, 0.06}, {-0.02, 0.06}, {0.26, 0.08}}};
    meta.count_min = 2;
    meta.count_max = 4;
    meta.radius_min_mm = 3.5;
    meta.radius_max_mm = 13.0;
    return {hcc, icc, meta};
}

void GenSpec::validate() const {
    for (auto c : kAllClasses) {
        require(n_per_class[index_of(c)] >= 0, "n_per_class." + class_key(c), "must be nonnegative");
    }
    require(dims.nx > 0 && dims.ny > 0 && dims.nz > 0, "dims", "must be positive");
    require(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0, "spacing", "must be positive");
    require(noise_std >= 0.0 && std::isfinite(noise_std), "noise_std", "must be nonnegative");
    require(background_level >= 0.0 && background_level <= 1.0, "background_level", "must be in [0,1]");
    for (auto c : kAllClasses) {
        const auto& sig = signatures[index_of(c)];
        const std::string p = "signature." + class_key(c);
        require(sig.count_min >= 1 && sig.count_max >= sig.count_min, p + ".count", "need 1 <= min <= max");
        require(sig.radius_min_mm > 0 && sig.radius_max_mm >= sig.radius_min_mm, p + ".radius",
                "need 0 < min <= max");
        for (auto s : kAllSequences) {
            const auto& o = sig.offsets[index_of(s)];
            require(std::isfinite(o.mean) && std::isfinite(o.std) && o.std >= 0.0,
                    p + "." + std::string(to_string(s)), "offset must be finite with std >= 0");
        }
    }
}

bool Ellipsoid::contains(int x, int y, int z, const Spacing& s) const {
    const double dx = (x - cx) * s.sx / rx_mm;
    const double dy = (y - cy) * s.sy / ry_mm;
    const double dz = (z - cz) * s.sz / rz_mm;
    return dx * dx + dy * dy + dz * dz <= 1.0;
}

namespace {

struct VoxelRange {
    int lo, hi;
};

VoxelRange axis_range(double center, double radius_mm, double spacing, int n) {
    const double half = radius_mm / spacing;
    return {std::max(0, static_cast<int>(std::floor(center - half)) - 1),
            std::min(n - 1, static_cast<int>(std::ceil(center + half)) + 1)};
}

}  // namespace

std::vector<TruthBox> truth_boxes_for_lesion(const Ellipsoid& e, const Dims& dims, const Spacing& spacing) {
    std::vector<TruthBox> out;
    const auto xr = axis_range(e.cx, e.rx_mm, spacing.sx, dims.nx);
    const auto yr = axis_range(e.cy, e.ry_mm, spacing.sy, dims.ny);
    const auto zr = axis_range(e.cz, e.rz_mm, spacing.sz, dims.nz);
    for (int z = zr.lo; z <= zr.hi; ++z) {
        Box2D b{dims.nx, dims.ny, -1, -1};
        for (int y = yr.lo; y <= yr.hi; ++y) {
            for (int x = xr.lo; x <= xr.hi; ++x) {
                if (!e.contains(x, y, z, spacing)) continue;
                b.x0 = std::min(b.x0, x);
                b.y0 = std::min(b.y0, y);
                b.x1 = std::max(b.x1, x);
                b.y1 = std::max(b.y1, y);
            }
        }
        if (b.valid()) out.push_back({z, b});
    }
    return out;
}

std::vector<Lesion> sample_lesions(const GenSpec& spec, LesionClass cls, std::uint64_t study_seed) {
    const auto& sig = spec.signatures[index_of(cls)];
    Rng rng(study_seed);
    const int count = rng.uniform_int(sig.count_min, sig.count_max);
    std::vector<Lesion> lesions;
    lesions.reserve(static_cast<std::size_t>(count));
    const auto place = [&](double radius_mm, double spacing, int n) {
        const double half = radius_mm / spacing;
        const double lo = half + 1.0;
        const double hi = n - 2.0 - half;
        if (hi <= lo) return 0.5 * (n - 1);
        return rng.uniform(lo, hi);
    };
    for (int k = 0; k < count; ++k) {
        Lesion l;
        const double r = rng.uniform(sig.radius_min_mm, sig.radius_max_mm);
        l.shape.rx_mm = r * rng.uniform(0.85, 1.15);
        l.shape.ry_mm = r * rng.uniform(0.85, 1.15);
        l.shape.rz_mm = r * rng.uniform(0.8, 1.2);
        l.shape.cx = place(l.shape.rx_mm, spec.spacing.sx, spec.dims.nx);
        l.shape.cy = place(l.shape.ry_mm, spec.spacing.sy, spec.dims.ny);
        l.shape.cz = place(l.shape.rz_mm, spec.spacing.sz, spec.dims.nz);
        for (auto s : kAllSequences) {
            const auto& o = sig.offsets[index_of(s)];
            l.offsets[index_of(s)] = rng.normal(o.mean, o.std);
        }
        lesions.push_back(l);
    }
    return lesions;
}

Study render_study(const GenSpec& spec, std::string id, LesionClass cls, const std::vector<Lesion>& lesions,
                   std::uint64_t noise_seed) {
    const auto& d = spec.dims;
    Study study;
    study.id = std::move(id);
    study.truth_class = cls;

    // First lesion containing a voxel owns it.
    std::vector<int> owner(d.voxel_count(), -1);
    for (std::size_t k = 0; k < lesions.size(); ++k) {
        const auto& e = lesions[k].shape;
        const auto xr = axis_range(e.cx, e.rx_mm, spec.spacing.sx, d.nx);
        const auto yr = axis_range(e.cy, e.ry_mm, spec.spacing.sy, d.ny);
        const auto zr = axis_range(e.cz, e.rz_mm, spec.spacing.sz, d.nz);
        for (int z = zr.lo; z <= zr.hi; ++z)
            for (int y = yr.lo; y <= yr.hi; ++y)
                for (int x = xr.lo; x <= xr.hi; ++x) {
                    const auto i = static_cast<std::size_t>(x) +
                                   static_cast<std::size_t>(d.nx) * (static_cast<std::size_t>(y) +
                                                                     static_cast<std::size_t>(d.ny) * z);
                    if (owner[i] < 0 && e.contains(x, y, z, spec.spacing)) owner[i] = static_cast<int>(k);
                }
        auto boxes = truth_boxes_for_lesion(e, d, spec.spacing);
        study.truth_boxes.insert(study.truth_boxes.end(), boxes.begin(), boxes.end());
    }
    std::sort(study.truth_boxes.begin(), study.truth_boxes.end(),
              [](const TruthBox& a, const TruthBox& b) { return std::tie(a.z, a.box) < std::tie(b.z, b.box); });

    // Smooth radial "liver" background, dimmer toward the corners.
    const double hx = 0.5 * (d.nx - 1);
    const double hy = 0.5 * (d.ny - 1);
    std::vector<double> background(d.slice_size());
    for (int y = 0; y < d.ny; ++y)
        for (int x = 0; x < d.nx; ++x) {
            const double u = (x - hx) / (0.5 * d.nx);
            const double v = (y - hy) / (0.5 * d.ny);
            background[static_cast<std::size_t>(y) * d.nx + x] = spec.background_level * (1.0 - 0.2 * (u * u + v * v));
        }

    Rng noise(noise_seed);
    for (auto s : kAllSequences) {
        Volume vol(d, spec.spacing);
        for (std::size_t i = 0; i < vol.voxels.size(); ++i) {
            double value = background[i % d.slice_size()];
            if (owner[i] >= 0) value += lesions[static_cast<std::size_t>(owner[i])].offsets[index_of(s)];
            if (spec.noise_std > 0.0) value += spec.noise_std * noise.normal();
            vol.voxels[i] = static_cast<float>(std::clamp(value, 0.0, 1.0));
        }
        study.volumes[index_of(s)] = std::move(vol);
    }
    return study;
}

std::vector<Study> generate_cohort(const GenSpec& spec, int threads) {
    spec.validate();
    std::vector<LesionClass> labels;
    for (auto c : kAllClasses) labels.insert(labels.end(), static_cast<std::size_t>(spec.n_per_class[index_of(c)]), c);
    Rng order(derive_seed(spec.seed, "cohort", "labels"));
    order.shuffle(labels);

    std::vector<Study> cohort(labels.size());
    parallel_for(labels.size(), threads, [&](std::size_t i) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "study_%04zu", i);
        const std::string id = buf;
        const auto lesions = sample_lesions(spec, labels[i], derive_seed(spec.seed, id, "lesions"));
        cohort[i] = render_study(spec, id, labels[i], lesions, derive_seed(spec.seed, id, "noise"));
    });
    return cohort;
}

GenSpec genspec_from_text(std::string_view text) {
    GenSpec spec;
    const auto kv = parse_key_values(text);
    // Presets apply before individual keys.
    if (const auto it = kv.find("gen.preset"); it != kv.end()) {
        if (it->second == "moderate") spec.noise_std = kModerateNoise;
        else if (it->second == "hard") spec.noise_std = kHardNoise;
        else throw ConfigError("gen.preset: expected moderate or hard");
    }
    for (const auto& [key, value] : kv) {
        const std::string_view k = key;
        if (k == "gen.preset") continue;
        if (k == "gen.n_hcc") spec.n_per_class[0] = static_cast<int>(parse_int(k, value));
        else if (k == "gen.n_icc") spec.n_per_class[1] = static_cast<int>(parse_int(k, value));
        else if (k == "gen.n_meta") spec.n_per_class[2] = static_cast<int>(parse_int(k, value));
        else if (k == "gen.nx") spec.dims.nx = static_cast<int>(parse_int(k, value));
        else if (k == "gen.ny") spec.dims.ny = static_cast<int>(parse_int(k, value));
        else if (k == "gen.nz") spec.dims.nz = static_cast<int>(parse_int(k, value));
        else if (k == "gen.sx") spec.spacing.sx = parse_double(k, value);
        else if (k == "gen.sy") spec.spacing.sy = parse_double(k, value);
        else if (k == "gen.sz") spec.spacing.sz = parse_double(k, value);
        else if (k == "gen.noise_std") spec.noise_std = parse_double(k, value);
        else if (k == "gen.background_level") spec.background_level = parse_double(k, value);
        else if (k == "gen.seed") spec.seed = parse_u64(k, value);
        else if (k.starts_with("sig.")) {
            // sig.<CLASS>.<field> or sig.<CLASS>.<SEQ>.<mean|std>
            const auto rest = k.substr(4);
            const auto dot = rest.find('.');
            const auto cls = dot == std::string_view::npos ? std::nullopt : parse_lesion_class(rest.substr(0, dot));
            if (!cls) throw ConfigError("unknown key '" + key + "'");
            auto& sig = spec.signatures[index_of(*cls)];
            const auto field = rest.substr(dot + 1);
            if (field == "count_min") sig.count_min = static_cast<int>(parse_int(k, value));
            else if (field == "count_max") sig.count_max = static_cast<int>(parse_int(k, value));
            else if (field == "radius_min_mm") sig.radius_min_mm = parse_double(k, value);
            else if (field == "radius_max_mm") sig.radius_max_mm = parse_double(k, value);
            else {
                const auto d2 = field.find('.');
                const auto seq = d2 == std::string_view::npos ? std::nullopt : parse_sequence(field.substr(0, d2));
                if (!seq) throw ConfigError("unknown key '" + key + "'");
                const auto what = field.substr(d2 + 1);
                auto& off = sig.offsets[index_of(*seq)];
                if (what == "mean") off.mean = parse_double(k, value);
                else if (what == "std") off.std = parse_double(k, value);
                else throw ConfigError("unknown key '" + key + "'");
            }
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }
    spec.validate();
    return spec;
}

GenSpec load_genspec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read generator spec " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return genspec_from_text(ss.str());
}

std::string genspec_to_text(const GenSpec& spec) {
    std::ostringstream os;
    os << "gen.n_hcc = " << spec.n_per_class[0] << '\n'
       << "gen.n_icc = " << spec.n_per_class[1] << '\n'
       << "gen.n_meta = " << spec.n_per_class[2] << '\n'
       << "gen.nx = " << spec.dims.nx << '\n'
       << "gen.ny = " << spec.dims.ny << '\n'
       << "gen.nz = " << spec.dims.nz << '\n'
       << "gen.sx = " << fmt_double(spec.spacing.sx) << '\n'
       << "gen.sy = " << fmt_double(spec.spacing.sy) << '\n'
       << "gen.sz = " << fmt_double(spec.spacing.sz) << '\n'
       << "gen.noise_std = " << fmt_double(spec.noise_std) << '\n'
       << "gen.background_level = " << fmt_double(spec.background_level) << '\n'
       << "gen.seed = " << spec.seed << '\n';
    for (auto c : kAllClasses) {
        const auto& sig = spec.signatures[index_of(c)];
        const std::string p = "sig." + class_key(c) + ".";
        os << p << "count_min = " << sig.count_min << '\n'
           << p << "count_max = " << sig.count_max << '\n'
           << p << "radius_min_mm = " << fmt_double(sig.radius_min_mm) << '\n'
           << p << "radius_max_mm = " << fmt_double(sig.radius_max_mm) << '\n';
        for (auto s : kAllSequences) {
            const auto& o = sig.offsets[index_of(s)];
            os << p << to_string(s) << ".mean = " << fmt_double(o.mean) << '\n'
               << p << to_string(s) << ".std = " << fmt_double(o.std) << '\n';
        }
    }
    return os.str();
}

}  // namespace lesioncad::synth
