#include <doctest.h>

#include <algorithm>
#include <map>

#include "lesioncad/errors.hpp"
#include "lesioncad/eval.hpp"
#include "lesioncad/rng.hpp"
#include "lesioncad/synthgen.hpp"

using namespace lesioncad;
using namespace lesioncad::synth;

namespace {

// Tight per-slice bounds by scanning every voxel of the volume.
std::vector<TruthBox> brute_force_boxes(const Ellipsoid& e, const Dims& d, const Spacing& s) {
    std::vector<TruthBox> out;
    for (int z = 0; z < d.nz; ++z) {
        Box2D b{d.nx, d.ny, -1, -1};
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x)
                if (e.contains(x, y, z, s)) {
                    b.x0 = std::min(b.x0, x), b.y0 = std::min(b.y0, y);
                    b.x1 = std::max(b.x1, x), b.y1 = std::max(b.y1, y);
                }
        if (b.valid()) out.push_back({z, b});
    }
    return out;
}

GenSpec small_spec(int h, int i, int m) {
    GenSpec spec;
    spec.n_per_class = {h, i, m};
    spec.dims = {32, 32, 8};
    spec.signatures[0].radius_max_mm = 8;
    spec.signatures[1].radius_max_mm = 9;
    spec.signatures[2].radius_max_mm = 6;
    return spec;
}

}  // namespace

TEST_CASE("truth boxes of a sphere") {
    const Dims d{21, 21, 21};
    const Spacing s{1, 1, 1};
    const Ellipsoid e{10, 10, 10, 3, 3, 3};
    const auto boxes = truth_boxes_for_lesion(e, d, s);
    REQUIRE(boxes.size() == 7);
    CHECK(boxes.front().z == 7);
    CHECK(boxes.back().z == 13);
    int widest = -1, widest_z = -1;
    for (const auto& b : boxes)
        if (b.box.width() > widest) widest = b.box.width(), widest_z = b.z;
    CHECK(widest_z == 10);
    CHECK(boxes[3].box == Box2D{7, 7, 13, 13});
    CHECK(boxes == brute_force_boxes(e, d, s));
}

TEST_CASE("sub-voxel sphere gives one 1x1 box") {
    const auto boxes = truth_boxes_for_lesion({5, 5, 5, 0.5, 0.5, 0.5}, {11, 11, 11}, {1, 1, 1});
    REQUIRE(boxes.size() == 1);
    CHECK(boxes[0].z == 5);
    CHECK(boxes[0].box == Box2D{5, 5, 5, 5});
}

TEST_CASE("boxes are clipped at the volume edge") {
    const Dims d{12, 12, 6};
    const Spacing s{1, 1, 2};
    const Ellipsoid e{1, 10.5, 0.5, 4, 4, 3};
    const auto boxes = truth_boxes_for_lesion(e, d, s);
    REQUIRE(!boxes.empty());
    for (const auto& b : boxes) {
        CHECK(b.box.x0 >= 0);
        CHECK(b.box.y1 <= 11);
        CHECK(b.z >= 0);
    }
    CHECK(boxes == brute_force_boxes(e, d, s));
}

TEST_CASE("truth boxes match a brute-force voxel scan for random ellipsoids") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const Dims d{rng.uniform_int(4, 24), rng.uniform_int(4, 24), rng.uniform_int(1, 10)};
        const Spacing s{rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0), rng.uniform(1.0, 5.0)};
        const Ellipsoid e{rng.uniform(0, d.nx - 1), rng.uniform(0, d.ny - 1), rng.uniform(0, d.nz - 1),
                          rng.uniform(0.3, 9), rng.uniform(0.3, 9), rng.uniform(0.3, 12)};
        CHECK(truth_boxes_for_lesion(e, d, s) == brute_force_boxes(e, d, s));
    }
}

TEST_CASE("every lesion voxel lies in a truth box on its slice") {
    auto spec = small_spec(3, 3, 3);
    spec.noise_std = 0.0;
    for (auto c : kAllClasses) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto lesions = sample_lesions(spec, c, seed);
            const auto study = render_study(spec, "s", c, lesions, seed);
            for (const auto& l : lesions)
                for (int z = 0; z < spec.dims.nz; ++z)
                    for (int y = 0; y < spec.dims.ny; ++y)
                        for (int x = 0; x < spec.dims.nx; ++x) {
                            if (!l.shape.contains(x, y, z, spec.spacing)) continue;
                            const bool covered = std::any_of(study.truth_boxes.begin(), study.truth_boxes.end(),
                                                             [&](const TruthBox& t) { return t.z == z && t.box.contains(x, y); });
                            CHECK(covered);
                        }
        }
    }
}

TEST_CASE("cohort counts and validity") {
    CHECK(generate_cohort(small_spec(0, 0, 0)).empty());
    const auto cohort = generate_cohort(small_spec(20, 8, 11));
    REQUIRE(cohort.size() == 39);
    std::map<LesionClass, int> counts;
    for (const auto& s : cohort) {
        ++counts[s.truth_class];
        CHECK(validate_study(s).empty());
        for (auto k : kAllSequences)
            for (float v : s.volume(k).voxels) CHECK_UNARY(v >= 0.0f && v <= 1.0f);
    }
    CHECK(counts[LesionClass::HCC] == 20);
    CHECK(counts[LesionClass::ICC] == 8);
    CHECK(counts[LesionClass::Metastasis] == 11);
    CHECK(cohort.front().id == "study_0000");
}

TEST_CASE("cohorts depend only on spec and seed") {
    const auto spec = small_spec(3, 2, 2);
    const auto a = generate_cohort(spec, 1);
    const auto b = generate_cohort(spec, 4);
    CHECK(a == b);
    auto other = spec;
    other.seed = spec.seed + 1;
    CHECK_FALSE(generate_cohort(other) == a);
}

TEST_CASE("noise-free class signatures separate by mean lesion intensity") {
    auto spec = small_spec(1, 1, 1);
    spec.noise_std = 0.0;
    for (auto& sig : spec.signatures)
        for (auto& o : sig.offsets) o.std = 0.0;
    const auto cohort = generate_cohort(spec);
    // Offset of the brightest lesion voxel over background, per class, on T1WI_A and T2WI.
    std::map<LesionClass, std::pair<double, double>> seen;
    for (const auto& s : cohort) {
        const auto& t = s.truth_boxes[s.truth_boxes.size() / 2];
        const int cx = t.box.x0 + (t.box.width() - 1) / 2, cy = t.box.y0 + (t.box.height() - 1) / 2;
        const double a = s.volume(SequenceKind::T1WI_A).at(cx, cy, t.z) - s.volume(SequenceKind::T1WI).at(cx, cy, t.z);
        const double b = s.volume(SequenceKind::T2WI).at(cx, cy, t.z) - s.volume(SequenceKind::T1WI).at(cx, cy, t.z);
        seen[s.truth_class] = {a, b};
    }
    REQUIRE(seen.size() == 3);
    CHECK(seen[LesionClass::HCC].first > seen[LesionClass::ICC].first);
    CHECK(seen[LesionClass::HCC].first > seen[LesionClass::Metastasis].first);
    CHECK(seen[LesionClass::Metastasis].second > seen[LesionClass::ICC].second);
}

TEST_CASE("default cohort size strata") {
    GenSpec spec;  // 100/40/55, 64x64x24
    const auto cohort = generate_cohort(spec);
    const auto strata = eval::size_strata(cohort, 20.0);
    const double over = static_cast<double>(strata.over.size()) / static_cast<double>(cohort.size());
    CHECK(over >= 0.70);
    CHECK(over <= 0.90);
}

TEST_CASE("spec validation names the field") {
    GenSpec spec;
    spec.noise_std = -0.1;
    try {
        spec.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("noise_std") != std::string::npos);
    }
    spec = GenSpec{};
    spec.n_per_class[1] = -1;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = GenSpec{};
    spec.signatures[2].count_min = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = GenSpec{};
    spec.signatures[0].radius_min_mm = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("genspec text round trip and presets") {
    GenSpec spec;
    spec.seed = 123;
    spec.signatures[1].offsets[3] = {0.2, 0.01};
    CHECK(genspec_from_text(genspec_to_text(spec)) == spec);
    CHECK(genspec_from_text("gen.preset = hard\n").noise_std == kHardNoise);
    CHECK(genspec_from_text("gen.preset = hard\ngen.noise_std = 0.2\n").noise_std == 0.2);
    CHECK(genspec_from_text("sig.Meta.DWI.mean = 0.3\n").signatures[2].offsets[4].mean == 0.3);
    CHECK_THROWS_AS(genspec_from_text("gen.noise = 0.1\n"), ConfigError);
    CHECK_THROWS_AS(genspec_from_text("gen.noise_std = -1\n"), ConfigError);
    CHECK_THROWS_AS(genspec_from_text("gen.preset = extreme\n"), ConfigError);
}
