#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lesioncad/types.hpp"

namespace lesioncad::synth {

// Noise presets. "hard" is the setting used to exercise localization failures.
inline constexpr double kModerateNoise = 0.04;
inline constexpr double kHardNoise = 0.10;

struct OffsetStat {
    double mean = 0.0;
    double std = 0.0;
    friend bool operator==(const OffsetStat&, const OffsetStat&) = default;
};

// Lesion appearance for one class. Offsets are relative to the local background.
struct ClassSignature {
    std::array<OffsetStat, kNumSequences> offsets{};
    int count_min = 1;
    int count_max = 1;
    double radius_min_mm = 5.0;
    double radius_max_mm = 10.0;

    friend bool operator==(const ClassSignature&, const ClassSignature&) = default;
};

struct GenSpec {
    std::array<int, kNumClasses> n_per_class{100, 40, 55};
    Dims dims{64, 64, 24};
    Spacing spacing{1.0, 1.0, 4.0};
    double noise_std = kModerateNoise;
    double background_level = 0.4;
    std::array<ClassSignature, kNumClasses> signatures = default_signatures();
    std::uint64_t seed = 7;

    // Throws ConfigError naming the offending field.
    void validate() const;

    static std::array<ClassSignature, kNumClasses> default_signatures();
    friend bool operator==(const GenSpec&, const GenSpec&) = default;
};

// Semi-axes in mm, center in voxel coordinates.
struct Ellipsoid {
    double cx = 0.0, cy = 0.0, cz = 0.0;
    double rx_mm = 1.0, ry_mm = 1.0, rz_mm = 1.0;

    bool contains(int x, int y, int z, const Spacing& s) const;
};

// One tight box per slice that intersects the ellipsoid, clipped to the volume.
std::vector<TruthBox> truth_boxes_for_lesion(const Ellipsoid& e, const Dims& dims, const Spacing& spacing);

struct Lesion {
    Ellipsoid shape;
    std::array<double, kNumSequences> offsets{};
};

// Study ids are "study_NNNN". Class order is shuffled by the seed.
std::vector<Study> generate_cohort(const GenSpec& spec, int threads = 1);

// The lesion layout generate_cohort uses for study `index` of class `cls`.
std::vector<Lesion> sample_lesions(const GenSpec& spec, LesionClass cls, std::uint64_t study_seed);

Study render_study(const GenSpec& spec, std::string id, LesionClass cls, const std::vector<Lesion>& lesions,
                   std::uint64_t noise_seed);

// Same flat key-value format as pipeline configs, keys under "gen." and "sig.".
GenSpec genspec_from_text(std::string_view text);
GenSpec load_genspec(const std::string& path);
std::string genspec_to_text(const GenSpec& spec);

}  // namespace lesioncad::synth
