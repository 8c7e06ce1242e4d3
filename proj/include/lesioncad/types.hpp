#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lesioncad {

// Index order is fixed: probability vectors are indexed by this enum everywhere.
enum class LesionClass : std::uint8_t { HCC = 0, ICC = 1, Metastasis = 2 };
inline constexpr std::size_t kNumClasses = 3;
inline constexpr std::array<LesionClass, kNumClasses> kAllClasses = {
    LesionClass::HCC, LesionClass::ICC, LesionClass::Metastasis};

enum class SequenceKind : std::uint8_t { T1WI = 0, T2WI = 1, T1WI_A = 2, T1WI_V = 3, DWI = 4 };
inline constexpr std::size_t kNumSequences = 5;
inline constexpr std::array<SequenceKind, kNumSequences> kAllSequences = {
    SequenceKind::T1WI, SequenceKind::T2WI, SequenceKind::T1WI_A, SequenceKind::T1WI_V,
    SequenceKind::DWI};

using ClassProbs = std::array<double, kNumClasses>;

constexpr std::size_t index_of(LesionClass c) { return static_cast<std::size_t>(c); }
constexpr std::size_t index_of(SequenceKind s) { return static_cast<std::size_t>(s); }

std::string_view to_string(LesionClass c);
std::string_view to_string(SequenceKind s);
// Accepts the canonical names plus "Meta" as an alias for Metastasis.
std::optional<LesionClass> parse_lesion_class(std::string_view text);
std::optional<SequenceKind> parse_sequence(std::string_view text);

// Inclusive integer pixel bounds.
struct Box2D {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    constexpr int width() const { return x1 - x0 + 1; }
    constexpr int height() const { return y1 - y0 + 1; }
    constexpr long area() const { return static_cast<long>(width()) * height(); }
    constexpr bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    constexpr bool valid() const { return x0 <= x1 && y0 <= y1; }

    friend constexpr bool operator==(const Box2D&, const Box2D&) = default;
    friend constexpr auto operator<=>(const Box2D&, const Box2D&) = default;
};

struct Dims {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    constexpr std::size_t voxel_count() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) *
               static_cast<std::size_t>(nz);
    }
    constexpr std::size_t slice_size() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
    }
    friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

struct Spacing {
    double sx = 1.0;
    double sy = 1.0;
    double sz = 1.0;
    friend constexpr bool operator==(const Spacing&, const Spacing&) = default;
};

// Row-major, x fastest: index = x + nx * (y + ny * z).
struct Volume {
    Dims dims;
    Spacing spacing;
    std::vector<float> voxels;

    Volume() = default;
    Volume(Dims d, Spacing s) : dims(d), spacing(s), voxels(d.voxel_count(), 0.0f) {}

    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims.nx) *
                   (static_cast<std::size_t>(y) + static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(z));
    }
    float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
    float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
    const float* slice_data(int z) const { return voxels.data() + dims.slice_size() * static_cast<std::size_t>(z); }

    friend bool operator==(const Volume&, const Volume&) = default;
};

struct TruthBox {
    int z = 0;
    Box2D box;
    friend constexpr bool operator==(const TruthBox&, const TruthBox&) = default;
};

struct Study {
    std::string id;
    // Indexed by SequenceKind; an empty optional means the sequence is missing.
    std::array<std::optional<Volume>, kNumSequences> volumes;
    LesionClass truth_class = LesionClass::HCC;
    std::vector<TruthBox> truth_boxes;

    const Volume& volume(SequenceKind s) const;
    Dims dims() const { return volume(SequenceKind::T2WI).dims; }
    Spacing spacing() const { return volume(SequenceKind::T2WI).spacing; }

    friend bool operator==(const Study&, const Study&) = default;
};

// Empty result iff every structural invariant of the study holds.
std::vector<std::string> validate_study(const Study& study);

}  // namespace lesioncad
