#include "lesioncad/types.hpp"

#include <cmath>
#include <stdexcept>

namespace lesioncad {

std::string_view to_string(LesionClass c) {
    switch (c) {
        case LesionClass::HCC: return "HCC";
        case LesionClass::ICC: return "ICC";
        case LesionClass::Metastasis: return "Metastasis";
    }
    return "?";
}

std::string_view to_string(SequenceKind s) {
    switch (s) {
        case SequenceKind::T1WI: return "T1WI";
        case SequenceKind::T2WI: return "T2WI";
        case SequenceKind::T1WI_A: return "T1WI_A";
        case SequenceKind::T1WI_V: return "T1WI_V";
        case SequenceKind::DWI: return "DWI";
    }
    return "?";
}

std::optional<LesionClass> parse_lesion_class(std::string_view text) {
    if (text == "HCC") return LesionClass::HCC;
    if (text == "ICC") return LesionClass::ICC;
    if (text == "Metastasis" || text == "Meta") return LesionClass::Metastasis;
    return std::nullopt;
}

std::optional<SequenceKind> parse_sequence(std::string_view text) {
    for (auto s : kAllSequences) {
        if (to_string(s) == text) return s;
    }
    return std::nullopt;
}

const Volume& Study::volume(SequenceKind s) const {
    const auto& v = volumes[index_of(s)];
    if (!v) throw std::out_of_range("study " + id + " has no " + std::string(to_string(s)) + " volume");
    return *v;
}

std::vector<std::string> validate_study(const Study& study) {
    std::vector<std::string> problems;
    if (study.id.empty()) problems.emplace_back("empty study id");

    std::optional<Dims> ref;
    for (auto s : kAllSequences) {
        const auto& v = study.volumes[index_of(s)];
        if (!v) {
            problems.push_back("missing sequence " + std::string(to_string(s)));
            continue;
        }
        const auto& d = v->dims;
        if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) {
            problems.push_back("non-positive dims on " + std::string(to_string(s)));
            continue;
        }
        if (v->voxels.size() != d.voxel_count()) {
            problems.push_back("voxel count mismatch on " + std::string(to_string(s)));
        }
        for (float f : v->voxels) {
            if (!std::isfinite(f)) {
                problems.push_back("non-finite intensity on " + std::string(to_string(s)));
                break;
            }
        }
        if (!ref) {
            ref = d;
        } else if (!(d == *ref)) {
            problems.push_back("dims mismatch on " + std::string(to_string(s)));
        }
    }

    if (study.truth_boxes.empty()) problems.emplace_back("truth_boxes empty");
    for (const auto& tb : study.truth_boxes) {
        if (!tb.box.valid()) {
            problems.emplace_back("degenerate box");
            continue;
        }
        if (ref && (tb.z < 0 || tb.z >= ref->nz || tb.box.x0 < 0 || tb.box.y0 < 0 ||
                    tb.box.x1 >= ref->nx || tb.box.y1 >= ref->ny)) {
            problems.emplace_back("truth box out of bounds");
        }
    }
    return problems;
}

}  // namespace lesioncad
