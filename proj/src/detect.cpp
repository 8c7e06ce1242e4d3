#include "lesioncad/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <tuple>

#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"

namespace lesioncad::detect {

void sort_boxes(std::vector<ScoredBox>& boxes) {
    std::sort(boxes.begin(), boxes.end(), [](const ScoredBox& a, const ScoredBox& b) {
        return std::tie(a.z, a.source, a.box.x0, a.box.y0, a.box.x1, a.box.y1, a.confidence) <
               std::tie(b.z, b.source, b.box.x0, b.box.y0, b.box.x1, b.box.y1, b.confidence);
    });
}

Image2D blended_response(const Image2D& primary_dog, const Image2D* secondary_dog, const DetectorParams& params) {
    if (secondary_dog == nullptr) return primary_dog;
    if (!secondary_dog->same_shape(primary_dog)) throw std::invalid_argument("secondary slice shape mismatch");
    Image2D out = primary_dog;
    for (std::size_t i = 0; i < out.px.size(); ++i) {
        out.px[i] = params.w_primary * primary_dog.px[i] + params.w_secondary * secondary_dog->px[i];
    }
    return out;
}

std::vector<ScoredBox> boxes_from_response(const Image2D& response, const DetectorParams& params,
                                           SequenceKind source, int z) {
    if (response.px.empty()) return {};
    const double med = median_of(response.px);
    std::vector<double> r(response.px.size());
    std::vector<double> dev(response.px.size());
    double global_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] = response.px[i] - med;
        dev[i] = std::abs(r[i]);
        global_max = std::max(global_max, r[i]);
    }
    if (!(global_max > 0.0)) return {};

    const double robust_sigma = 1.4826 * median_of(std::move(dev));
    const double detect_level = std::max(params.response_threshold, params.noise_k * robust_sigma);
    if (!std::isfinite(detect_level) && detect_level > 0) return {};
    const double support_level = std::max(params.support_threshold, params.support_k * robust_sigma);

    std::vector<unsigned char> mask(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) mask[i] = r[i] >= support_level ? 1 : 0;

    std::vector<ScoredBox> out;
    for (const auto& comp : connected_components(mask, response.nx, response.ny)) {
        if (static_cast<long>(comp.pixels.size()) < params.min_area) continue;
        double peak = -std::numeric_limits<double>::infinity();
        for (auto p : comp.pixels) peak = std::max(peak, r[p]);
        if (peak < detect_level) continue;
        ScoredBox b;
        b.box = {comp.x0, comp.y0, comp.x1, comp.y1};
        b.confidence = std::clamp(peak / global_max, 0.0, 1.0);
        b.source = source;
        b.z = z;
        out.push_back(b);
    }
    sort_boxes(out);
    return out;
}

std::vector<ScoredBox> detect_slice(const DetectorInput& input, const DetectorParams& params) {
    params.validate();
    const Image2D primary = difference_of_gaussians(input.primary, params.dog_sigma_small, params.dog_sigma_large);
    if (input.secondary) {
        const Image2D secondary =
            difference_of_gaussians(*input.secondary, params.dog_sigma_small, params.dog_sigma_large);
        return boxes_from_response(blended_response(primary, &secondary, params), params, input.sequence, input.z);
    }
    return boxes_from_response(primary, params, input.sequence, input.z);
}

std::vector<ScoredBox> detect_study(const Study& study, const std::array<DetectorParams, kNumSequences>& params) {
    for (const auto& p : params) p.validate();
    const Dims d = study.dims();
    std::vector<ScoredBox> out;
    const auto& t2 = study.volume(SequenceKind::T2WI);
    const auto& t2_params = params[index_of(SequenceKind::T2WI)];
    for (int z = 0; z < d.nz; ++z) {
        const Image2D t2_slice = image_from_slice({t2.slice_data(z), d.slice_size()}, d.nx, d.ny);
        // The T2WI DoG is shared as the secondary channel whenever sigmas agree.
        const Image2D t2_dog = difference_of_gaussians(t2_slice, t2_params.dog_sigma_small, t2_params.dog_sigma_large);
        for (auto s : kAllSequences) {
            const auto& p = params[index_of(s)];
            if (s == SequenceKind::T2WI) {
                auto boxes = boxes_from_response(t2_dog, p, s, z);
                out.insert(out.end(), boxes.begin(), boxes.end());
                continue;
            }
            const auto& vol = study.volume(s);
            const Image2D slice = image_from_slice({vol.slice_data(z), d.slice_size()}, d.nx, d.ny);
            const Image2D dog = difference_of_gaussians(slice, p.dog_sigma_small, p.dog_sigma_large);
            const bool same_sigmas =
                p.dog_sigma_small == t2_params.dog_sigma_small && p.dog_sigma_large == t2_params.dog_sigma_large;
            const Image2D secondary =
                same_sigmas ? t2_dog : difference_of_gaussians(t2_slice, p.dog_sigma_small, p.dog_sigma_large);
            auto boxes = boxes_from_response(blended_response(dog, &secondary, p), p, s, z);
            out.insert(out.end(), boxes.begin(), boxes.end());
        }
    }
    sort_boxes(out);
    return out;
}

ReferenceDetector::ReferenceDetector(std::array<DetectorParams, kNumSequences> params) : params_(params) {
    for (const auto& p : params_) p.validate();
}

std::vector<ScoredBox> ReferenceDetector::detect(const Study& study) const { return detect_study(study, params_); }

ReplayDetector::ReplayDetector(std::map<std::string, std::vector<ScoredBox>, std::less<>> boxes)
    : boxes_(std::move(boxes)) {
    for (auto& [id, list] : boxes_) {
        for (const auto& b : list) {
            if (!(b.confidence >= 0.0 && b.confidence <= 1.0)) {
                throw IngestError("replay detections for " + id + ": confidence outside [0,1]");
            }
            if (!b.box.valid()) throw IngestError("replay detections for " + id + ": degenerate box");
        }
        sort_boxes(list);
    }
}

ReplayDetector ReplayDetector::from_csv(std::istream& in) {
    static const std::vector<std::string> header = {"study_id", "sequence", "z", "x0", "y0", "x1", "y1",
                                                    "confidence"};
    std::map<std::string, std::vector<ScoredBox>, std::less<>> boxes;
    for (const auto& row : read_csv(in, header, "detections")) {
        const auto seq = parse_sequence(row.fields[1]);
        if (!seq) throw IngestError("detections line " + std::to_string(row.line) + ": unknown sequence");
        ScoredBox b;
        b.source = *seq;
        b.z = static_cast<int>(csv_int(row, 2, "detections"));
        b.box = {static_cast<int>(csv_int(row, 3, "detections")), static_cast<int>(csv_int(row, 4, "detections")),
                 static_cast<int>(csv_int(row, 5, "detections")), static_cast<int>(csv_int(row, 6, "detections"))};
        b.confidence = csv_double(row, 7, "detections");
        boxes[row.fields[0]].push_back(b);
    }
    return ReplayDetector(std::move(boxes));
}

ReplayDetector ReplayDetector::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot read detections file " + path);
    return from_csv(in);
}

std::vector<ScoredBox> ReplayDetector::detect(const Study& study) const {
    const auto it = boxes_.find(study.id);
    if (it == boxes_.end()) return {};
    const Dims d = study.dims();
    for (const auto& b : it->second) {
        if (b.z < 0 || b.z >= d.nz || b.box.x0 < 0 || b.box.y0 < 0 || b.box.x1 >= d.nx || b.box.y1 >= d.ny) {
            throw IngestError("replay detection outside volume bounds for study " + study.id);
        }
    }
    return it->second;
}

void write_detections_csv(std::ostream& out, const std::vector<std::pair<std::string, std::vector<ScoredBox>>>& rows) {
    out << "study_id,sequence,z,x0,y0,x1,y1,confidence\n";
    for (const auto& [id, boxes] : rows) {
        for (const auto& b : boxes) {
            out << id << ',' << to_string(b.source) << ',' << b.z << ',' << b.box.x0 << ',' << b.box.y0 << ','
                << b.box.x1 << ',' << b.box.y1 << ',' << format_double(b.confidence) << '\n';
        }
    }
}

}  // namespace lesioncad::detect
