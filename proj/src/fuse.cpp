#include "lesioncad/fuse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>

#include "lesioncad/csv.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/image.hpp"

namespace lesioncad::fuse {

namespace {

// floor(num / den + 1/2) for den > 0.
std::int64_t round_half_up(std::int64_t num, std::int64_t den) {
    const std::int64_t n = 2 * num + den;
    const std::int64_t d = 2 * den;
    return n >= 0 ? n / d : -((-n + d - 1) / d);
}

}  // namespace

std::vector<ScoredBox> filter_boxes(const std::vector<ScoredBox>& boxes, double threshold) {
    std::vector<ScoredBox> out;
    std::copy_if(boxes.begin(), boxes.end(), std::back_inserter(out),
                 [threshold](const ScoredBox& b) { return b.confidence >= threshold; });
    return out;
}

std::optional<KeyRoi> fuse_slice(std::span<const ScoredBox> boxes, int nx, int ny) {
    if (boxes.empty()) return std::nullopt;
    const int z = boxes.front().z;
    for (const auto& b : boxes) {
        if (b.z != z) throw std::invalid_argument("fuse_slice: boxes from different slices");
        if (!b.box.valid() || b.box.x0 < 0 || b.box.y0 < 0 || b.box.x1 >= nx || b.box.y1 >= ny) {
            throw std::invalid_argument("fuse_slice: box outside slice bounds");
        }
    }

    std::vector<int> votes(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny), 0);
    for (const auto& b : boxes) {
        for (int y = b.box.y0; y <= b.box.y1; ++y)
            for (int x = b.box.x0; x <= b.box.x1; ++x) ++votes[static_cast<std::size_t>(y) * nx + x];
    }
    const int max_votes = *std::max_element(votes.begin(), votes.end());
    std::vector<unsigned char> mask(votes.size());
    for (std::size_t i = 0; i < votes.size(); ++i) mask[i] = votes[i] == max_votes ? 1 : 0;

    const auto regions = connected_components(mask, nx, ny);
    const Component* best = &regions.front();
    for (const auto& r : regions) {
        if (r.pixels.size() > best->pixels.size()) best = &r;
    }

    const auto n = static_cast<std::int64_t>(best->pixels.size());
    std::int64_t sum_x = 0;
    std::int64_t sum_y = 0;
    for (auto p : best->pixels) {
        sum_x += static_cast<std::int64_t>(p % nx);
        sum_y += static_cast<std::int64_t>(p / nx);
    }
    int wx = static_cast<int>(round_half_up(sum_x, n));
    int wy = static_cast<int>(round_half_up(sum_y, n));
    if (!mask[static_cast<std::size_t>(wy) * nx + wx]) {
        // Squared distance to the exact centroid, scaled by n^2 to stay integral.
        std::int64_t best_d = -1;
        for (auto p : best->pixels) {
            const std::int64_t dx = n * static_cast<std::int64_t>(p % nx) - sum_x;
            const std::int64_t dy = n * static_cast<std::int64_t>(p / nx) - sum_y;
            const std::int64_t d = dx * dx + dy * dy;
            if (best_d < 0 || d < best_d) {
                best_d = d;
                wx = static_cast<int>(p % nx);
                wy = static_cast<int>(p / nx);
            }
        }
    }

    std::vector<double> confs;
    std::int64_t sum_w = 0;
    std::int64_t sum_h = 0;
    for (const auto& b : boxes) {
        if (!b.box.contains(wx, wy)) continue;
        confs.push_back(b.confidence);
        sum_w += b.box.width();
        sum_h += b.box.height();
    }
    const auto k = static_cast<std::int64_t>(confs.size());
    // Sum in a canonical order so the result does not depend on input order.
    std::sort(confs.begin(), confs.end());
    double conf_sum = 0.0;
    for (double c : confs) conf_sum += c;

    const int w = static_cast<int>(round_half_up(sum_w, k));
    const int h = static_cast<int>(round_half_up(sum_h, k));
    KeyRoi roi;
    roi.z = z;
    roi.box.x0 = std::max(0, wx - (w - 1) / 2);
    roi.box.y0 = std::max(0, wy - (h - 1) / 2);
    roi.box.x1 = std::min(nx - 1, wx - (w - 1) / 2 + w - 1);
    roi.box.y1 = std::min(ny - 1, wy - (h - 1) / 2 + h - 1);
    roi.confidence = std::clamp(conf_sum / static_cast<double>(k), confs.front(), confs.back());
    roi.contributor_count = static_cast<int>(k);
    return roi;
}

std::size_t keep_count(std::size_t n, double keep_fraction) {
    if (n == 0) return 0;
    const auto k = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
    return std::clamp<std::size_t>(k, 1, n);
}

std::vector<KeyRoi> select_key_rois(std::vector<KeyRoi> rois, double keep_fraction) {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
        throw std::invalid_argument("select_key_rois: keep_fraction must be in (0,1]");
    }
    std::stable_sort(rois.begin(), rois.end(), [](const KeyRoi& a, const KeyRoi& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.z < b.z;
    });
    rois.resize(keep_count(rois.size(), keep_fraction));
    return rois;
}

std::vector<KeyRoi> localize_study(const Study& study, const std::vector<ScoredBox>& detections,
                                   double conf_threshold, double keep_fraction) {
    const Dims d = study.dims();
    std::map<int, std::vector<ScoredBox>> by_slice;
    for (const auto& b : filter_boxes(detections, conf_threshold)) by_slice[b.z].push_back(b);
    std::vector<KeyRoi> rois;
    for (const auto& [z, boxes] : by_slice) {
        if (auto roi = fuse_slice(boxes, d.nx, d.ny)) rois.push_back(*roi);
    }
    return select_key_rois(std::move(rois), keep_fraction);
}

void write_keyrois_csv(std::ostream& out, const std::vector<std::pair<std::string, std::vector<KeyRoi>>>& rows) {
    out << "study_id,z,x0,y0,x1,y1,confidence,contributors\n";
    for (const auto& [id, rois] : rows) {
        for (const auto& r : rois) {
            out << id << ',' << r.z << ',' << r.box.x0 << ',' << r.box.y0 << ',' << r.box.x1 << ',' << r.box.y1
                << ',' << format_double(r.confidence) << ',' << r.contributor_count << '\n';
        }
    }
}

std::vector<std::pair<std::string, std::vector<KeyRoi>>> read_keyrois_csv(std::istream& in) {
    static const std::vector<std::string> header = {"study_id", "z",  "x0",         "y0",
                                                    "x1",       "y1", "confidence", "contributors"};
    std::vector<std::pair<std::string, std::vector<KeyRoi>>> out;
    for (const auto& row : read_csv(in, header, "keyrois")) {
        KeyRoi r;
        r.z = static_cast<int>(csv_int(row, 1, "keyrois"));
        r.box = {static_cast<int>(csv_int(row, 2, "keyrois")), static_cast<int>(csv_int(row, 3, "keyrois")),
                 static_cast<int>(csv_int(row, 4, "keyrois")), static_cast<int>(csv_int(row, 5, "keyrois"))};
        r.confidence = csv_double(row, 6, "keyrois");
        r.contributor_count = static_cast<int>(csv_int(row, 7, "keyrois"));
        if (!r.box.valid()) throw IngestError("keyrois line " + std::to_string(row.line) + ": degenerate box");
        if (out.empty() || out.back().first != row.fields[0]) out.emplace_back(row.fields[0], std::vector<KeyRoi>{});
        out.back().second.push_back(r);
    }
    return out;
}

}  // namespace lesioncad::fuse
