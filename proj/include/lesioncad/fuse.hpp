#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lesioncad/detect.hpp"
#include "lesioncad/types.hpp"

namespace lesioncad::fuse {

using detect::ScoredBox;

struct KeyRoi {
    int z = 0;
    Box2D box;
    double confidence = 0.0;
    int contributor_count = 0;

    int center_x() const { return box.x0 + (box.width() - 1) / 2; }
    int center_y() const { return box.y0 + (box.height() - 1) / 2; }
    friend bool operator==(const KeyRoi&, const KeyRoi&) = default;
};

// Keeps boxes with confidence >= threshold, preserving order.
std::vector<ScoredBox> filter_boxes(const std::vector<ScoredBox>& boxes, double threshold);

// Pixel-voting fusion of the boxes on one slice.
//
// Every box votes for each pixel it covers. Among the 8-connected regions of
// maximal vote, the largest wins (ties: the region whose first raster pixel
// comes first). Its centroid, rounded half-up, is the winner pixel; when the
// region is not convex enough to contain its own centroid, the region pixel
// nearest to the centroid is used instead (ties in raster order). Boxes
// covering the winner contribute: the fused box is centered on the winner
// with the rounded mean contributor width and height, clipped to the slice,
// and carries the mean contributor confidence.
std::optional<KeyRoi> fuse_slice(std::span<const ScoredBox> boxes, int nx, int ny);

// Number kept by select_key_rois: ceil(fraction * n), at least one when n > 0.
std::size_t keep_count(std::size_t n, double keep_fraction);

// Sorted by confidence descending (ties: lower z first), truncated to keep_count.
std::vector<KeyRoi> select_key_rois(std::vector<KeyRoi> rois, double keep_fraction);

// filter_boxes -> fuse_slice per slice -> select_key_rois. An empty result
// marks a localization failure.
std::vector<KeyRoi> localize_study(const Study& study, const std::vector<ScoredBox>& detections,
                                   double conf_threshold, double keep_fraction);

void write_keyrois_csv(std::ostream& out, const std::vector<std::pair<std::string, std::vector<KeyRoi>>>& rows);
std::vector<std::pair<std::string, std::vector<KeyRoi>>> read_keyrois_csv(std::istream& in);

}  // namespace lesioncad::fuse
