#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "lesioncad/config.hpp"
#include "lesioncad/image.hpp"
#include "lesioncad/types.hpp"

namespace lesioncad::detect {

struct ScoredBox {
    Box2D box;
    double confidence = 0.0;
    SequenceKind source = SequenceKind::T2WI;
    int z = 0;

    friend bool operator==(const ScoredBox&, const ScoredBox&) = default;
};

struct DetectorInput {
    Image2D primary;
    // Co-located T2WI slice; absent for the T2WI detector itself.
    std::optional<Image2D> secondary;
    SequenceKind sequence = SequenceKind::T2WI;
    int z = 0;
};

// Canonical order (z, source, x0, y0, x1, y1, confidence).
void sort_boxes(std::vector<ScoredBox>& boxes);

// Blended DoG response for one slice (before median removal).
Image2D blended_response(const Image2D& primary_dog, const Image2D* secondary_dog, const DetectorParams& params);

// Hysteresis components of a response map; see DetectorParams.
std::vector<ScoredBox> boxes_from_response(const Image2D& response, const DetectorParams& params,
                                           SequenceKind source, int z);

std::vector<ScoredBox> detect_slice(const DetectorInput& input, const DetectorParams& params);

// All five sequences, every slice. Non-T2WI detectors get the T2WI slice as
// their secondary channel. Output is in canonical order.
std::vector<ScoredBox> detect_study(const Study& study, const std::array<DetectorParams, kNumSequences>& params);

// Pluggable study-level detector. Implementations must be deterministic and
// emit confidences in [0, 1].
class Detector {
public:
    virtual ~Detector() = default;
    virtual std::vector<ScoredBox> detect(const Study& study) const = 0;
    virtual std::string name() const = 0;
};

class ReferenceDetector final : public Detector {
public:
    explicit ReferenceDetector(std::array<DetectorParams, kNumSequences> params);
    std::vector<ScoredBox> detect(const Study& study) const override;
    std::string name() const override { return "reference-dog"; }

private:
    std::array<DetectorParams, kNumSequences> params_;
};

// Serves precomputed boxes, e.g. from an external CNN. Studies without rows
// yield no boxes.
class ReplayDetector final : public Detector {
public:
    explicit ReplayDetector(std::map<std::string, std::vector<ScoredBox>, std::less<>> boxes);
    // CSV header: study_id,sequence,z,x0,y0,x1,y1,confidence
    static ReplayDetector from_csv(std::istream& in);
    static ReplayDetector from_file(const std::string& path);

    std::vector<ScoredBox> detect(const Study& study) const override;
    std::string name() const override { return "replay"; }
    const auto& boxes() const { return boxes_; }

private:
    std::map<std::string, std::vector<ScoredBox>, std::less<>> boxes_;
};

void write_detections_csv(std::ostream& out, const std::vector<std::pair<std::string, std::vector<ScoredBox>>>& rows);

}  // namespace lesioncad::detect
