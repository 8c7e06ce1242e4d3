#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lesioncad/types.hpp"

namespace lesioncad::io {

namespace fs = std::filesystem;

// Study directory layout:
//   <dir>/manifest.json   id, dims, spacing, class, sequence file names
//   <dir>/<SEQ>.raw       float32 little-endian, x fastest, one per sequence
//   <dir>/truth.json      ground-truth boxes per slice
void write_study(const Study& study, const fs::path& dir);
Study read_study(const fs::path& dir);

// One subdirectory per study, named by study id.
void write_cohort(std::span<const Study> cohort, const fs::path& out_dir);
// Reads every subdirectory holding a manifest.json, ordered by id. Studies
// failing validate_study raise IngestError.
std::vector<Study> read_cohort(const fs::path& data_dir, int threads = 1);

// Ids and classes from the study manifests only, ordered by id.
std::vector<std::pair<std::string, LesionClass>> read_cohort_labels(const fs::path& data_dir);

void write_raw_volume(const Volume& vol, const fs::path& path);
Volume read_raw_volume(const fs::path& path, Dims dims, Spacing spacing);

std::string read_text_file(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& content);

// 64-bit FNV-1a over ids, labels, truth boxes and voxel bytes.
std::uint64_t cohort_fingerprint(std::span<const Study> cohort);

}  // namespace lesioncad::io
