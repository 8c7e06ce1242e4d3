#pragma once

#include <filesystem>
#include <string>

#include "lesioncad/types.hpp"

namespace testing {

inline std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::path(LESIONCAD_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Five constant volumes and one truth box in the middle.
inline lesioncad::Study flat_study(const std::string& id, int nx = 16, int ny = 16, int nz = 4, float value = 0.5f) {
    lesioncad::Study s;
    s.id = id;
    for (auto k : lesioncad::kAllSequences) {
        lesioncad::Volume v({nx, ny, nz}, {1.0, 1.0, 4.0});
        std::fill(v.voxels.begin(), v.voxels.end(), value);
        s.volumes[lesioncad::index_of(k)] = v;
    }
    s.truth_boxes.push_back({nz / 2, {nx / 4, ny / 4, nx / 2, ny / 2}});
    return s;
}

}  // namespace testing
