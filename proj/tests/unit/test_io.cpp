#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/io.hpp"
#include "lesioncad/synthgen.hpp"

using namespace lesioncad;
namespace fs = std::filesystem;

TEST_CASE("cohort round trip is bit exact") {
    synth::GenSpec spec;
    spec.n_per_class = {2, 1, 1};
    spec.dims = {20, 18, 6};
    const auto cohort = synth::generate_cohort(spec);
    const auto dir = testing::temp_dir("io_roundtrip");
    io::write_cohort(cohort, dir);

    std::size_t n_dirs = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_directory()) continue;
        ++n_dirs;
        std::size_t raw = 0, meta = 0;
        for (const auto& f : fs::directory_iterator(e.path())) {
            if (f.path().extension() == ".raw") {
                ++raw;
                CHECK(fs::file_size(f.path()) == 20u * 18u * 6u * 4u);
            } else {
                ++meta;
            }
        }
        CHECK(raw == 5);
        CHECK(meta == 2);
    }
    CHECK(n_dirs == 4);

    const auto back = io::read_cohort(dir, 2);
    REQUIRE(back.size() == cohort.size());
    for (std::size_t i = 0; i < cohort.size(); ++i) CHECK(back[i] == cohort[i]);
    CHECK(io::cohort_fingerprint(back) == io::cohort_fingerprint(cohort));

    const auto labels = io::read_cohort_labels(dir);
    REQUIRE(labels.size() == 4);
    CHECK(labels[0].first == "study_0000");
    CHECK(labels[0].second == cohort[0].truth_class);
}

TEST_CASE("raw volumes are little-endian float32, x fastest") {
    Volume v({3, 2, 1}, {1, 1, 1});
    for (std::size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(i) + 0.5f;
    const auto dir = testing::temp_dir("io_raw");
    io::write_raw_volume(v, dir / "v.raw");
    std::ifstream in(dir / "v.raw", std::ios::binary);
    unsigned char bytes[24];
    in.read(reinterpret_cast<char*>(bytes), 24);
    REQUIRE(in.gcount() == 24);
    // 1.5f = 0x3fc00000, stored at index 1 (x=1, y=0)
    CHECK(bytes[4] == 0x00);
    CHECK(bytes[5] == 0x00);
    CHECK(bytes[6] == 0xc0);
    CHECK(bytes[7] == 0x3f);
    CHECK(io::read_raw_volume(dir / "v.raw", v.dims, v.spacing) == v);
    CHECK_THROWS_AS(io::read_raw_volume(dir / "v.raw", {4, 2, 1}, v.spacing), IngestError);
}

TEST_CASE("ingest errors") {
    CHECK_THROWS_AS(io::read_cohort("/nonexistent/cohort"), IngestError);
    const auto dir = testing::temp_dir("io_bad");
    auto s = testing::flat_study("bad");
    s.truth_boxes.clear();
    io::write_study(s, dir / "bad");
    CHECK_THROWS_AS(io::read_cohort(dir), IngestError);

    const auto dir2 = testing::temp_dir("io_badjson");
    io::write_study(testing::flat_study("x"), dir2 / "x");
    io::write_text_file(dir2 / "x" / "truth.json", "{not json");
    CHECK_THROWS_AS(io::read_cohort(dir2), IngestError);

    const auto dir3 = testing::temp_dir("io_missing_raw");
    io::write_study(testing::flat_study("y"), dir3 / "y");
    fs::remove(dir3 / "y" / "DWI.raw");
    CHECK_THROWS_AS(io::read_cohort(dir3), IngestError);
}
