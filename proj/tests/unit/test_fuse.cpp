#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "fusion_oracle.hpp"
#include "helpers.hpp"
#include "lesioncad/errors.hpp"
#include "lesioncad/fuse.hpp"
#include "lesioncad/rng.hpp"

using namespace lesioncad;
using namespace lesioncad::fuse;

namespace {

ScoredBox sb(int x0, int y0, int x1, int y1, double c, int z = 0) {
    ScoredBox b;
    b.box = {x0, y0, x1, y1};
    b.confidence = c;
    b.z = z;
    return b;
}

KeyRoi kr(int z, double c) { return {z, {0, 0, 1, 1}, c, 1}; }

}  // namespace

TEST_CASE("filter_boxes keeps confidence >= threshold") {
    CHECK(filter_boxes({sb(0, 0, 1, 1, 0.45)}, 0.5).empty());
    CHECK(filter_boxes({sb(0, 0, 1, 1, 0.50)}, 0.5).size() == 1);
    const std::vector<ScoredBox> in{sb(0, 0, 1, 1, 0.1), sb(1, 1, 2, 2, 0.0), sb(2, 2, 3, 3, 0.9)};
    CHECK(filter_boxes(in, 0.0) == in);
    const auto kept = filter_boxes(in, 0.05);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0] == in[0]);
    CHECK(kept[1] == in[2]);
}

TEST_CASE("fuse_slice worked examples") {
    CHECK_FALSE(fuse_slice({}, 10, 10).has_value());

    const std::vector<ScoredBox> one{sb(1, 1, 5, 5, 0.8)};
    auto r = fuse_slice(one, 10, 10);
    REQUIRE(r);
    CHECK(r->box == Box2D{1, 1, 5, 5});
    CHECK(r->confidence == doctest::Approx(0.8));
    CHECK(r->contributor_count == 1);

    const std::vector<ScoredBox> ab{sb(1, 1, 5, 5, 0.8), sb(3, 3, 7, 7, 0.6)};
    r = fuse_slice(ab, 10, 10);
    REQUIRE(r);
    CHECK(r->box == Box2D{2, 2, 6, 6});
    CHECK(r->confidence == doctest::Approx(0.7));
    CHECK(r->contributor_count == 2);

    const std::vector<ScoredBox> disjoint{sb(0, 0, 2, 2, 0.9), sb(7, 7, 9, 9, 0.6)};
    r = fuse_slice(disjoint, 10, 10);
    REQUIRE(r);
    CHECK(r->center_x() == 1);
    CHECK(r->center_y() == 1);
    CHECK(r->box == Box2D{0, 0, 2, 2});
    CHECK(r->contributor_count == 1);
    CHECK(r->confidence == doctest::Approx(0.9));
}

TEST_CASE("fused box is clipped to the slice") {
    const std::vector<ScoredBox> boxes{sb(0, 0, 1, 1, 0.7), sb(0, 0, 7, 7, 0.7)};
    const auto r = fuse_slice(boxes, 8, 8);
    REQUIRE(r);
    // winner (1,1) -> rounded mean size 5 -> x0 = -1 clipped to 0
    CHECK(r->box == Box2D{0, 0, 3, 3});
}

TEST_CASE("centroid outside a concave region snaps to the nearest region pixel") {
    // An L-shaped max-vote region whose centroid is not one of its pixels.
    const std::vector<ScoredBox> boxes{sb(0, 0, 0, 4, 0.5), sb(0, 4, 4, 4, 0.5), sb(0, 0, 4, 4, 0.5)};
    const auto r = fuse_slice(boxes, 5, 5);
    const auto o = oracle::fuse_slice(boxes, 5, 5);
    CHECK(oracle::same_roi(r, o));
    REQUIRE(r);
    CHECK(r->contributor_count == 3);
}

TEST_CASE("fuse_slice matches the exhaustive voting oracle") {
    Rng rng(1234);
    int mismatches = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto c = oracle::random_slice_case(rng);
        if (!oracle::same_roi(fuse_slice(c.boxes, c.nx, c.ny), oracle::fuse_slice(c.boxes, c.nx, c.ny))) ++mismatches;
    }
    CHECK(mismatches == 0);
}

TEST_CASE("fusion invariants") {
    Rng rng(99);
    for (int i = 0; i < 300; ++i) {
        auto c = oracle::random_slice_case(rng);
        const auto r = fuse_slice(c.boxes, c.nx, c.ny);
        REQUIRE(r);
        int votes = 0;
        double lo = 1.0, hi = 0.0;
        for (const auto& b : c.boxes) {
            lo = std::min(lo, b.confidence);
            hi = std::max(hi, b.confidence);
        }
        CHECK(r->confidence >= lo - 1e-12);
        CHECK(r->confidence <= hi + 1e-12);
        CHECK(r->box.x0 >= 0);
        CHECK(r->box.y0 >= 0);
        CHECK(r->box.x1 < c.nx);
        CHECK(r->box.y1 < c.ny);
        CHECK(r->contributor_count >= 1);
        votes = r->contributor_count;
        CHECK(votes <= static_cast<int>(c.boxes.size()));

        auto shuffled = c.boxes;
        rng.shuffle(shuffled);
        const auto p = fuse_slice(shuffled, c.nx, c.ny);
        REQUIRE(p);
        CHECK(*p == *r);
    }
}

TEST_CASE("fuse_slice rejects mixed slices and out-of-bounds boxes") {
    CHECK_THROWS_AS(fuse_slice(std::vector<ScoredBox>{sb(0, 0, 1, 1, 0.5, 0), sb(0, 0, 1, 1, 0.5, 1)}, 4, 4),
                    std::invalid_argument);
    CHECK_THROWS_AS(fuse_slice(std::vector<ScoredBox>{sb(0, 0, 4, 1, 0.5)}, 4, 4), std::invalid_argument);
}

TEST_CASE("keep_count and select_key_rois") {
    CHECK(keep_count(10, 0.48) == 5);
    CHECK(keep_count(1, 0.48) == 1);
    CHECK(keep_count(0, 0.48) == 0);
    CHECK(keep_count(3, 0.48) == 2);
    CHECK(keep_count(25, 0.48) == 12);
    CHECK(keep_count(100, 0.48) == 48);
    for (std::size_t n = 1; n <= 200; ++n) {
        std::size_t prev = 0;
        for (int i = 1; i <= 100; ++i) {
            const double f = i / 100.0;
            const auto k = keep_count(n, f);
            CHECK(k == std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9))));
            CHECK(k >= prev);
            prev = k;
        }
    }

    CHECK(select_key_rois({}, 0.48).empty());
    const auto kept = select_key_rois({kr(0, 0.6), kr(1, 0.9), kr(2, 0.6), kr(3, 0.7)}, 0.5);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].z == 1);
    CHECK(kept[1].z == 3);
    const auto ties = select_key_rois({kr(5, 0.6), kr(2, 0.6), kr(4, 0.6)}, 0.48);
    REQUIRE(ties.size() == 2);
    CHECK(ties[0].z == 2);
    CHECK(ties[1].z == 4);
    CHECK_THROWS(select_key_rois({kr(0, 0.5)}, 0.0));
}

TEST_CASE("localize_study") {
    const auto s = testing::flat_study("s", 16, 16, 4);
    CHECK(localize_study(s, {sb(1, 1, 3, 3, 0.3, 0)}, 0.5, 0.48).empty());

    auto rois = localize_study(s, {sb(1, 1, 3, 3, 0.8, 2)}, 0.5, 0.48);
    REQUIRE(rois.size() == 1);
    CHECK(rois[0] == KeyRoi{2, {1, 1, 3, 3}, 0.8, 1});

    rois = localize_study(s, {sb(1, 1, 3, 3, 0.6, 0), sb(1, 1, 3, 3, 0.9, 1), sb(5, 5, 9, 9, 0.7, 3)}, 0.5, 0.48);
    REQUIRE(rois.size() == 2);
    CHECK(rois[0].z == 1);
    CHECK(rois[1].z == 3);
}

TEST_CASE("key ROI CSV round trip") {
    const std::vector<std::pair<std::string, std::vector<KeyRoi>>> rows{
        {"a", {{1, {0, 0, 2, 2}, 0.75, 2}, {3, {4, 4, 5, 6}, 0.1, 1}}}, {"b", {}}, {"c", {{0, {1, 1, 1, 1}, 1.0, 3}}}};
    std::ostringstream out;
    write_keyrois_csv(out, rows);
    CHECK(out.str().rfind("study_id,z,x0,y0,x1,y1,confidence,contributors\n", 0) == 0);
    std::istringstream in(out.str());
    auto back = read_keyrois_csv(in);
    std::erase_if(back, [](const auto& r) { return r.second.empty(); });
    REQUIRE(back.size() == 2);
    CHECK(back[0] == rows[0]);
    CHECK(back[1] == rows[2]);

    std::istringstream bad("study_id,z,x0,y0,x1,y1,confidence,contributors\na,0,0,0,1,1,0.5\n");
    CHECK_THROWS_AS(read_keyrois_csv(bad), IngestError);
}
