#include <doctest.h>

#include <algorithm>

#include "usfg/evaluation.hpp"
#include "usfg/postprocess.hpp"
#include "usfg/rng.hpp"

using namespace usfg;

namespace {

BinaryMask from_rows(const std::vector<std::string>& rows) {
    BinaryMask m;
    m.height = static_cast<int>(rows.size());
    m.width = static_cast<int>(rows[0].size());
    for (const auto& r : rows)
        for (char c : r) m.data.push_back(c == '#' ? 1 : 0);
    return m;
}

}  // namespace

TEST_CASE("threshold_mask is inclusive at the threshold") {
    SoftMask mask(3, 1);
    mask.data = {127, 128, 129};
    BinaryMask b = threshold_mask(mask, 128);
    CHECK(b.data == std::vector<uint8_t>{0, 1, 1});
    CHECK(threshold_mask(mask, 0).data == std::vector<uint8_t>{1, 1, 1});
    CHECK(threshold_mask(mask, 255).data == std::vector<uint8_t>{0, 0, 0});
}

TEST_CASE("connected_components finds simple blobs") {
    auto m = from_rows({
        "##..",
        "##..",
        "...#",
        "...#",
    });
    auto comps = connected_components(m);
    REQUIRE(comps.size() == 2);
    // Scan order: the top-left blob is first.
    CHECK(comps[0].area == 4);
    CHECK(comps[0].box == BoundingBox{0, 0, 2, 2});
    CHECK(comps[1].area == 2);
    CHECK(comps[1].box == BoundingBox{3, 2, 4, 4});
}

TEST_CASE("connected_components joins diagonal neighbours (8-connectivity)") {
    auto m = from_rows({
        "#..",
        ".#.",
        "..#",
    });
    auto comps = connected_components(m);
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].area == 3);
    CHECK(comps[0].box == BoundingBox{0, 0, 3, 3});

    // Anti-diagonal touch as well.
    auto m2 = from_rows({
        ".#",
        "#.",
    });
    CHECK(connected_components(m2).size() == 1);
}

TEST_CASE("connected_components handles a U shape merging late") {
    auto m = from_rows({
        "#.#",
        "#.#",
        "###",
    });
    auto comps = connected_components(m);
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].area == 7);
}

TEST_CASE("component areas partition the foreground") {
    Rng rng(202);
    for (int it = 0; it < 50; ++it) {
        int w = static_cast<int>(rng.next_int(1, 20));
        int h = static_cast<int>(rng.next_int(1, 20));
        BinaryMask m;
        m.width = w;
        m.height = h;
        int64_t fg = 0;
        for (int i = 0; i < w * h; ++i) {
            uint8_t v = rng.next_double() < 0.4 ? 1 : 0;
            fg += v;
            m.data.push_back(v);
        }
        auto comps = connected_components(m);
        int64_t total = 0;
        for (const auto& c : comps) {
            total += c.area;
            CHECK(c.box.valid());
            CHECK(c.box.x1 <= w);
            CHECK(c.box.y1 <= h);
            int64_t run_total = 0;
            for (const auto& r : c.runs) run_total += r.x1 - r.x0;
            CHECK(run_total == c.area);
            CHECK(c.area <= c.box.area());
        }
        CHECK(total == fg);
    }
}

TEST_CASE("empty and full masks behave at the extremes") {
    BinaryMask empty;
    empty.width = 4;
    empty.height = 3;
    empty.data.assign(12, 0);
    CHECK(connected_components(empty).empty());

    BinaryMask full = empty;
    full.data.assign(12, 1);
    auto comps = connected_components(full);
    REQUIRE(comps.size() == 1);
    CHECK(comps[0].area == 12);
    CHECK(comps[0].box == BoundingBox{0, 0, 4, 3});
}

TEST_CASE("fit_boxes recovers a centered square from a soft mask") {
    // 32x32 mask with a bright 8x8 square; original image 128x128, so the
    // ideal box is 32x32 centred at the same relative position.
    SoftMask mask(32, 32, 0);
    for (int y = 12; y < 20; ++y)
        for (int x = 12; x < 20; ++x) mask.at(x, y) = 230;
    auto boxes = fit_boxes(mask, 128, 128);
    REQUIRE(boxes.size() == 1);
    BoundingBox ideal{48, 48, 80, 80};
    CHECK(iou(boxes[0], ideal) >= 0.8);
}

TEST_CASE("fit_boxes ranks blobs by mean soft value and drops tiny ones") {
    SoftMask mask(32, 32, 0);
    // Dim blob, top-left; bright blob, bottom-right.
    for (int y = 2; y < 8; ++y)
        for (int x = 2; x < 8; ++x) mask.at(x, y) = 120;
    for (int y = 22; y < 28; ++y)
        for (int x = 22; x < 28; ++x) mask.at(x, y) = 240;
    // A 1-pixel speck that upsamples below the area floor.
    mask.at(16, 2) = 200;

    std::vector<Component> comps;
    auto boxes = fit_boxes(mask, 64, 64, {}, &comps);
    REQUIRE(boxes.size() == 2);
    CHECK(comps[0].mean_value > comps[1].mean_value);
    // The brighter blob leads and sits in the bottom-right quadrant.
    CHECK(boxes[0].x0 > 32);
    CHECK(boxes[0].y0 > 32);
    CHECK(boxes[1].x1 < 32);
}

TEST_CASE("fit_boxes on an all-zero mask yields nothing") {
    SoftMask mask(32, 32, 0);
    std::vector<Component> comps = {Component{}};
    CHECK(fit_boxes(mask, 100, 100, {}, &comps).empty());
    CHECK(comps.empty());
}

TEST_CASE("fit_boxes scales consistently with the original size") {
    SoftMask mask(32, 32, 0);
    for (int y = 8; y < 16; ++y)
        for (int x = 4; x < 12; ++x) mask.at(x, y) = 255;
    auto small = fit_boxes(mask, 64, 64);
    auto large = fit_boxes(mask, 128, 128);
    REQUIRE(small.size() == 1);
    REQUIRE(large.size() == 1);
    // Doubling the target size doubles the box, within a pixel of rounding.
    CHECK(std::abs(large[0].x0 - 2 * small[0].x0) <= 2);
    CHECK(std::abs(large[0].x1 - 2 * small[0].x1) <= 2);
    CHECK(std::abs(large[0].y0 - 2 * small[0].y0) <= 2);
    CHECK(std::abs(large[0].y1 - 2 * small[0].y1) <= 2);
}

TEST_CASE("fit_boxes threshold tracks the mask peak") {
    // A mask whose peak is well under 255 must still produce a box: the
    // threshold is relative to the peak, not absolute.
    SoftMask mask(32, 32, 0);
    for (int y = 10; y < 18; ++y)
        for (int x = 10; x < 18; ++x) mask.at(x, y) = 60;
    auto boxes = fit_boxes(mask, 96, 96);
    REQUIRE(boxes.size() == 1);
    CHECK(iou(boxes[0], BoundingBox{30, 30, 54, 54}) >= 0.8);
}
