#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "usfg/cli.hpp"
#include "usfg/dataset.hpp"
#include "usfg/synthvideo.hpp"

using namespace usfg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& rel = "") const { return (path / rel).string(); }
};

nlohmann::json read_json(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    return nlohmann::json::parse(f);
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST_CASE("cli rejects unknown flags and offers help") {
    CHECK(cli::run({"--definitely-not-a-flag"}) == 1);
    CHECK(cli::run({"frobnicate"}) == 1);
    CHECK(cli::run({"--help"}) == 0);
    CHECK(cli::run({"synth"}) == 1);  // missing required options
    CHECK(cli::run({"eval", "--manifest", "/nonexistent.jsonl", "--metric", "maxf"}) == 1);
}

TEST_CASE("cli synth writes a corpus and is deterministic") {
    TempDir tmp("usfg_cli_synth");
    std::vector<std::string> args = {
        "synth", "--out-dir", tmp.str("a"), "--manifest", tmp.str("a.jsonl"),
        "--seed", "3", "--synth.videos", "2", "--synth.frames", "4",
        "--synth.frame-size", "48",
    };
    REQUIRE(cli::run(args) == 0);
    auto entries = read_manifest(tmp.str("a.jsonl"));
    CHECK(entries.size() == 8);
    for (const auto& e : entries) {
        CHECK(fs::exists(e.image_path));
        CHECK(e.gt_box.has_value());
    }

    args[2] = tmp.str("b");
    args[4] = tmp.str("b.jsonl");
    REQUIRE(cli::run(args) == 0);
    auto again = read_manifest(tmp.str("b.jsonl"));
    REQUIRE(again.size() == entries.size());
    for (size_t i = 0; i < entries.size(); ++i)
        CHECK(slurp(entries[i].image_path) ==
              slurp(again[i].image_path));  // frames identical bit for bit
}

TEST_CASE("cli select with keep-fraction 1 is an identity on the entry set") {
    TempDir tmp("usfg_cli_select");
    // Build a manifest with real mask files so scoring has something to read.
    std::vector<DatasetEntry> entries;
    for (int i = 0; i < 4; ++i) {
        SoftMask m(8, 8, static_cast<uint8_t>(50 + 50 * i));
        std::string mask_path = tmp.str("m" + std::to_string(i) + ".pgm");
        write_mask(mask_path, m);
        DatasetEntry e;
        e.video_id = "v" + std::to_string(i % 2);
        e.frame_index = i;
        e.image_path = tmp.str("img.ppm");
        e.mask_path = mask_path;
        entries.push_back(std::move(e));
    }
    write_manifest(entries, tmp.str("in.jsonl"));

    REQUIRE(cli::run({"select", "--manifest", tmp.str("in.jsonl"), "--out-manifest",
                      tmp.str("out.jsonl"), "--keep-fraction", "1.0"}) == 0);
    auto out = read_manifest(tmp.str("out.jsonl"));
    REQUIRE(out.size() == 4);
    // Sorted by descending score: the brightest mask (i=3) leads.
    CHECK(out[0].frame_index == 3);
    CHECK(out[0].score == doctest::Approx(200.0));

    // Running the same selection again yields a byte-identical manifest.
    REQUIRE(cli::run({"select", "--manifest", tmp.str("in.jsonl"), "--out-manifest",
                      tmp.str("out2.jsonl"), "--keep-fraction", "1.0"}) == 0);
    CHECK(slurp(tmp.str("out.jsonl")) == slurp(tmp.str("out2.jsonl")));

    // keep-fraction 0.5 keeps the top two.
    REQUIRE(cli::run({"select", "--manifest", tmp.str("in.jsonl"), "--out-manifest",
                      tmp.str("half.jsonl"), "--keep-fraction", "0.5"}) == 0);
    CHECK(read_manifest(tmp.str("half.jsonl")).size() == 2);
}

TEST_CASE("cli eval scores perfect predictions as 1.0") {
    TempDir tmp("usfg_cli_eval");
    // corloc: predictions equal to ground truth.
    std::vector<DatasetEntry> entries;
    for (int i = 0; i < 3; ++i) {
        DatasetEntry e;
        e.video_id = "v";
        e.frame_index = i;
        e.image_path = tmp.str("f.ppm");
        e.mask_path = tmp.str("m.pgm");
        e.gt_box = BoundingBox{4 + i, 4, 20 + i, 20};
        e.pred_boxes = {*e.gt_box};
        entries.push_back(std::move(e));
    }
    write_manifest(entries, tmp.str("pred.jsonl"));
    REQUIRE(cli::run({"eval", "--manifest", tmp.str("pred.jsonl"), "--metric", "corloc",
                      "--report", tmp.str("corloc.json")}) == 0);
    auto rep = read_json(tmp.str("corloc.json"));
    CHECK(rep["metric"] == "corloc");
    CHECK(rep["value"] == 1.0);
    CHECK(rep["frames"] == 3);

    // maxf: the mask equals the ground-truth box interior exactly.
    Image frame(32, 32, 3, 10);
    write_image(tmp.str("f.ppm"), frame);
    for (auto& e : entries) {
        SoftMask m(32, 32, 0);
        for (int y = e.gt_box->y0; y < e.gt_box->y1; ++y)
            for (int x = e.gt_box->x0; x < e.gt_box->x1; ++x) m.at(x, y) = 255;
        std::string mp = tmp.str("m" + std::to_string(e.frame_index) + ".pgm");
        write_mask(mp, m);
        e.mask_path = mp;
    }
    write_manifest(entries, tmp.str("maxf.jsonl"));
    REQUIRE(cli::run({"eval", "--manifest", tmp.str("maxf.jsonl"), "--metric", "maxf",
                      "--report", tmp.str("maxf.json")}) == 0);
    CHECK(read_json(tmp.str("maxf.json"))["value"] == 1.0);

    // pixel: prediction equals the ground-truth mask.
    for (auto& e : entries) {
        e.gt_mask_path = e.mask_path;
    }
    write_manifest(entries, tmp.str("pixel.jsonl"));
    REQUIRE(cli::run({"eval", "--manifest", tmp.str("pixel.jsonl"), "--metric", "pixel",
                      "--report", tmp.str("pixel.json")}) == 0);
    auto px = read_json(tmp.str("pixel.json"));
    CHECK(px["value"] == 1.0);  // mean Jaccard
}

TEST_CASE("cli boxes populates predictions from masks") {
    TempDir tmp("usfg_cli_boxes");
    Image frame(64, 64, 3, 0);
    write_image(tmp.str("f.ppm"), frame);
    SoftMask m(32, 32, 0);
    for (int y = 8; y < 16; ++y)
        for (int x = 8; x < 16; ++x) m.at(x, y) = 250;
    write_mask(tmp.str("m.pgm"), m);

    DatasetEntry e;
    e.video_id = "v";
    e.frame_index = 0;
    e.image_path = tmp.str("f.ppm");
    e.mask_path = tmp.str("m.pgm");
    write_manifest({e}, tmp.str("in.jsonl"));

    REQUIRE(cli::run({"boxes", "--manifest", tmp.str("in.jsonl"), "--out-manifest",
                      tmp.str("out.jsonl")}) == 0);
    auto out = read_manifest(tmp.str("out.jsonl"));
    REQUIRE(out.size() == 1);
    REQUIRE(!out[0].pred_boxes.empty());
    const auto& b = out[0].pred_boxes[0];
    // The 8..16 block of a 32-wide mask maps to roughly 16..32 at size 64.
    CHECK(b.x0 > 8);
    CHECK(b.x1 < 40);
    CHECK(b.area() > 100);
}

TEST_CASE("cli teach emits masks for a small corpus") {
    TempDir tmp("usfg_cli_teach");
    REQUIRE(cli::run({"synth", "--out-dir", tmp.str("corpus"), "--manifest",
                      tmp.str("corpus.jsonl"), "--seed", "11", "--synth.videos", "1",
                      "--synth.frames", "8", "--synth.frame-size", "48"}) == 0);
    REQUIRE(cli::run({"teach", "--manifest", tmp.str("corpus.jsonl"), "--masks-dir",
                      tmp.str("masks"), "--out-manifest", tmp.str("teach.jsonl"),
                      "--teacher.work-size", "32", "--teacher.k", "4"}) == 0);
    auto out = read_manifest(tmp.str("teach.jsonl"));
    REQUIRE(out.size() == 8);
    for (const auto& e : out) {
        CHECK(fs::exists(e.mask_path));
        SoftMask m = read_mask(e.mask_path);
        CHECK(m.width == 32);
        CHECK(m.height == 32);
    }
}
