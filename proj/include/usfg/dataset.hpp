#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "usfg/image.hpp"
#include "usfg/postprocess.hpp"
#include "usfg/rng.hpp"

namespace usfg {

// One (frame, mask) record persisted between pipeline stages.
struct DatasetEntry {
    std::string video_id;
    int64_t frame_index = 0;
    std::string image_path;
    std::string mask_path;
    std::optional<double> score;
    std::optional<BoundingBox> gt_box;
    std::optional<std::string> gt_mask_path;
    std::vector<BoundingBox> pred_boxes;  // populated by the `boxes` stage
    nlohmann::json extra;                 // unknown fields, preserved on round trip
};

struct TrainingExample {
    ChannelStack input;  // 128x128x7
    SoftMask target;     // 32x32
};

// Mean of the strictly positive mask values; 0 for an all-zero mask.
double score_mask(const SoftMask& mask);

// Descending score, ties by ascending (video_id, frame_index); keeps
// ceil(fraction * N). Nested: select_top(k1) subset of select_top(k2) for k1 <= k2.
std::vector<DatasetEntry> select_top(std::vector<DatasetEntry> entries, double fraction);

struct AugmentConfig {
    int scale_size = 160;
    int crop_size = 128;
    int target_size = 32;
    int n_random = 4;
};

// 1 deterministic center crop + n_random seeded random crops, as raw
// (crop_size image, target_size mask) pairs; this is the persisted form.
std::vector<std::pair<Image, SoftMask>> augment_crops(const Image& image, const SoftMask& mask,
                                                      Rng& rng, int n_random,
                                                      const AugmentConfig& cfg = {});

// Same crops converted to ready training examples.
std::vector<TrainingExample> augment(const Image& image, const SoftMask& mask, Rng& rng,
                                     int n_random, const AugmentConfig& cfg = {});

void write_manifest(const std::vector<DatasetEntry>& entries, const std::string& path);
std::vector<DatasetEntry> read_manifest(const std::string& path);

nlohmann::json entry_to_json(const DatasetEntry& e);
DatasetEntry entry_from_json(const nlohmann::json& j);

}  // namespace usfg
