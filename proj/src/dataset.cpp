#include <algorithm>
#include <cmath>
#include <fstream>

#include "usfg/dataset.hpp"

namespace usfg {

double score_mask(const SoftMask& mask) {
    uint64_t sum = 0, count = 0;
    for (uint8_t v : mask.data) {
        if (v > 0) {
            sum += v;
            ++count;
        }
    }
    return count == 0 ? 0.0 : static_cast<double>(sum) / static_cast<double>(count);
}

std::vector<DatasetEntry> select_top(std::vector<DatasetEntry> entries, double fraction) {
    if (fraction <= 0.0 || fraction > 1.0)
        throw ArgumentError("select_top: fraction must be in (0, 1]");
    if (entries.empty()) return entries;
    for (const auto& e : entries)
        if (!e.score) throw ArgumentError("select_top: unscored entry " + e.video_id);

    std::sort(entries.begin(), entries.end(), [](const DatasetEntry& a, const DatasetEntry& b) {
        if (*a.score != *b.score) return *a.score > *b.score;
        if (a.video_id != b.video_id) return a.video_id < b.video_id;
        return a.frame_index < b.frame_index;
    });
    size_t keep = static_cast<size_t>(
        std::ceil(fraction * static_cast<double>(entries.size())));
    keep = std::min(keep, entries.size());
    entries.resize(keep);
    return entries;
}

std::vector<std::pair<Image, SoftMask>> augment_crops(const Image& image, const SoftMask& mask,
                                                      Rng& rng, int n_random,
                                                      const AugmentConfig& cfg) {
    if (image.channels != 3) throw ArgumentError("augment: expected 3-channel image");
    Image scaled = resize_bilinear(image, cfg.scale_size, cfg.scale_size);
    SoftMask scaled_mask = resize_bilinear(mask, cfg.scale_size, cfg.scale_size);
    const int max_off = cfg.scale_size - cfg.crop_size;

    auto crop_at = [&](int ox, int oy) {
        Image img_crop(cfg.crop_size, cfg.crop_size, 3);
        SoftMask mask_crop(cfg.crop_size, cfg.crop_size);
        for (int y = 0; y < cfg.crop_size; ++y) {
            for (int x = 0; x < cfg.crop_size; ++x) {
                for (int c = 0; c < 3; ++c)
                    img_crop.at(x, y, c) = scaled.at(x + ox, y + oy, c);
                mask_crop.at(x, y) = scaled_mask.at(x + ox, y + oy);
            }
        }
        return std::make_pair(std::move(img_crop),
                              resize_bilinear(mask_crop, cfg.target_size, cfg.target_size));
    };

    std::vector<std::pair<Image, SoftMask>> out;
    out.reserve(static_cast<size_t>(n_random) + 1);
    out.push_back(crop_at(max_off / 2, max_off / 2));
    for (int i = 0; i < n_random; ++i) {
        int ox = static_cast<int>(rng.next_int(0, max_off));
        int oy = static_cast<int>(rng.next_int(0, max_off));
        out.push_back(crop_at(ox, oy));
    }
    return out;
}

std::vector<TrainingExample> augment(const Image& image, const SoftMask& mask, Rng& rng,
                                     int n_random, const AugmentConfig& cfg) {
    auto crops = augment_crops(image, mask, rng, n_random, cfg);
    std::vector<TrainingExample> out;
    out.reserve(crops.size());
    for (auto& [img, target] : crops) {
        TrainingExample ex;
        ex.input = to_student_channels(img, cfg.crop_size);
        ex.target = std::move(target);
        out.push_back(std::move(ex));
    }
    return out;
}

nlohmann::json entry_to_json(const DatasetEntry& e) {
    nlohmann::json j = e.extra.is_object() ? e.extra : nlohmann::json::object();
    j["video_id"] = e.video_id;
    j["frame_index"] = e.frame_index;
    j["image_path"] = e.image_path;
    j["mask_path"] = e.mask_path;
    if (e.score) j["score"] = *e.score;
    if (e.gt_box) j["gt_box"] = {e.gt_box->x0, e.gt_box->y0, e.gt_box->x1, e.gt_box->y1};
    if (e.gt_mask_path) j["gt_mask_path"] = *e.gt_mask_path;
    if (!e.pred_boxes.empty()) {
        nlohmann::json boxes = nlohmann::json::array();
        for (const auto& b : e.pred_boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
        j["pred_boxes"] = boxes;
    }
    return j;
}

DatasetEntry entry_from_json(const nlohmann::json& j) {
    DatasetEntry e;
    e.video_id = j.at("video_id").get<std::string>();
    e.frame_index = j.at("frame_index").get<int64_t>();
    e.image_path = j.at("image_path").get<std::string>();
    e.mask_path = j.value("mask_path", std::string());
    if (j.contains("score")) e.score = j["score"].get<double>();
    if (j.contains("gt_box")) {
        const auto& b = j["gt_box"];
        e.gt_box = BoundingBox{b.at(0), b.at(1), b.at(2), b.at(3)};
    }
    if (j.contains("gt_mask_path")) e.gt_mask_path = j["gt_mask_path"].get<std::string>();
    if (j.contains("pred_boxes")) {
        for (const auto& b : j["pred_boxes"])
            e.pred_boxes.push_back(BoundingBox{b.at(0), b.at(1), b.at(2), b.at(3)});
    }
    // Keep everything we do not interpret so round trips are lossless.
    static const char* known[] = {"video_id", "frame_index", "image_path", "mask_path",
                                  "score",    "gt_box",      "gt_mask_path", "pred_boxes"};
    e.extra = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool is_known = false;
        for (const char* k : known)
            if (it.key() == k) is_known = true;
        if (!is_known) e.extra[it.key()] = it.value();
    }
    return e;
}

void write_manifest(const std::vector<DatasetEntry>& entries, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    for (const auto& e : entries) {
        // Shortest round-trip float representation keeps score sort order stable.
        f << entry_to_json(e).dump() << "\n";
    }
    if (!f) throw IoError("short write to " + path);
}

std::vector<DatasetEntry> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<DatasetEntry> entries;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            nlohmann::json j = nlohmann::json::parse(line);
            entries.push_back(entry_from_json(j));
        } catch (const std::exception& ex) {
            throw DecodeError("manifest " + path + " line " + std::to_string(line_no) +
                                  ": " + ex.what(),
                              line_no);
        }
    }
    return entries;
}

}  // namespace usfg
