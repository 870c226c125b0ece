#include <algorithm>
#include <array>

#include <nlohmann/json.hpp>

#include "usfg/evaluation.hpp"

namespace usfg {

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["metric"] = metric;
    j["value"] = value;
    j["frames"] = frames;
    j["skipped"] = skipped;
    j["convention"] = convention;
    j["warnings"] = warnings;
    for (const auto& [k, v] : details) j["details"][k] = v;
    return j.dump(2);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    int64_t ix0 = std::max(a.x0, b.x0), iy0 = std::max(a.y0, b.y0);
    int64_t ix1 = std::min(a.x1, b.x1), iy1 = std::min(a.y1, b.y1);
    int64_t inter = std::max<int64_t>(0, ix1 - ix0) * std::max<int64_t>(0, iy1 - iy0);
    int64_t uni = a.area() + b.area() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

EvalReport corloc(const std::vector<std::vector<BoundingBox>>& predictions,
                  const std::vector<std::vector<BoundingBox>>& ground_truth) {
    EvalReport report;
    report.metric = "corloc";
    report.convention = "first predicted box vs any GT box, PASCAL IoU >= 0.5";
    size_t localized = 0, total = 0;
    for (size_t f = 0; f < ground_truth.size(); ++f) {
        if (ground_truth[f].empty()) {
            ++report.skipped;
            continue;
        }
        ++total;
        if (f >= predictions.size()) {
            report.warnings.push_back("frame " + std::to_string(f) +
                                      " missing from predictions; counted as not localized");
            continue;
        }
        if (predictions[f].empty()) continue;
        const BoundingBox& first = predictions[f].front();
        for (const BoundingBox& gt : ground_truth[f]) {
            if (iou(first, gt) >= 0.5) {
                ++localized;
                break;
            }
        }
    }
    report.frames = total;
    report.value = total == 0 ? 0.0 : static_cast<double>(localized) / total;
    return report;
}

EvalReport max_f_measure(const std::vector<SoftMask>& masks,
                         const std::vector<std::vector<BoundingBox>>& gt_boxes) {
    EvalReport report;
    report.metric = "max_f_measure";
    report.convention =
        "per-frame F at shared threshold t in 0..255 (pixel >= t), mean over frames, "
        "max over t; box interiors are the positive region";

    std::array<double, 256> f_sum{};
    size_t used = 0;
    for (size_t f = 0; f < masks.size(); ++f) {
        if (f >= gt_boxes.size() || gt_boxes[f].empty()) {
            ++report.skipped;
            continue;
        }
        const SoftMask& mask = masks[f];
        std::vector<uint8_t> inside(mask.data.size(), 0);
        for (const BoundingBox& b : gt_boxes[f]) {
            int x0 = std::clamp(b.x0, 0, mask.width), x1 = std::clamp(b.x1, 0, mask.width);
            int y0 = std::clamp(b.y0, 0, mask.height), y1 = std::clamp(b.y1, 0, mask.height);
            for (int y = y0; y < y1; ++y)
                std::fill(inside.begin() + static_cast<size_t>(y) * mask.width + x0,
                          inside.begin() + static_cast<size_t>(y) * mask.width + x1, 1);
        }
        int64_t pos_area = 0;
        std::array<int64_t, 256> hist_in{}, hist_all{};
        for (size_t p = 0; p < mask.data.size(); ++p) {
            ++hist_all[mask.data[p]];
            if (inside[p]) {
                ++hist_in[mask.data[p]];
                ++pos_area;
            }
        }
        if (pos_area == 0) {
            ++report.skipped;
            continue;
        }
        ++used;
        int64_t tp = 0, mask_count = 0;
        std::array<double, 256> f_frame{};
        for (int t = 255; t >= 0; --t) {
            tp += hist_in[t];
            mask_count += hist_all[t];
            double precision = mask_count == 0 ? 0.0 : static_cast<double>(tp) / mask_count;
            double recall = static_cast<double>(tp) / pos_area;
            f_frame[t] =
                (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
        }
        for (int t = 0; t < 256; ++t) f_sum[t] += f_frame[t];
    }
    report.frames = used;
    if (used > 0) {
        double best = 0.0;
        for (int t = 0; t < 256; ++t) best = std::max(best, f_sum[t] / used);
        report.value = best;
    }
    return report;
}

PixelMetrics pixel_metrics(const BinaryMask& predicted, const BinaryMask& ground_truth) {
    if (predicted.width != ground_truth.width || predicted.height != ground_truth.height)
        throw ArgumentError("pixel_metrics: dimension mismatch");
    size_t n = predicted.data.size();
    if (n == 0) throw ArgumentError("pixel_metrics: empty image");
    int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < n; ++i) {
        bool p = predicted.data[i] != 0, g = ground_truth.data[i] != 0;
        if (p && g) ++tp;
        else if (p) ++fp;
        else if (g) ++fn;
        else ++tn;
    }
    PixelMetrics m;
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(n);
    m.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    m.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    m.jaccard = (tp + fp + fn) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp + fn);
    return m;
}

}  // namespace usfg
