#pragma once

#include <string>
#include <utility>
#include <vector>

#include "usfg/image.hpp"
#include "usfg/postprocess.hpp"

namespace usfg {

struct PixelMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double jaccard = 0.0;
};

struct EvalReport {
    std::string metric;
    double value = 0.0;
    size_t frames = 0;
    size_t skipped = 0;
    std::vector<std::string> warnings;
    std::string convention;  // echo of thresholds / aggregation conventions
    std::vector<std::pair<std::string, double>> details;

    std::string to_json() const;
};

// Integer-pixel intersection over union of two boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

// A frame counts as localized iff its first predicted box overlaps any ground
// truth box with IoU >= 0.5. Frames with empty ground truth are excluded.
EvalReport corloc(const std::vector<std::vector<BoundingBox>>& predictions,
                  const std::vector<std::vector<BoundingBox>>& ground_truth);

// Max over thresholds t in 0..255 of the per-frame-mean F-measure of the
// thresholded mask against the union of ground-truth box interiors.
// Masks must already be at frame resolution.
EvalReport max_f_measure(const std::vector<SoftMask>& masks,
                         const std::vector<std::vector<BoundingBox>>& gt_boxes);

PixelMetrics pixel_metrics(const BinaryMask& predicted, const BinaryMask& ground_truth);

}  // namespace usfg
