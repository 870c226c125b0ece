#pragma once

#include <cstdint>
#include <vector>

#include "usfg/image.hpp"

namespace usfg {

// Half-open pixel box: [x0, x1) x [y0, y1).
struct BoundingBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    int64_t area() const { return static_cast<int64_t>(x1 - x0) * (y1 - y0); }
    bool valid() const { return x1 > x0 && y1 > y0 && x0 >= 0 && y0 >= 0; }
    bool operator==(const BoundingBox&) const = default;
};

// Horizontal run of foreground pixels: [x0, x1) on row y.
struct PixelRun {
    int y = 0, x0 = 0, x1 = 0;
};

struct Component {
    std::vector<PixelRun> runs;
    int64_t area = 0;
    BoundingBox box;
    double mean_value = 0.0;  // mean soft value over the component, set by fit_boxes
};

struct BinaryMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;  // 0 or 1

    bool at(int x, int y) const { return data[static_cast<size_t>(y) * width + x] != 0; }
};

// Pixel is foreground iff value >= threshold.
BinaryMask threshold_mask(const SoftMask& mask, int threshold);

// 8-connectivity, deterministic order by first pixel in scan order.
std::vector<Component> connected_components(const BinaryMask& mask);

struct BoxConfig {
    double threshold_rel = 0.5;   // threshold = threshold_rel * max(mask)
    double min_area_frac = 0.01;  // of original image area
};

// Upsample a 32x32 soft mask to the original size, threshold relative to its
// max, drop small components and fit tight boxes, ordered by descending
// component mean soft value. All-zero mask yields an empty list.
std::vector<BoundingBox> fit_boxes(const SoftMask& mask, int original_w, int original_h,
                                   const BoxConfig& cfg = {},
                                   std::vector<Component>* components_out = nullptr);

}  // namespace usfg
