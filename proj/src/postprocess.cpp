#include <algorithm>
#include <cmath>
#include <numeric>

#include "usfg/postprocess.hpp"

namespace usfg {

BinaryMask threshold_mask(const SoftMask& mask, int threshold) {
    BinaryMask out;
    out.width = mask.width;
    out.height = mask.height;
    out.data.resize(mask.data.size());
    for (size_t i = 0; i < mask.data.size(); ++i)
        out.data[i] = mask.data[i] >= threshold ? 1 : 0;
    return out;
}

namespace {

struct UnionFind {
    std::vector<int> parent;

    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }

    // Smaller root wins so labels stay in first-seen scan order.
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (a < b) parent[b] = a;
        else parent[a] = b;
    }
};

}  // namespace

std::vector<Component> connected_components(const BinaryMask& mask) {
    const int w = mask.width, h = mask.height;

    // Row runs first, then union runs that touch under 8-connectivity.
    std::vector<PixelRun> runs;
    std::vector<size_t> row_start(h + 1, 0);
    for (int y = 0; y < h; ++y) {
        row_start[y] = runs.size();
        int x = 0;
        while (x < w) {
            if (!mask.at(x, y)) {
                ++x;
                continue;
            }
            int x0 = x;
            while (x < w && mask.at(x, y)) ++x;
            runs.push_back({y, x0, x});
        }
    }
    row_start[h] = runs.size();

    UnionFind uf(static_cast<int>(runs.size()));
    for (int y = 1; y < h; ++y) {
        size_t a = row_start[y - 1], a_end = row_start[y];
        size_t b = row_start[y], b_end = row_start[y + 1];
        while (a < a_end && b < b_end) {
            // 8-connectivity: runs touch if they overlap when widened by 1.
            if (runs[a].x1 + 1 > runs[b].x0 && runs[b].x1 + 1 > runs[a].x0)
                uf.unite(static_cast<int>(a), static_cast<int>(b));
            if (runs[a].x1 < runs[b].x1) ++a;
            else ++b;
        }
    }

    std::vector<int> root_to_comp(runs.size(), -1);
    std::vector<Component> comps;
    for (size_t r = 0; r < runs.size(); ++r) {
        int root = uf.find(static_cast<int>(r));
        if (root_to_comp[root] < 0) {
            root_to_comp[root] = static_cast<int>(comps.size());
            comps.emplace_back();
            comps.back().box = {runs[r].x0, runs[r].y, runs[r].x1, runs[r].y + 1};
        }
        Component& c = comps[root_to_comp[root]];
        c.runs.push_back(runs[r]);
        c.area += runs[r].x1 - runs[r].x0;
        c.box.x0 = std::min(c.box.x0, runs[r].x0);
        c.box.x1 = std::max(c.box.x1, runs[r].x1);
        c.box.y0 = std::min(c.box.y0, runs[r].y);
        c.box.y1 = std::max(c.box.y1, runs[r].y + 1);
    }
    return comps;
}

std::vector<BoundingBox> fit_boxes(const SoftMask& mask, int original_w, int original_h,
                                   const BoxConfig& cfg,
                                   std::vector<Component>* components_out) {
    SoftMask up = resize_bilinear(mask, original_w, original_h);
    uint8_t peak = *std::max_element(up.data.begin(), up.data.end());
    if (peak == 0) {
        if (components_out) components_out->clear();
        return {};
    }
    int threshold = std::max(1, static_cast<int>(std::lround(cfg.threshold_rel * peak)));
    BinaryMask binary = threshold_mask(up, threshold);
    std::vector<Component> comps = connected_components(binary);

    int64_t min_area = static_cast<int64_t>(cfg.min_area_frac * original_w * original_h);
    std::erase_if(comps, [&](const Component& c) { return c.area < min_area; });

    for (Component& c : comps) {
        double sum = 0.0;
        for (const PixelRun& run : c.runs)
            for (int x = run.x0; x < run.x1; ++x) sum += up.at(x, run.y);
        c.mean_value = sum / static_cast<double>(c.area);
    }
    std::stable_sort(comps.begin(), comps.end(),
                     [](const Component& a, const Component& b) {
                         return a.mean_value > b.mean_value;
                     });

    std::vector<BoundingBox> boxes;
    boxes.reserve(comps.size());
    for (const Component& c : comps) boxes.push_back(c.box);
    if (components_out) *components_out = std::move(comps);
    return boxes;
}

}  // namespace usfg
