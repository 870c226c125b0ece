#pragma once

#include <string>
#include <vector>

#include "usfg/image.hpp"

namespace usfg {

// Ordered frames of one video; paths are resolved lazily by the caller.
struct VideoSequence {
    std::string video_id;
    std::vector<Image> frames;
};

// Learned background subspace at work resolution.
// components are rows of length dim(), pairwise orthonormal.
struct PcaModel {
    int work_w = 0;
    int work_h = 0;
    std::vector<double> mean;                 // length work_w * work_h * 3
    std::vector<std::vector<double>> components;
    std::vector<double> eigenvalues;          // non-increasing, same count as components
    bool rank_reduced = false;                // k was lowered to the achievable rank

    int dim() const { return work_w * work_h * 3; }
    int k() const { return static_cast<int>(components.size()); }
};

// Foreground / background color statistics over 8x8x8 quantized RGB.
struct ColorModel {
    static constexpr int kBins = 512;
    std::vector<double> fg_hist;  // sums to 1, every bin > 0
    std::vector<double> bg_hist;
    double prior_fg = 0.5;
};

struct TeacherConfig {
    int work_w = 64;
    int work_h = 64;
    int k = 8;
    int max_fit_frames = 1000;
    double smooth_sigma = 2.0;
    double fg_seed_percent = 15.0;  // top error fraction seeding the foreground
    double bg_seed_percent = 50.0;  // bottom error fraction seeding the background
    int refine_iters = 2;
    enum class Combine { geometric_mean, error_only, color_only };
    Combine combine_mode = Combine::geometric_mean;
};

inline int color_bin(uint8_t r, uint8_t g, uint8_t b) {
    return ((r >> 5) << 6) | ((g >> 5) << 3) | (b >> 5);
}

// Symmetric eigendecomposition by cyclic Jacobi rotations.
// a is n*n row major and is destroyed; eigenvalues returned descending with
// matching eigenvector columns stacked as rows of `vectors`.
void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors);

PcaModel fit_pca(const std::vector<Image>& frames, const TeacherConfig& config);

// Per-pixel RGB reconstruction residual at work resolution, Gaussian smoothed.
std::vector<double> error_map(const PcaModel& model, const Image& frame,
                              const TeacherConfig& config);

// error_maps must already be normalized jointly over the video to [0, 255].
// Throws ArgumentError when the seed split is degenerate (all values equal).
ColorModel fit_color_model(const std::vector<Image>& work_frames,
                           const std::vector<std::vector<double>>& error_maps,
                           const TeacherConfig& config);

// Pixel-wise foreground posterior in [0, 1] at the frame's own resolution.
std::vector<double> classify_pixels(const ColorModel& model, const Image& frame);

struct DiscoverResult {
    std::vector<SoftMask> masks;      // one per frame, work resolution
    std::vector<std::string> warnings;
};

DiscoverResult discover(const VideoSequence& video, const TeacherConfig& config);

}  // namespace usfg
