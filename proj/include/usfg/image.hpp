#pragma once

#include <cstdint>
#include <vector>

#include "usfg/error.hpp"

namespace usfg {

// Interleaved 8-bit raster, 1 (gray) or 3 (RGB) channels, row major.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<uint8_t> data;

    Image() = default;
    Image(int w, int h, int c, uint8_t fill = 0)
        : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {
        if (w < 1 || h < 1 || (c != 1 && c != 3))
            throw ArgumentError("Image: invalid dimensions");
    }

    uint8_t& at(int x, int y, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }

    bool operator==(const Image&) const = default;
};

// 8-bit soft segmentation, 0 = certain background, 255 = certain foreground.
struct SoftMask {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> data;

    SoftMask() = default;
    SoftMask(int w, int h, uint8_t fill = 0)
        : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {
        if (w < 1 || h < 1) throw ArgumentError("SoftMask: invalid dimensions");
    }

    uint8_t& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
    uint8_t at(int x, int y) const { return data[static_cast<size_t>(y) * width + x]; }

    bool operator==(const SoftMask&) const = default;
};

// The student's 7-plane input, planar float layout.
// Plane order: R, G, B, H, S, Dx, Dy.
struct ChannelStack {
    static constexpr int kPlanes = 7;
    int width = 0;
    int height = 0;
    std::vector<float> data;  // kPlanes contiguous planes

    ChannelStack() = default;
    ChannelStack(int w, int h)
        : width(w), height(h), data(static_cast<size_t>(kPlanes) * w * h, 0.0f) {}

    float* plane(int p) { return data.data() + static_cast<size_t>(p) * width * height; }
    const float* plane(int p) const {
        return data.data() + static_cast<size_t>(p) * width * height;
    }
};

// --- Netpbm codec (binary P5 / P6, maxval 255 only) ---

Image decode_netpbm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_netpbm(const Image& img);
std::vector<uint8_t> encode_netpbm(const SoftMask& mask);

SoftMask to_softmask(const Image& gray);  // requires channels == 1
Image to_image(const SoftMask& mask);

Image read_image(const std::string& path);
SoftMask read_mask(const std::string& path);
void write_image(const std::string& path, const Image& img);
void write_mask(const std::string& path, const SoftMask& mask);

// --- Resizing (half-pixel-center bilinear, edge clamp, round-to-nearest) ---

Image resize_bilinear(const Image& src, int target_w, int target_h);
SoftMask resize_bilinear(const SoftMask& src, int target_w, int target_h);

// Bilinear resize of a float plane, same coordinate convention.
std::vector<float> resize_plane(const float* src, int src_w, int src_h, int dst_w, int dst_h);

// --- Student input construction ---

// Resizes to net_input_size square, then derives H, S and the luminance
// central-difference planes. Gray input is rejected.
ChannelStack to_student_channels(const Image& rgb, int net_input_size);

}  // namespace usfg
