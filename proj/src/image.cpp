#include <algorithm>
#include <cmath>

#include "usfg/image.hpp"

namespace usfg {

namespace {

// Half-pixel-center source coordinate for destination index i.
// Clamped to [0, src_n - 1]; returns the left index and the right weight.
inline void map_coord(int i, int dst_n, int src_n, int& i0, int& i1, float& frac) {
    float s = (static_cast<float>(i) + 0.5f) * static_cast<float>(src_n) /
                  static_cast<float>(dst_n) -
              0.5f;
    if (s < 0.0f) s = 0.0f;
    float max_s = static_cast<float>(src_n - 1);
    if (s > max_s) s = max_s;
    i0 = static_cast<int>(s);
    if (i0 > src_n - 2) i0 = src_n - 2;
    if (i0 < 0) i0 = 0;
    i1 = (src_n == 1) ? 0 : i0 + 1;
    frac = (src_n == 1) ? 0.0f : s - static_cast<float>(i0);
}

template <typename Fetch, typename Store>
void resize_generic(int src_w, int src_h, int dst_w, int dst_h, int channels, Fetch fetch,
                    Store store) {
    std::vector<int> x0(dst_w), x1(dst_w);
    std::vector<float> fx(dst_w);
    for (int x = 0; x < dst_w; ++x) map_coord(x, dst_w, src_w, x0[x], x1[x], fx[x]);
    for (int y = 0; y < dst_h; ++y) {
        int y0, y1;
        float fy;
        map_coord(y, dst_h, src_h, y0, y1, fy);
        for (int x = 0; x < dst_w; ++x) {
            for (int c = 0; c < channels; ++c) {
                float top = fetch(x0[x], y0, c) * (1.0f - fx[x]) + fetch(x1[x], y0, c) * fx[x];
                float bot = fetch(x0[x], y1, c) * (1.0f - fx[x]) + fetch(x1[x], y1, c) * fx[x];
                store(x, y, c, top * (1.0f - fy) + bot * fy);
            }
        }
    }
}

}  // namespace

Image resize_bilinear(const Image& src, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1)
        throw ArgumentError("resize_bilinear: target dimensions must be >= 1");
    if (src.width == target_w && src.height == target_h) return src;
    Image dst(target_w, target_h, src.channels);
    resize_generic(
        src.width, src.height, target_w, target_h, src.channels,
        [&](int x, int y, int c) { return static_cast<float>(src.at(x, y, c)); },
        [&](int x, int y, int c, float v) {
            dst.at(x, y, c) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
        });
    return dst;
}

SoftMask resize_bilinear(const SoftMask& src, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1)
        throw ArgumentError("resize_bilinear: target dimensions must be >= 1");
    if (src.width == target_w && src.height == target_h) return src;
    SoftMask dst(target_w, target_h);
    resize_generic(
        src.width, src.height, target_w, target_h, 1,
        [&](int x, int y, int) { return static_cast<float>(src.at(x, y)); },
        [&](int x, int y, int, float v) {
            dst.at(x, y) = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 255.0f)));
        });
    return dst;
}

std::vector<float> resize_plane(const float* src, int src_w, int src_h, int dst_w, int dst_h) {
    std::vector<float> dst(static_cast<size_t>(dst_w) * dst_h);
    resize_generic(
        src_w, src_h, dst_w, dst_h, 1,
        [&](int x, int y, int) { return src[static_cast<size_t>(y) * src_w + x]; },
        [&](int x, int y, int, float v) { dst[static_cast<size_t>(y) * dst_w + x] = v; });
    return dst;
}

ChannelStack to_student_channels(const Image& rgb, int net_input_size) {
    if (rgb.channels != 3)
        throw ArgumentError("to_student_channels: expected 3-channel image");
    Image img = resize_bilinear(rgb, net_input_size, net_input_size);
    const int w = img.width, h = img.height;
    ChannelStack stack(w, h);
    float* pr = stack.plane(0);
    float* pg = stack.plane(1);
    float* pb = stack.plane(2);
    float* ph = stack.plane(3);
    float* ps = stack.plane(4);
    std::vector<float> lum(static_cast<size_t>(w) * h);

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y) * w + x;
            float r = img.at(x, y, 0) / 255.0f;
            float g = img.at(x, y, 1) / 255.0f;
            float b = img.at(x, y, 2) / 255.0f;
            pr[i] = r;
            pg[i] = g;
            pb[i] = b;
            lum[i] = 0.299f * r + 0.587f * g + 0.114f * b;

            float mx = std::max({r, g, b});
            float mn = std::min({r, g, b});
            float delta = mx - mn;
            float hue = 0.0f;  // achromatic pixels get hue 0
            if (delta > 0.0f) {
                if (mx == r)
                    hue = std::fmod((g - b) / delta, 6.0f);
                else if (mx == g)
                    hue = (b - r) / delta + 2.0f;
                else
                    hue = (r - g) / delta + 4.0f;
                hue /= 6.0f;  // hue angle / 360
                if (hue < 0.0f) hue += 1.0f;
            }
            ph[i] = hue;
            ps[i] = (mx > 0.0f) ? delta / mx : 0.0f;
        }
    }

    // Edge-replicated central differences of the luminance plane.
    float* dx = stack.plane(5);
    float* dy = stack.plane(6);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y) * w + x;
            int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
            dx[i] = (lum[static_cast<size_t>(y) * w + xr] - lum[static_cast<size_t>(y) * w + xl]) * 0.5f;
            dy[i] = (lum[static_cast<size_t>(yd) * w + x] - lum[static_cast<size_t>(yu) * w + x]) * 0.5f;
        }
    }
    return stack;
}

}  // namespace usfg
