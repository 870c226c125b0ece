#include <algorithm>
#include <cmath>
#include <filesystem>

#include "usfg/synthvideo.hpp"

namespace usfg {

namespace fs = std::filesystem;

namespace {

std::string pad4(int n) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", n);
    return buf;
}

uint8_t clamp_u8(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

}  // namespace

std::vector<SynthVideo> generate(const SynthConfig& config) {
    if (config.frames_per_video < 2)
        throw ConfigError("synth: need at least 2 frames per video");
    if (config.area_frac_min <= 0.0 || config.area_frac_max >= 1.0 ||
        config.area_frac_min > config.area_frac_max)
        throw ConfigError("synth: area fractions must satisfy 0 < min <= max < 1");

    const int w = config.frame_w, h = config.frame_h;
    std::vector<SynthVideo> out;
    out.reserve(config.videos);

    for (int v = 0; v < config.videos; ++v) {
        Rng rng = derive_stream(config.seed, config.id_prefix + "/gen", static_cast<uint64_t>(v));
        SynthVideo sv;
        sv.video.video_id = config.id_prefix + "_" + pad4(v);

        double area = rng.next_double(config.area_frac_min, config.area_frac_max) * w * h;
        double aspect = rng.next_double(0.6, 1.6);
        double obj_w = std::sqrt(area * aspect);
        double obj_h = area / obj_w;
        if (obj_w >= w || obj_h >= h)
            throw ConfigError("synth: object does not fit in the frame");

        std::array<uint8_t, 3> bg = config.background_color;
        std::array<uint8_t, 3> fg = config.object_color;
        if (config.auto_contrast) {
            for (int c = 0; c < 3; ++c) bg[c] = static_cast<uint8_t>(rng.next_int(20, 100));
            for (int c = 0; c < 3; ++c) fg[c] = static_cast<uint8_t>(rng.next_int(160, 240));
        }

        double amp = config.amplitude_frac;
        if (v >= config.videos - config.hard_tail) amp *= config.hard_amplitude_scale;
        double ax = std::min(amp * w, (w - obj_w) / 2.0 - 1.0);
        double ay = std::min(amp * h, (h - obj_h) / 2.0 - 1.0);
        ax = std::max(ax, 0.0);
        ay = std::max(ay, 0.0);
        double px = config.period_frames * rng.next_double(0.75, 1.25);
        double py = config.period_frames * rng.next_double(0.75, 1.25);
        double phx = rng.next_double(0.0, 2.0 * M_PI);
        double phy = rng.next_double(0.0, 2.0 * M_PI);

        for (int t = 0; t < config.frames_per_video; ++t) {
            double cx = w / 2.0 + ax * std::sin(2.0 * M_PI * t / px + phx);
            double cy = h / 2.0 + ay * std::sin(2.0 * M_PI * t / py + phy);

            Image frame(w, h, 3);
            SoftMask gt(w, h, 0);
            double rx = obj_w / 2.0, ry = obj_h / 2.0;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    bool inside;
                    if (config.shape == SynthConfig::Shape::rectangle) {
                        inside = std::abs(x + 0.5 - cx) <= rx && std::abs(y + 0.5 - cy) <= ry;
                    } else {
                        double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
                        inside = dx * dx + dy * dy <= 1.0;
                    }
                    const auto& base = inside ? fg : bg;
                    for (int c = 0; c < 3; ++c)
                        frame.at(x, y, c) = clamp_u8(
                            base[c] + config.noise_sigma * rng.next_gaussian());
                    if (inside) gt.at(x, y) = 255;
                }
            }

            BoundingBox box{w, h, 0, 0};
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    if (gt.at(x, y)) {
                        box.x0 = std::min(box.x0, x);
                        box.y0 = std::min(box.y0, y);
                        box.x1 = std::max(box.x1, x + 1);
                        box.y1 = std::max(box.y1, y + 1);
                    }
            sv.video.frames.push_back(std::move(frame));
            sv.gt_masks.push_back(std::move(gt));
            sv.gt_boxes.push_back(box);
        }
        out.push_back(std::move(sv));
    }
    return out;
}

std::vector<DatasetEntry> write_corpus(const std::vector<SynthVideo>& videos,
                                       const std::string& dir,
                                       const std::string& manifest_path) {
    std::vector<DatasetEntry> entries;
    for (const SynthVideo& sv : videos) {
        fs::path vdir = fs::path(dir) / sv.video.video_id;
        fs::create_directories(vdir);
        for (size_t t = 0; t < sv.video.frames.size(); ++t) {
            std::string image_path = (vdir / ("frame_" + pad4(static_cast<int>(t)) + ".ppm")).string();
            std::string gt_path = (vdir / ("gt_" + pad4(static_cast<int>(t)) + ".pgm")).string();
            write_image(image_path, sv.video.frames[t]);
            write_mask(gt_path, sv.gt_masks[t]);
            DatasetEntry e;
            e.video_id = sv.video.video_id;
            e.frame_index = static_cast<int64_t>(t);
            e.image_path = image_path;
            e.gt_mask_path = gt_path;
            e.gt_box = sv.gt_boxes[t];
            entries.push_back(std::move(e));
        }
    }
    write_manifest(entries, manifest_path);
    return entries;
}

void corrupt_masks(std::vector<SoftMask>& masks, double fraction, Rng& rng) {
    if (fraction < 0.0 || fraction > 1.0)
        throw ArgumentError("corrupt_masks: fraction must be in [0, 1]");
    size_t m = static_cast<size_t>(std::lround(fraction * static_cast<double>(masks.size())));
    std::vector<size_t> indices(masks.size());
    for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    rng.shuffle(indices);
    for (size_t i = 0; i < m; ++i) {
        SoftMask& mask = masks[indices[i]];
        for (uint8_t& v : mask.data) v = static_cast<uint8_t>(rng.next_int(0, 64));
    }
}

}  // namespace usfg
