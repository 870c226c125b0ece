#pragma once

#include <string>
#include <vector>

#include "usfg/dataset.hpp"
#include "usfg/image.hpp"
#include "usfg/postprocess.hpp"
#include "usfg/rng.hpp"
#include "usfg/teacher.hpp"

namespace usfg {

struct SynthConfig {
    int frame_w = 128;
    int frame_h = 128;
    int frames_per_video = 60;
    enum class Shape { rectangle, ellipse };
    Shape shape = Shape::rectangle;
    double area_frac_min = 0.05;
    double area_frac_max = 0.20;
    // Object / background colors; auto_contrast picks them per video so the
    // object stands out from the background.
    bool auto_contrast = true;
    std::array<uint8_t, 3> object_color = {230, 60, 40};
    std::array<uint8_t, 3> background_color = {40, 90, 140};
    // Sinusoidal trajectory around the frame center.
    double amplitude_frac = 0.25;  // of frame size, per axis
    double period_frames = 40.0;
    double noise_sigma = 4.0;      // gaussian pixel noise, 0-255 scale
    int videos = 20;
    // The last hard_tail videos move with amplitude_frac * hard_amplitude_scale:
    // low-motion videos that are hard for a background-subspace teacher while
    // looking exactly like the rest to a per-image student.
    int hard_tail = 0;
    double hard_amplitude_scale = 1.0;
    uint64_t seed = 0;
    std::string id_prefix = "synth";
};

struct SynthVideo {
    VideoSequence video;
    std::vector<SoftMask> gt_masks;   // binary 0/255, frame resolution
    std::vector<BoundingBox> gt_boxes;
};

std::vector<SynthVideo> generate(const SynthConfig& config);

// Writes frames (P6), GT masks (P5) and a manifest with gt fields populated.
std::vector<DatasetEntry> write_corpus(const std::vector<SynthVideo>& videos,
                                       const std::string& dir,
                                       const std::string& manifest_path);

// Replaces round(fraction * N) masks with low-mean uniform noise (values in
// 1..64); the replacement set is seed-deterministic, other masks untouched.
void corrupt_masks(std::vector<SoftMask>& masks, double fraction, Rng& rng);

}  // namespace usfg
