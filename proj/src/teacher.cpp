#include <algorithm>
#include <cmath>
#include <numeric>

#include "usfg/teacher.hpp"

namespace usfg {

namespace {

constexpr double kEigTol = 1e-12;

std::vector<double> flatten_work(const Image& frame, int work_w, int work_h) {
    Image work = resize_bilinear(frame, work_w, work_h);
    std::vector<double> v(work.data.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = work.data[i] / 255.0;
    return v;
}

void gaussian_smooth(std::vector<double>& plane, int w, int h, double sigma) {
    if (sigma <= 0.0) return;
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    std::vector<double> tmp(plane.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int xi = std::clamp(x + i, 0, w - 1);
                acc += kernel[i + radius] * plane[static_cast<size_t>(y) * w + xi];
            }
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    }
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                int yi = std::clamp(y + i, 0, h - 1);
                acc += kernel[i + radius] * tmp[static_cast<size_t>(yi) * w + x];
            }
            plane[static_cast<size_t>(y) * w + x] = acc;
        }
    }
}

ColorModel model_from_seeds(const std::vector<Image>& work_frames,
                            const std::vector<std::vector<uint8_t>>& labels) {
    // labels: 0 = ignore, 1 = background seed, 2 = foreground seed
    ColorModel m;
    m.fg_hist.assign(ColorModel::kBins, 1.0);  // Laplace smoothing
    m.bg_hist.assign(ColorModel::kBins, 1.0);
    size_t fg_count = 0, total = 0;
    for (size_t f = 0; f < work_frames.size(); ++f) {
        const Image& img = work_frames[f];
        const size_t n = static_cast<size_t>(img.width) * img.height;
        total += n;
        for (size_t p = 0; p < n; ++p) {
            int bin = color_bin(img.data[3 * p], img.data[3 * p + 1], img.data[3 * p + 2]);
            if (labels[f][p] == 2) {
                m.fg_hist[bin] += 1.0;
                ++fg_count;
            } else if (labels[f][p] == 1) {
                m.bg_hist[bin] += 1.0;
            }
        }
    }
    double fg_sum = std::accumulate(m.fg_hist.begin(), m.fg_hist.end(), 0.0);
    double bg_sum = std::accumulate(m.bg_hist.begin(), m.bg_hist.end(), 0.0);
    for (double& v : m.fg_hist) v /= fg_sum;
    for (double& v : m.bg_hist) v /= bg_sum;
    m.prior_fg = std::clamp(static_cast<double>(fg_count) / static_cast<double>(total),
                            1e-6, 1.0 - 1e-6);
    return m;
}

}  // namespace

void jacobi_eigen(std::vector<double>& a, int n, std::vector<double>& values,
                  std::vector<std::vector<double>>& vectors) {
    std::vector<double> v(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;

    auto A = [&](int i, int j) -> double& { return a[static_cast<size_t>(i) * n + j]; };
    auto V = [&](int i, int j) -> double& { return v[static_cast<size_t>(i) * n + j]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-24) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = A(p, q);
                if (std::abs(apq) < 1e-300) continue;
                double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = c * aip - s * aiq;
                    A(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    double api = A(p, i), aqi = A(q, i);
                    A(p, i) = c * api - s * aqi;
                    A(q, i) = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = V(i, p), viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = A(i, i);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return diag[x] > diag[y]; });

    values.resize(n);
    vectors.assign(n, std::vector<double>(n));
    for (int r = 0; r < n; ++r) {
        values[r] = diag[order[r]];
        for (int i = 0; i < n; ++i) vectors[r][i] = V(i, order[r]);
    }
}

PcaModel fit_pca(const std::vector<Image>& frames, const TeacherConfig& config) {
    if (frames.size() < 2) throw ArgumentError("fit_pca: need at least 2 frames");
    PcaModel model;
    model.work_w = config.work_w;
    model.work_h = config.work_h;

    // Even subsample down to max_fit_frames.
    std::vector<size_t> pick;
    size_t total = frames.size();
    size_t use = std::min<size_t>(total, static_cast<size_t>(config.max_fit_frames));
    for (size_t j = 0; j < use; ++j)
        pick.push_back(use == 1 ? 0 : j * (total - 1) / (use - 1));

    const int dim = model.dim();
    std::vector<std::vector<double>> x;
    x.reserve(pick.size());
    for (size_t idx : pick) x.push_back(flatten_work(frames[idx], config.work_w, config.work_h));

    model.mean.assign(dim, 0.0);
    for (const auto& xi : x)
        for (int d = 0; d < dim; ++d) model.mean[d] += xi[d];
    for (double& m : model.mean) m /= static_cast<double>(x.size());
    for (auto& xi : x)
        for (int d = 0; d < dim; ++d) xi[d] -= model.mean[d];

    const int f = static_cast<int>(x.size());
    std::vector<double> gram(static_cast<size_t>(f) * f);
    for (int i = 0; i < f; ++i) {
        for (int j = i; j < f; ++j) {
            double dot = 0.0;
            for (int d = 0; d < dim; ++d) dot += x[i][d] * x[j][d];
            gram[static_cast<size_t>(i) * f + j] = dot;
            gram[static_cast<size_t>(j) * f + i] = dot;
        }
    }

    std::vector<double> evals;
    std::vector<std::vector<double>> evecs;
    jacobi_eigen(gram, f, evals, evecs);

    double scale = std::max(evals.empty() ? 0.0 : evals[0], 1.0);
    int want = std::min(config.k, std::min(f, dim));
    for (int r = 0; r < want; ++r) {
        if (evals[r] <= kEigTol * scale) break;
        std::vector<double> comp(dim, 0.0);
        for (int i = 0; i < f; ++i) {
            double u = evecs[r][i];
            if (u == 0.0) continue;
            const auto& xi = x[i];
            for (int d = 0; d < dim; ++d) comp[d] += u * xi[d];
        }
        double inv_norm = 1.0 / std::sqrt(evals[r]);
        for (double& c : comp) c *= inv_norm;
        model.components.push_back(std::move(comp));
        model.eigenvalues.push_back(evals[r]);
    }
    model.rank_reduced = model.k() < config.k;
    return model;
}

std::vector<double> error_map(const PcaModel& model, const Image& frame,
                              const TeacherConfig& config) {
    std::vector<double> x = flatten_work(frame, model.work_w, model.work_h);
    const int dim = model.dim();
    for (int d = 0; d < dim; ++d) x[d] -= model.mean[d];

    for (const auto& comp : model.components) {
        double coeff = 0.0;
        for (int d = 0; d < dim; ++d) coeff += x[d] * comp[d];
        for (int d = 0; d < dim; ++d) x[d] -= coeff * comp[d];
    }

    const size_t pixels = static_cast<size_t>(model.work_w) * model.work_h;
    std::vector<double> err(pixels);
    for (size_t p = 0; p < pixels; ++p) {
        double r = x[3 * p], g = x[3 * p + 1], b = x[3 * p + 2];
        err[p] = std::sqrt(r * r + g * g + b * b);
    }
    gaussian_smooth(err, model.work_w, model.work_h, config.smooth_sigma);
    return err;
}

ColorModel fit_color_model(const std::vector<Image>& work_frames,
                           const std::vector<std::vector<double>>& error_maps,
                           const TeacherConfig& config) {
    std::vector<double> all;
    for (const auto& e : error_maps) all.insert(all.end(), e.begin(), e.end());
    if (all.empty()) throw ArgumentError("fit_color_model: no pixels");
    auto [mn_it, mx_it] = std::minmax_element(all.begin(), all.end());
    if (*mx_it - *mn_it < 1e-12)
        throw ArgumentError("fit_color_model: degenerate video (all error values equal)");

    std::vector<double> sorted = all;
    std::sort(sorted.begin(), sorted.end());
    auto percentile = [&](double pct) {
        size_t i = static_cast<size_t>(pct / 100.0 * (sorted.size() - 1));
        return sorted[std::min(i, sorted.size() - 1)];
    };
    double fg_thr = percentile(100.0 - config.fg_seed_percent);
    double bg_thr = percentile(config.bg_seed_percent);

    std::vector<std::vector<uint8_t>> labels(error_maps.size());
    for (size_t f = 0; f < error_maps.size(); ++f) {
        labels[f].resize(error_maps[f].size(), 0);
        for (size_t p = 0; p < error_maps[f].size(); ++p) {
            if (error_maps[f][p] >= fg_thr)
                labels[f][p] = 2;
            else if (error_maps[f][p] <= bg_thr)
                labels[f][p] = 1;
        }
    }
    return model_from_seeds(work_frames, labels);
}

std::vector<double> classify_pixels(const ColorModel& model, const Image& frame) {
    const size_t pixels = static_cast<size_t>(frame.width) * frame.height;
    std::vector<double> post(pixels);
    for (size_t p = 0; p < pixels; ++p) {
        int bin = color_bin(frame.data[3 * p], frame.data[3 * p + 1], frame.data[3 * p + 2]);
        double fg = model.prior_fg * model.fg_hist[bin];
        double bg = (1.0 - model.prior_fg) * model.bg_hist[bin];
        post[p] = fg / (fg + bg);
    }
    return post;
}

DiscoverResult discover(const VideoSequence& video, const TeacherConfig& config) {
    DiscoverResult result;
    const size_t n_frames = video.frames.size();

    auto all_zero = [&](const std::string& why) {
        result.warnings.push_back(video.video_id + ": " + why + "; emitting all-zero masks");
        result.masks.assign(n_frames, SoftMask(config.work_w, config.work_h, 0));
        return result;
    };

    if (n_frames < 2) return all_zero("fewer than 2 frames");

    std::vector<Image> work_frames;
    work_frames.reserve(n_frames);
    for (const auto& f : video.frames)
        work_frames.push_back(resize_bilinear(f, config.work_w, config.work_h));

    PcaModel model = fit_pca(work_frames, config);
    if (model.rank_reduced)
        result.warnings.push_back(video.video_id + ": PCA rank reduced to " +
                                  std::to_string(model.k()));
    if (model.k() == 0) return all_zero("static video, zero PCA variance");

    std::vector<std::vector<double>> emaps(n_frames);
    for (size_t f = 0; f < n_frames; ++f) emaps[f] = error_map(model, work_frames[f], config);

    double mn = emaps[0][0], mx = emaps[0][0];
    for (const auto& e : emaps)
        for (double v : e) {
            mn = std::min(mn, v);
            mx = std::max(mx, v);
        }
    if (mx - mn < 1e-12) return all_zero("uniform reconstruction error");
    for (auto& e : emaps)
        for (double& v : e) v = (v - mn) / (mx - mn) * 255.0;

    ColorModel color;
    try {
        color = fit_color_model(work_frames, emaps, config);
    } catch (const ArgumentError&) {
        return all_zero("degenerate error distribution");
    }

    std::vector<std::vector<double>> posts(n_frames);
    for (int iter = 0; iter < config.refine_iters; ++iter) {
        for (size_t f = 0; f < n_frames; ++f)
            posts[f] = classify_pixels(color, work_frames[f]);
        // Re-fit from thresholded posteriors.
        std::vector<std::vector<uint8_t>> labels(n_frames);
        size_t fg_total = 0;
        for (size_t f = 0; f < n_frames; ++f) {
            labels[f].resize(posts[f].size());
            for (size_t p = 0; p < posts[f].size(); ++p) {
                labels[f][p] = posts[f][p] >= 0.5 ? 2 : 1;
                if (labels[f][p] == 2) ++fg_total;
            }
        }
        size_t total = n_frames * static_cast<size_t>(config.work_w) * config.work_h;
        if (fg_total == 0 || fg_total == total) break;  // refinement collapsed
        color = model_from_seeds(work_frames, labels);
    }
    for (size_t f = 0; f < n_frames; ++f) posts[f] = classify_pixels(color, work_frames[f]);

    result.masks.reserve(n_frames);
    for (size_t f = 0; f < n_frames; ++f) {
        SoftMask mask(config.work_w, config.work_h);
        for (size_t p = 0; p < posts[f].size(); ++p) {
            double e = emaps[f][p];            // already 0..255
            double c = 255.0 * posts[f][p];
            double v;
            switch (config.combine_mode) {
                case TeacherConfig::Combine::error_only: v = e; break;
                case TeacherConfig::Combine::color_only: v = c; break;
                default: v = std::sqrt(e * c); break;
            }
            mask.data[p] = static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
        result.masks.push_back(std::move(mask));
    }
    return result;
}

}  // namespace usfg
