// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "usfg/checkpoint.hpp"
#include "usfg/cli.hpp"
#include "usfg/dataset.hpp"
#include "usfg/evaluation.hpp"
#include "usfg/network.hpp"
#include "usfg/postprocess.hpp"
#include "usfg/rng.hpp"
#include "usfg/synthvideo.hpp"
#include "usfg/teacher.hpp"
#include "usfg/trainer.hpp"

using namespace usfg;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int idx, const char* name, bool ok, const std::string& detail) {
    std::printf("criterion %d (%s): %s  %s\n", idx, name, ok ? "PASS" : "FAIL",
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

// Dense-oracle top-k subspace from the D x D scatter matrix.
std::vector<std::vector<double>> dense_subspace(const std::vector<std::vector<double>>& x,
                                                int k) {
    const int dim = static_cast<int>(x[0].size());
    std::vector<double> mean(dim, 0.0);
    for (const auto& xi : x)
        for (int d = 0; d < dim; ++d) mean[d] += xi[d];
    for (double& m : mean) m /= static_cast<double>(x.size());
    std::vector<double> scatter(static_cast<size_t>(dim) * dim, 0.0);
    for (const auto& xi : x) {
        std::vector<double> c(dim);
        for (int d = 0; d < dim; ++d) c[d] = xi[d] - mean[d];
        for (int i = 0; i < dim; ++i) {
            double ci = c[i];
            double* row = scatter.data() + static_cast<size_t>(i) * dim;
            for (int j = 0; j < dim; ++j) row[j] += ci * c[j];
        }
    }
    std::vector<double> evals;
    std::vector<std::vector<double>> evecs;
    jacobi_eigen(scatter, dim, evals, evecs);
    evecs.resize(k);
    return evecs;
}

// Upper bound on the largest principal angle between two orthonormal spans:
// the Frobenius norm of A - (A B^T) B, which dominates sin(theta_max).
double principal_angle_bound(const std::vector<std::vector<double>>& a,
                             const std::vector<std::vector<double>>& b) {
    double frob2 = 0.0;
    for (const auto& v : a) {
        std::vector<double> resid = v;
        for (const auto& u : b) {
            double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
            for (size_t d = 0; d < v.size(); ++d) resid[d] -= dot * u[d];
        }
        for (double r : resid) frob2 += r * r;
    }
    return std::sqrt(frob2);
}

double iou_pixel_oracle(const BoundingBox& a, const BoundingBox& b, int extent) {
    int64_t inter = 0, uni = 0;
    for (int y = 0; y < extent; ++y)
        for (int x = 0; x < extent; ++x) {
            bool ina = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
            bool inb = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
            inter += ina && inb;
            uni += ina || inb;
        }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double maxf_bruteforce(const std::vector<SoftMask>& masks,
                       const std::vector<std::vector<BoundingBox>>& gt) {
    double best = 0.0;
    for (int t = 0; t <= 255; ++t) {
        double f_sum = 0.0;
        size_t used = 0;
        for (size_t f = 0; f < masks.size(); ++f) {
            const SoftMask& m = masks[f];
            std::vector<uint8_t> gt_px(m.data.size(), 0);
            int64_t pos = 0;
            for (const auto& b : gt[f])
                for (int y = b.y0; y < b.y1; ++y)
                    for (int x = b.x0; x < b.x1; ++x) gt_px[y * m.width + x] = 1;
            for (uint8_t v : gt_px) pos += v;
            if (pos == 0) continue;
            int64_t tp = 0, fp = 0, fn = 0;
            for (size_t i = 0; i < m.data.size(); ++i) {
                bool pred = m.data[i] >= t;
                if (pred && gt_px[i]) ++tp;
                else if (pred) ++fp;
                else if (gt_px[i]) ++fn;
            }
            double prec = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
            double rec = static_cast<double>(tp) / (tp + fn);
            f_sum += prec + rec == 0 ? 0.0 : 2 * prec * rec / (prec + rec);
            ++used;
        }
        if (used) best = std::max(best, f_sum / used);
    }
    return best;
}

BoundingBox random_box(Rng& rng, int extent) {
    int x0 = static_cast<int>(rng.next_int(0, extent - 2));
    int y0 = static_cast<int>(rng.next_int(0, extent - 2));
    int x1 = static_cast<int>(rng.next_int(x0 + 1, extent - 1));
    int y1 = static_cast<int>(rng.next_int(y0 + 1, extent - 1));
    return {x0, y0, x1, y1};
}

void criterion_numerics() {
    auto t0 = Clock::now();
    constexpr double kAngleTol = 1e-6;
    constexpr double kMaxfTol = 1e-12;

    // PCA vs dense eigendecomposition: 50 instances, 50 frames, dimension 300.
    double worst_angle = 0.0;
    Rng rng(9001);
    TeacherConfig cfg;
    cfg.work_w = 10;
    cfg.work_h = 10;  // 10*10*3 = 300
    cfg.k = 8;
    for (int inst = 0; inst < 50; ++inst) {
        std::vector<Image> frames;
        std::vector<std::vector<double>> x;
        for (int f = 0; f < 50; ++f) {
            Image img(10, 10, 3);
            for (auto& v : img.data) v = static_cast<uint8_t>(rng.next_int(0, 255));
            std::vector<double> row(img.data.size());
            for (size_t i = 0; i < row.size(); ++i) row[i] = img.data[i] / 255.0;
            frames.push_back(std::move(img));
            x.push_back(std::move(row));
        }
        PcaModel model = fit_pca(frames, cfg);
        if (model.k() != 8) {
            report(1, "numerics oracles", false, "PCA rank collapsed unexpectedly");
            return;
        }
        auto oracle = dense_subspace(x, 8);
        worst_angle = std::max(worst_angle,
                               std::max(principal_angle_bound(model.components, oracle),
                                        principal_angle_bound(oracle, model.components)));
    }
    bool pca_ok = worst_angle < kAngleTol;

    // IoU vs pixel counting, exact, 1000 fixtures.
    bool iou_ok = true;
    for (int it = 0; it < 1000; ++it) {
        BoundingBox a = random_box(rng, 20), b = random_box(rng, 20);
        if (iou(a, b) != iou_pixel_oracle(a, b, 20)) iou_ok = false;
    }

    // Pixel metrics vs direct confusion counts, exact, 200 fixtures.
    bool pix_ok = true;
    for (int it = 0; it < 200; ++it) {
        int w = static_cast<int>(rng.next_int(1, 12)), h = static_cast<int>(rng.next_int(1, 12));
        BinaryMask p, g;
        p.width = g.width = w;
        p.height = g.height = h;
        for (int i = 0; i < w * h; ++i) {
            p.data.push_back(rng.next_double() < 0.5);
            g.data.push_back(rng.next_double() < 0.5);
        }
        PixelMetrics m = pixel_metrics(p, g);
        int64_t tp = 0, fp = 0, fn = 0, tn = 0;
        for (int i = 0; i < w * h; ++i) {
            if (p.data[i] && g.data[i]) ++tp;
            else if (p.data[i]) ++fp;
            else if (g.data[i]) ++fn;
            else ++tn;
        }
        if (m.accuracy != static_cast<double>(tp + tn) / (w * h)) pix_ok = false;
        if (m.precision != (tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0)) pix_ok = false;
        if (m.recall != (tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0)) pix_ok = false;
        if (m.jaccard != (tp + fp + fn ? static_cast<double>(tp) / (tp + fp + fn) : 0.0))
            pix_ok = false;
    }

    // Max-F vs brute force over all thresholds, 1e-12, 120 fixtures.
    bool maxf_ok = true;
    for (int it = 0; it < 120; ++it) {
        int w = static_cast<int>(rng.next_int(4, 10)), h = static_cast<int>(rng.next_int(4, 10));
        int frames = static_cast<int>(rng.next_int(1, 3));
        std::vector<SoftMask> masks;
        std::vector<std::vector<BoundingBox>> gt;
        bool any = false;
        for (int f = 0; f < frames; ++f) {
            SoftMask m(w, h);
            for (auto& v : m.data) v = static_cast<uint8_t>(rng.next_int(0, 255));
            masks.push_back(std::move(m));
            std::vector<BoundingBox> boxes;
            if (rng.next_double() < 0.8) {
                boxes.push_back(random_box(rng, std::min(w, h)));
                any = true;
            }
            gt.push_back(std::move(boxes));
        }
        if (!any) continue;
        if (std::abs(max_f_measure(masks, gt).value - maxf_bruteforce(masks, gt)) > kMaxfTol)
            maxf_ok = false;
    }

    // CorLoc vs direct recount, exact, 200 fixtures.
    bool corloc_ok = true;
    for (int it = 0; it < 200; ++it) {
        int frames = static_cast<int>(rng.next_int(1, 8));
        std::vector<std::vector<BoundingBox>> pred(frames), gt(frames);
        for (int f = 0; f < frames; ++f) {
            int np = static_cast<int>(rng.next_int(0, 2)), ng = static_cast<int>(rng.next_int(0, 2));
            for (int i = 0; i < np; ++i) pred[f].push_back(random_box(rng, 16));
            for (int i = 0; i < ng; ++i) gt[f].push_back(random_box(rng, 16));
        }
        int hits = 0, counted = 0;
        for (int f = 0; f < frames; ++f) {
            if (gt[f].empty()) continue;
            ++counted;
            if (pred[f].empty()) continue;
            for (const auto& g : gt[f])
                if (iou_pixel_oracle(pred[f][0], g, 16) >= 0.5) {
                    ++hits;
                    break;
                }
        }
        EvalReport r = corloc(pred, gt);
        double expect = counted ? static_cast<double>(hits) / counted : 0.0;
        if (r.value != expect || r.frames != static_cast<size_t>(counted)) corloc_ok = false;
    }

    bool ok = pca_ok && iou_ok && pix_ok && maxf_ok && corloc_ok;
    std::ostringstream d;
    d << "worst principal-angle bound " << worst_angle << " (tol 1e-6); iou "
      << (iou_ok ? "exact" : "MISMATCH") << ", pixel " << (pix_ok ? "exact" : "MISMATCH")
      << ", maxF " << (maxf_ok ? "<=1e-12" : "MISMATCH") << ", corloc "
      << (corloc_ok ? "exact" : "MISMATCH") << "; " << seconds_since(t0) << "s";
    report(1, "numerics oracles", ok && seconds_since(t0) < 60.0, d.str());
}

// ---------------------------------------------------------------- criterion 2

constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-5;

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6);
}

// See tests/test_student.cpp: distance from the nearest ReLU kink / pool tie.
double kink_margin(const NetworkParams<double>& params, const ForwardCache<double>& cache) {
    const ArchDescriptor& arch = params.arch;
    double margin = 1e300;
    for (int i = 0; i < 7; ++i) {
        const Tensor<double>& in = i == 0   ? cache.input
                                   : i == 2 ? cache.pool_out[0]
                                   : i == 4 ? cache.pool_out[1]
                                            : cache.conv_out[i - 1];
        const int n_batch = in.dims[0], ci_n = in.dims[1], s = in.dims[2];
        const int co_n = arch.conv_channels[i];
        for (int n = 0; n < n_batch; ++n)
            for (int co = 0; co < co_n; ++co)
                for (int y = 0; y < s; ++y)
                    for (int x = 0; x < s; ++x) {
                        double pre = params.conv_b[i].data[co];
                        for (int ci = 0; ci < ci_n; ++ci)
                            for (int ky = -1; ky <= 1; ++ky)
                                for (int kx = -1; kx <= 1; ++kx) {
                                    int yy = y + ky, xx = x + kx;
                                    if (yy < 0 || yy >= s || xx < 0 || xx >= s) continue;
                                    pre += params.conv_w[i]
                                               .data[((static_cast<size_t>(co) * ci_n + ci) * 3 +
                                                      ky + 1) * 3 + kx + 1] *
                                           in.data[((static_cast<size_t>(n) * ci_n + ci) * s + yy) *
                                                       s + xx];
                                }
                        margin = std::min(margin, std::abs(pre));
                    }
    }
    for (int p = 0; p < 2; ++p) {
        const Tensor<double>& in = cache.conv_out[p == 0 ? 1 : 3];
        const int n_planes = in.dims[0] * in.dims[1], s = in.dims[2];
        for (int pl = 0; pl < n_planes; ++pl)
            for (int y = 0; y < s; y += 2)
                for (int x = 0; x < s; x += 2) {
                    const double* base = in.data.data() + static_cast<size_t>(pl) * s * s;
                    double v[4] = {base[y * s + x], base[y * s + x + 1], base[(y + 1) * s + x],
                                   base[(y + 1) * s + x + 1]};
                    std::sort(v, v + 4);
                    if (v[3] > 0.0) margin = std::min(margin, v[3] - v[2]);
                }
    }
    return margin;
}

void criterion_gradients() {
    auto t0 = Clock::now();
    double worst = 0.0;

    // Isolated layers: conv+ReLU, pool routing, resize, FC (linear map).
    {
        Rng rng(9100);
        Tensor<double> in({2, 3, 6, 6}), w({4, 3, 3, 3}), b({4});
        for (auto& v : in.data) v = rng.next_double(-1, 1);
        for (auto& v : w.data) v = rng.next_double(-1, 1);
        for (auto& v : b.data) v = rng.next_double(-0.2, 0.2);
        Tensor<double> out({2, 4, 6, 6}), r(out.dims);
        for (auto& v : r.data) v = rng.next_double(-1, 1);
        auto loss = [&]() {
            detail::conv3x3_forward(in, w, b, out);
            double l = 0;
            for (size_t i = 0; i < out.data.size(); ++i) l += out.data[i] * r.data[i];
            return l;
        };
        loss();
        Tensor<double> g = r;
        detail::relu_backward_inplace(g, out);
        Tensor<double> gw(w.dims), gb(b.dims), gin(in.dims);
        detail::conv3x3_backward(in, w, g, gw, gb, &gin);
        auto fd_all = [&](Tensor<double>& t, const Tensor<double>& grad) {
            for (size_t i = 0; i < t.data.size(); ++i) {
                double save = t.data[i];
                t.data[i] = save + kFdStep;
                double lp = loss();
                t.data[i] = save - kFdStep;
                double lm = loss();
                t.data[i] = save;
                worst = std::max(worst, rel_err(grad.data[i], (lp - lm) / (2 * kFdStep)));
            }
        };
        fd_all(w, gw);
        fd_all(b, gb);
        fd_all(in, gin);
    }
    {
        Rng rng(9101);
        Tensor<double> in({2, 3, 4, 4});
        for (auto& v : in.data) v = rng.next_double(-1, 1);
        Tensor<double> out;
        std::vector<int> idx;
        detail::maxpool2_forward(in, out, idx);
        Tensor<double> r(out.dims);
        for (auto& v : r.data) v = rng.next_double(-1, 1);
        Tensor<double> gin(in.dims);
        for (size_t o = 0; o < r.data.size(); ++o) gin.data[idx[o]] += r.data[o];
        for (size_t i = 0; i < in.data.size(); ++i) {
            double save = in.data[i];
            in.data[i] = save + kFdStep;
            detail::maxpool2_forward(in, out, idx);
            double lp = 0;
            for (size_t o = 0; o < r.data.size(); ++o) lp += out.data[o] * r.data[o];
            in.data[i] = save - kFdStep;
            detail::maxpool2_forward(in, out, idx);
            double lm = 0;
            for (size_t o = 0; o < r.data.size(); ++o) lm += out.data[o] * r.data[o];
            in.data[i] = save;
            worst = std::max(worst, rel_err(gin.data[i], (lp - lm) / (2 * kFdStep)));
        }
    }
    {
        // Resize plan adjoint: exact linear map, check <Ax,y> == <x,A^T y>.
        Rng rng(9102);
        ResizePlan<double> plan(6, 6, 4, 4);
        std::vector<double> x(36), y(16), ax(16, 0.0), aty(36, 0.0);
        for (auto& v : x) v = rng.next_double(-1, 1);
        for (auto& v : y) v = rng.next_double(-1, 1);
        plan.forward(x.data(), ax.data());
        plan.backward(y.data(), aty.data());
        double lhs = 0, rhs = 0;
        for (int i = 0; i < 16; ++i) lhs += ax[i] * y[i];
        for (int i = 0; i < 36; ++i) rhs += x[i] * aty[i];
        worst = std::max(worst, rel_err(lhs, rhs));
    }

    // End to end on the tiny variant: every parameter, concat and FC included.
    {
        ArchDescriptor arch = ArchDescriptor::tiny();
        auto params = init_params<double>(arch, 0);
        Tensor<double> input({2, 7, 8, 8}), targets({2, arch.output_count()});
        ForwardCache<double> cache;
        for (uint64_t seed = 2000;; ++seed) {
            Rng rng(seed);
            params = init_params<double>(arch, seed);
            for (auto& v : input.data) v = rng.next_double(0, 1);
            for (auto& v : targets.data) v = rng.next_double(0, 1);
            forward(params, input, cache);
            if (kink_margin(params, cache) > 20 * kFdStep) break;
            if (seed > 2500) {
                report(2, "gradient checks", false, "no kink-free fixture found");
                return;
            }
        }
        auto loss = [&]() {
            forward(params, input, cache);
            return loss_value(cache.output, targets);
        };
        loss();
        auto grads = zero_params<double>(arch);
        backward(params, cache, targets, grads);
        std::vector<Tensor<double>*> ps, gs;
        for_each_tensor(params, [&](const std::string&, Tensor<double>& t) { ps.push_back(&t); });
        for_each_tensor(grads, [&](const std::string&, Tensor<double>& t) { gs.push_back(&t); });
        for (size_t k = 0; k < ps.size(); ++k) {
            for (size_t i = 0; i < ps[k]->data.size(); ++i) {
                double save = ps[k]->data[i];
                ps[k]->data[i] = save + kFdStep;
                double lp = loss();
                ps[k]->data[i] = save - kFdStep;
                double lm = loss();
                ps[k]->data[i] = save;
                worst = std::max(worst, rel_err(gs[k]->data[i], (lp - lm) / (2 * kFdStep)));
            }
        }
    }

    std::ostringstream d;
    d << "worst relative error " << worst << " (tol 1e-5, step 1e-5); " << seconds_since(t0)
      << "s";
    report(2, "gradient checks", worst < kFdTol && seconds_since(t0) < 120.0, d.str());
}

// ---------------------------------------------------------------- criterion 3

void criterion_overfit() {
    auto t0 = Clock::now();
    // One synthetic frame and its ground-truth mask as the single example.
    SynthConfig scfg;
    scfg.videos = 1;
    scfg.frames_per_video = 2;
    scfg.seed = 4242;
    auto vids = generate(scfg);
    TrainingExample ex;
    ex.input = to_student_channels(vids[0].video.frames[0], 128);
    ex.target = resize_bilinear(vids[0].gt_masks[0], 32, 32);

    // Adam on the one example, batch 1, stopping at the first crossing.
    ArchDescriptor arch = ArchDescriptor::desk();
    auto params = init_params<float>(arch, 1);
    auto grads = zero_params<float>(arch);
    AdamState<float> state = AdamState<float>::make(params);
    Tensor<float> input = pack_inputs<float>({&ex.input});
    Tensor<float> target = pack_targets<float>({&ex.target}, arch.output_count());
    ForwardCache<float> cache;
    forward(params, input, cache);
    const double initial = loss_value(cache.output, target);
    double cur = initial;
    int steps = 0;
    while (steps < 500 && cur >= 1e-3 * initial) {
        for_each_tensor(grads, [](const std::string&, Tensor<float>& t) { t.zero(); });
        backward(params, cache, target, grads);
        adam_step(params, grads, state);
        forward(params, input, cache);
        cur = loss_value(cache.output, target);
        ++steps;
    }

    std::ostringstream d;
    d << "loss " << initial << " -> " << cur << " after " << steps << " steps (need < "
      << 1e-3 * initial << " within 500); " << seconds_since(t0) << "s";
    report(3, "single-example overfit", cur < 1e-3 * initial && seconds_since(t0) < 180.0,
           d.str());
}

// ---------------------------------------------------------------- criterion 4

double report_value(const std::string& path) {
    std::ifstream f(path);
    if (!f) return -1.0;
    nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
    if (j.is_discarded() || !j.contains("value")) return -1.0;
    return j["value"].get<double>();
}

void criterion_end_to_end() {
    auto t0 = Clock::now();
    fs::path dir = fs::temp_directory_path() / "usfg_acceptance_pipeline";
    fs::remove_all(dir);
    int rc = cli::run({"pipeline", "--out-dir", dir.string(), "--seed", "0"});
    double teacher = report_value((dir / "reports/teacher_maxf.json").string());
    double student = report_value((dir / "reports/student_maxf.json").string());
    double elapsed = seconds_since(t0);
    bool ok = rc == 0 && teacher >= 0.70 && student >= teacher - 0.05 && student > teacher &&
              elapsed < 900.0;
    std::ostringstream d;
    d << "teacher held-out maxF " << teacher << " (need >= 0.70), student " << student
      << " (need > teacher); " << elapsed << "s (limit 900)";
    report(4, "student vs teacher end to end", ok, d.str());
    fs::remove_all(dir);
}

// ---------------------------------------------------------------- criterion 5

void criterion_purity() {
    auto t0 = Clock::now();
    SynthConfig scfg;
    scfg.videos = 8;
    scfg.frames_per_video = 12;
    scfg.frame_w = scfg.frame_h = 64;
    scfg.seed = 31337;
    auto vids = generate(scfg);

    // Start from masks aligned with GT, then corrupt half of them.
    std::vector<SoftMask> masks;
    std::vector<const SoftMask*> gts;
    std::vector<DatasetEntry> entries;
    for (const auto& v : vids)
        for (size_t f = 0; f < v.gt_masks.size(); ++f) {
            masks.push_back(v.gt_masks[f]);
            gts.push_back(&v.gt_masks[f]);
            DatasetEntry e;
            e.video_id = v.video.video_id;
            e.frame_index = static_cast<int64_t>(f);
            entries.push_back(std::move(e));
        }
    Rng rng(5);
    corrupt_masks(masks, 0.5, rng);
    for (size_t i = 0; i < masks.size(); ++i) entries[i].score = score_mask(masks[i]);

    auto iou_to_gt = [&](size_t i) {
        BinaryMask pred = threshold_mask(masks[i], 128);
        BinaryMask gt = threshold_mask(*gts[i], 128);
        return pixel_metrics(pred, gt).jaccard;
    };
    double full_mean = 0.0;
    for (size_t i = 0; i < masks.size(); ++i) full_mean += iou_to_gt(i);
    full_mean /= static_cast<double>(masks.size());

    auto top = select_top(entries, 0.10);
    double top_mean = 0.0;
    for (const auto& e : top) {
        // Recover the flat index of the selected entry.
        for (size_t i = 0; i < entries.size(); ++i)
            if (entries[i].video_id == e.video_id && entries[i].frame_index == e.frame_index) {
                top_mean += iou_to_gt(i);
                break;
            }
    }
    top_mean /= static_cast<double>(top.size());

    std::ostringstream d;
    d << "top-10% mean IoU " << top_mean << " vs full-set " << full_mean << "; "
      << seconds_since(t0) << "s";
    report(5, "selection purity", top_mean > full_mean && seconds_since(t0) < 60.0, d.str());
}

// ---------------------------------------------------------------- criterion 6

void criterion_performance() {
    auto t0 = Clock::now();
    set_compute_threads(1);

    // Teacher: >= 30 fps at 64x64 work resolution, single-threaded. The unit
    // of work is one video pass; cost is attributed evenly to its frames and
    // the median per-frame cost decides.
    SynthConfig scfg;
    scfg.videos = 9;
    scfg.frames_per_video = 60;  // 540 frames >= 500
    scfg.seed = 606;
    auto vids = generate(scfg);
    TeacherConfig tcfg;  // 64x64, k = 8
    std::vector<double> frame_costs;
    for (const auto& v : vids) {
        auto v0 = Clock::now();
        DiscoverResult r = discover(v.video, tcfg);
        double per = seconds_since(v0) / static_cast<double>(v.video.frames.size());
        for (size_t f = 0; f < v.video.frames.size(); ++f) frame_costs.push_back(per);
        if (r.masks.size() != v.video.frames.size()) {
            report(6, "performance gates", false, "teacher produced wrong mask count");
            return;
        }
    }
    std::sort(frame_costs.begin(), frame_costs.end());
    double teacher_median = frame_costs[frame_costs.size() / 2];
    double teacher_fps = 1.0 / teacher_median;

    // Student: <= 0.04 s/image, desk preset, single core, median over 500.
    auto params = init_params<float>(ArchDescriptor::desk(), 1);
    std::vector<double> infer_costs;
    size_t vi = 0, fi = 0;
    for (int i = 0; i < 500; ++i) {
        const Image& frame = vids[vi].video.frames[fi];
        if (++fi >= vids[vi].video.frames.size()) {
            fi = 0;
            vi = (vi + 1) % vids.size();
        }
        auto s0 = Clock::now();
        ChannelStack input = to_student_channels(frame, 128);
        SoftMask mask = predict_mask(params, input);
        infer_costs.push_back(seconds_since(s0));
        if (mask.width != 32) {
            report(6, "performance gates", false, "unexpected student output size");
            return;
        }
    }
    std::sort(infer_costs.begin(), infer_costs.end());
    double student_median = infer_costs[infer_costs.size() / 2];

    std::ostringstream d;
    d << "teacher " << teacher_fps << " fps (need >= 30), student " << student_median
      << " s/image (need <= 0.04); " << seconds_since(t0) << "s";
    report(6, "performance gates", teacher_fps >= 30.0 && student_median <= 0.04, d.str());
}

// ---------------------------------------------------------------- criterion 7

// Byte-for-byte comparison of every regular file under two directories.
bool dirs_identical(const fs::path& a, const fs::path& b, std::string& why) {
    std::vector<fs::path> rel_a, rel_b;
    for (auto& p : fs::recursive_directory_iterator(a))
        if (p.is_regular_file()) rel_a.push_back(fs::relative(p.path(), a));
    for (auto& p : fs::recursive_directory_iterator(b))
        if (p.is_regular_file()) rel_b.push_back(fs::relative(p.path(), b));
    std::sort(rel_a.begin(), rel_a.end());
    std::sort(rel_b.begin(), rel_b.end());
    if (rel_a != rel_b) {
        why = "file sets differ";
        return false;
    }
    for (const auto& rel : rel_a) {
        std::ifstream fa(a / rel, std::ios::binary), fb(b / rel, std::ios::binary);
        std::string da((std::istreambuf_iterator<char>(fa)), {});
        std::string db((std::istreambuf_iterator<char>(fb)), {});
        if (da != db) {
            why = "content differs: " + rel.string();
            return false;
        }
    }
    return true;
}

// Manifests carry absolute paths, so cross-directory comparison normalizes
// them out; everything else must match bit for bit.
void normalize_manifests(const fs::path& root, const std::string& from) {
    for (auto& p : fs::recursive_directory_iterator(root)) {
        if (!p.is_regular_file()) continue;
        auto ext = p.path().extension().string();
        if (ext != ".jsonl" && ext != ".csv" && ext != ".json") continue;
        std::ifstream in(p.path(), std::ios::binary);
        std::string data((std::istreambuf_iterator<char>(in)), {});
        in.close();
        size_t pos = 0;
        while ((pos = data.find(from, pos)) != std::string::npos) data.erase(pos, from.size());
        std::ofstream out(p.path(), std::ios::binary | std::ios::trunc);
        out << data;
    }
}

void criterion_determinism() {
    auto t0 = Clock::now();
    fs::path base = fs::temp_directory_path() / "usfg_acceptance_det";
    fs::remove_all(base);
    auto run_one = [&](const std::string& name, int workers) {
        fs::path dir = base / name;
        std::vector<std::string> args = {
            "pipeline", "--out-dir", dir.string(), "--seed", "7",
            "--workers", std::to_string(workers),
            "--synth.videos", "4", "--synth.frames", "10", "--synth.frame-size", "64",
            "--synth.holdout", "2", "--train.steps", "12", "--train.batch", "4",
        };
        int rc = cli::run(args);
        normalize_manifests(dir, dir.string());
        return rc;
    };
    int r1 = run_one("a", 1);
    int r2 = run_one("b", 1);
    int r3 = run_one("c", 3);
    std::string why1, why2;
    bool same_seed = dirs_identical(base / "a", base / "b", why1);
    bool workers_free = dirs_identical(base / "a", base / "c", why2);
    bool ok = r1 == 0 && r2 == 0 && r3 == 0 && same_seed && workers_free;
    std::ostringstream d;
    d << "same-seed rerun " << (same_seed ? "identical" : "DIFFERS (" + why1 + ")")
      << "; workers=3 " << (workers_free ? "identical" : "DIFFERS (" + why2 + ")") << "; "
      << seconds_since(t0) << "s";
    report(7, "determinism", ok, d.str());
    fs::remove_all(base);
}

// ---------------------------------------------------------------- criterion 8

void criterion_round_trips() {
    auto t0 = Clock::now();
    Rng rng(777);

    bool netpbm_ok = true;
    for (int it = 0; it < 1000; ++it) {
        int w = static_cast<int>(rng.next_int(1, 24));
        int h = static_cast<int>(rng.next_int(1, 24));
        int c = rng.next_double() < 0.5 ? 1 : 3;
        Image img(w, h, c);
        for (auto& v : img.data) v = static_cast<uint8_t>(rng.next_int(0, 255));
        if (!(decode_netpbm(encode_netpbm(img)) == img)) netpbm_ok = false;
    }

    bool manifest_ok = true;
    std::string charset = "abcdefghijklmnopqrstuvwxyz0123456789_-./ ";
    for (int it = 0; it < 1000; ++it) {
        DatasetEntry e;
        e.extra = nlohmann::json::object();  // parsed entries carry an object, not null
        int len = static_cast<int>(rng.next_int(1, 24));
        for (int i = 0; i < len; ++i)
            e.video_id += charset[rng.next_below(charset.size())];
        e.frame_index = rng.next_int(-1000, 1u << 30);
        e.image_path = e.video_id + ".ppm";
        e.mask_path = e.video_id + ".pgm";
        if (rng.next_double() < 0.7) e.score = rng.next_double(-1e6, 1e6);
        if (rng.next_double() < 0.5) e.gt_box = random_box(rng, 1000);
        if (rng.next_double() < 0.5) e.gt_mask_path = e.video_id + "_gt.pgm";
        int nb = static_cast<int>(rng.next_int(0, 3));
        for (int i = 0; i < nb; ++i) e.pred_boxes.push_back(random_box(rng, 1000));
        if (rng.next_double() < 0.3) e.extra["custom"] = rng.next_double();
        DatasetEntry back = entry_from_json(entry_to_json(e));
        if (back.video_id != e.video_id || back.frame_index != e.frame_index ||
            back.image_path != e.image_path || back.mask_path != e.mask_path ||
            back.score != e.score || back.gt_box != e.gt_box ||
            back.gt_mask_path != e.gt_mask_path || back.pred_boxes != e.pred_boxes ||
            back.extra != e.extra)
            manifest_ok = false;
    }

    bool ckpt_ok = true;
    for (int it = 0; it < 1000; ++it) {
        ArchDescriptor arch = ArchDescriptor::tiny();
        auto params = init_params<float>(arch, rng.next_u64());
        bool with_adam = rng.next_double() < 0.5;
        AdamState<float> state = AdamState<float>::make(params);
        if (with_adam) {
            state.t = static_cast<int64_t>(rng.next_int(0, 100000));
            for (auto& m : state.m)
                for (auto& v : m.data) v = static_cast<float>(rng.next_double(-10, 10));
            for (auto& vv : state.v)
                for (auto& v : vv.data) v = static_cast<float>(rng.next_double(0, 10));
        }
        auto bytes = serialize_checkpoint(params, with_adam ? &state : nullptr);
        Checkpoint back = deserialize_checkpoint(bytes);
        if (!(back.params == params)) ckpt_ok = false;
        if (with_adam) {
            if (!back.adam || back.adam->t != state.t || back.adam->m != state.m ||
                back.adam->v != state.v)
                ckpt_ok = false;
        } else if (back.adam) {
            ckpt_ok = false;
        }
        // A second encode must be byte-identical (canonical form).
        if (serialize_checkpoint(back.params, back.adam ? &*back.adam : nullptr) != bytes)
            ckpt_ok = false;
    }

    bool ok = netpbm_ok && manifest_ok && ckpt_ok;
    std::ostringstream d;
    d << "netpbm " << (netpbm_ok ? "ok" : "FAIL") << ", manifest "
      << (manifest_ok ? "ok" : "FAIL") << ", checkpoint " << (ckpt_ok ? "ok" : "FAIL")
      << " (1000 cases each); " << seconds_since(t0) << "s";
    report(8, "format round trips", ok, d.str());
}

}  // namespace

int main() {
    criterion_numerics();
    criterion_gradients();
    criterion_overfit();
    criterion_end_to_end();
    criterion_purity();
    criterion_performance();
    criterion_determinism();
    criterion_round_trips();
    if (g_failures) std::printf("%d criterion(s) FAILED\n", g_failures);
    else std::printf("all acceptance criteria passed\n");
    return g_failures ? 1 : 0;
}
