#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "usfg/image.hpp"
#include "usfg/rng.hpp"
#include "usfg/tensor.hpp"

namespace usfg {

// Fixed topology: conv x2, maxpool(2), conv x2, maxpool(2), conv x3, ReLU after
// every conv; then the final features, the raw input stack and a mid-level tap
// (all resized to the output grid) are concatenated and mapped by one fully
// connected layer to output_size^2 linear values.
struct ArchDescriptor {
    int input_size = 128;
    int input_channels = 7;
    std::vector<int> conv_channels = {8, 8, 16, 16, 32, 32, 32};
    int kernel = 3;
    int skip_conv = 2;  // conv index (0-based) whose output feeds the skip branch

    int output_size() const { return input_size / 4; }
    int output_count() const { return output_size() * output_size(); }
    int concat_channels() const {
        return conv_channels[6] + input_channels + conv_channels[skip_conv];
    }
    int concat_dim() const { return concat_channels() * output_count(); }

    // Spatial side of conv i's output.
    int conv_spatial(int i) const {
        return i < 2 ? input_size : (i < 4 ? input_size / 2 : input_size / 4);
    }
    int conv_in_channels(int i) const {
        return i == 0 ? input_channels : conv_channels[i - 1];
    }

    void validate() const {
        if (conv_channels.size() != 7)
            throw ConfigError("arch: expected 7 conv layers");
        if (input_size % 4 != 0 || input_size < 4)
            throw ConfigError("arch: input_size must be a positive multiple of 4");
        if (kernel != 3) throw ConfigError("arch: only 3x3 kernels are supported");
        if (skip_conv < 0 || skip_conv > 6) throw ConfigError("arch: bad skip_conv");
    }

    static ArchDescriptor desk() { return {}; }
    static ArchDescriptor paper() {
        ArchDescriptor a;
        a.conv_channels = {32, 32, 64, 64, 128, 128, 128};
        return a;
    }
    // 8x8 variant used by the finite-difference gradient checks.
    static ArchDescriptor tiny() {
        ArchDescriptor a;
        a.input_size = 8;
        a.conv_channels = {2, 2, 3, 3, 4, 4, 4};
        return a;
    }
    bool operator==(const ArchDescriptor&) const = default;
};

template <typename T>
struct NetworkParams {
    ArchDescriptor arch;
    std::vector<Tensor<T>> conv_w;  // {out_ch, in_ch, k, k}
    std::vector<Tensor<T>> conv_b;  // {out_ch}
    Tensor<T> fc_w;                 // {output_count, concat_dim}
    Tensor<T> fc_b;                 // {output_count}

    bool operator==(const NetworkParams&) const = default;
};

// Visits every parameter tensor in a fixed order with a stable name; the
// checkpoint format and the Adam state layout both follow this order.
template <typename T, typename Fn>
void for_each_tensor(NetworkParams<T>& p, Fn fn) {
    for (int i = 0; i < 7; ++i) {
        fn("conv" + std::to_string(i + 1) + ".w", p.conv_w[i]);
        fn("conv" + std::to_string(i + 1) + ".b", p.conv_b[i]);
    }
    fn("fc.w", p.fc_w);
    fn("fc.b", p.fc_b);
}

template <typename T>
NetworkParams<T> zero_params(const ArchDescriptor& arch) {
    arch.validate();
    NetworkParams<T> p;
    p.arch = arch;
    for (int i = 0; i < 7; ++i) {
        p.conv_w.emplace_back(std::vector<int>{arch.conv_channels[i], arch.conv_in_channels(i),
                                               arch.kernel, arch.kernel});
        p.conv_b.emplace_back(std::vector<int>{arch.conv_channels[i]});
    }
    p.fc_w = Tensor<T>({arch.output_count(), arch.concat_dim()});
    p.fc_b = Tensor<T>({arch.output_count()});
    return p;
}

// Glorot-uniform weights, zero biases, fully determined by the seed.
template <typename T>
NetworkParams<T> init_params(const ArchDescriptor& arch, uint64_t seed) {
    NetworkParams<T> p = zero_params<T>(arch);
    Rng rng(hash_u64(seed, 0x75736667ULL));
    for (int i = 0; i < 7; ++i) {
        int fan_in = arch.conv_in_channels(i) * arch.kernel * arch.kernel;
        int fan_out = arch.conv_channels[i] * arch.kernel * arch.kernel;
        double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (T& w : p.conv_w[i].data)
            w = static_cast<T>(rng.next_double(-limit, limit));
    }
    double limit = std::sqrt(6.0 / (arch.concat_dim() + arch.output_count()));
    for (T& w : p.fc_w.data) w = static_cast<T>(rng.next_double(-limit, limit));
    return p;
}

// --- resize plan (half-pixel-center bilinear, shared with imagery) ---

template <typename T>
struct ResizePlan {
    int src_w = 0, src_h = 0, dst_w = 0, dst_h = 0;
    // Per destination pixel: 4 source indices and weights.
    std::vector<int> src_idx;  // 4 * dst pixels
    std::vector<T> weight;     // 4 * dst pixels

    ResizePlan() = default;
    ResizePlan(int sw, int sh, int dw, int dh) : src_w(sw), src_h(sh), dst_w(dw), dst_h(dh) {
        auto axis = [](int i, int dst_n, int src_n, int& i0, int& i1, double& f) {
            double s = (i + 0.5) * static_cast<double>(src_n) / dst_n - 0.5;
            s = std::clamp(s, 0.0, static_cast<double>(src_n - 1));
            i0 = std::min(static_cast<int>(s), std::max(src_n - 2, 0));
            i1 = src_n == 1 ? 0 : i0 + 1;
            f = src_n == 1 ? 0.0 : s - i0;
        };
        src_idx.resize(static_cast<size_t>(dw) * dh * 4);
        weight.resize(static_cast<size_t>(dw) * dh * 4);
        for (int y = 0; y < dh; ++y) {
            int y0, y1;
            double fy;
            axis(y, dh, sh, y0, y1, fy);
            for (int x = 0; x < dw; ++x) {
                int x0, x1;
                double fx;
                axis(x, dw, sw, x0, x1, fx);
                size_t b = (static_cast<size_t>(y) * dw + x) * 4;
                src_idx[b + 0] = y0 * sw + x0;
                src_idx[b + 1] = y0 * sw + x1;
                src_idx[b + 2] = y1 * sw + x0;
                src_idx[b + 3] = y1 * sw + x1;
                weight[b + 0] = static_cast<T>((1 - fx) * (1 - fy));
                weight[b + 1] = static_cast<T>(fx * (1 - fy));
                weight[b + 2] = static_cast<T>((1 - fx) * fy);
                weight[b + 3] = static_cast<T>(fx * fy);
            }
        }
    }

    void forward(const T* src, T* dst) const {
        size_t n = static_cast<size_t>(dst_w) * dst_h;
        for (size_t d = 0; d < n; ++d) {
            size_t b = d * 4;
            dst[d] = weight[b] * src[src_idx[b]] + weight[b + 1] * src[src_idx[b + 1]] +
                     weight[b + 2] * src[src_idx[b + 2]] + weight[b + 3] * src[src_idx[b + 3]];
        }
    }

    // Transpose: scatter destination gradients back onto the source plane.
    void backward(const T* gdst, T* gsrc_accum) const {
        size_t n = static_cast<size_t>(dst_w) * dst_h;
        for (size_t d = 0; d < n; ++d) {
            size_t b = d * 4;
            for (int i = 0; i < 4; ++i) gsrc_accum[src_idx[b + i]] += weight[b + i] * gdst[d];
        }
    }
};

// --- forward / backward ---

template <typename T>
struct ForwardCache {
    Tensor<T> input;                    // {N, C, S, S}
    std::vector<Tensor<T>> conv_out;    // 7 post-ReLU activations
    Tensor<T> pool_out[2];
    std::vector<int> pool_idx[2];       // flat argmax index into the pooled input
    Tensor<T> input_resized;            // {N, C_in, out, out}
    Tensor<T> skip_resized;             // {N, C_skip, out, out}
    Tensor<T> concat;                   // {N, concat_channels, out, out}
    Tensor<T> output;                   // {N, output_count}
};

namespace detail {

// Copies every (n, c) plane into an (s+2) x (s+2) zero-padded buffer so the
// 3x3 kernels run without boundary branches.
template <typename T>
void pad_planes(const Tensor<T>& t, std::vector<T>& padded) {
    const int n_planes = t.dims[0] * t.dims[1], s = t.dims[2];
    const int ps = s + 2;
    padded.assign(static_cast<size_t>(n_planes) * ps * ps, T(0));
    for (int p = 0; p < n_planes; ++p) {
        const T* src = t.data.data() + static_cast<size_t>(p) * s * s;
        T* dst = padded.data() + static_cast<size_t>(p) * ps * ps + ps + 1;
        for (int y = 0; y < s; ++y)
            std::copy(src + static_cast<size_t>(y) * s, src + static_cast<size_t>(y + 1) * s,
                      dst + static_cast<size_t>(y) * ps);
    }
}

// Dot product with eight explicit accumulators so the compiler can vectorize
// without reassociating a single serial sum. The order is fixed, so results
// stay deterministic.
template <typename T>
inline T dot8(const T* __restrict a, const T* __restrict b, int n) {
    T s[8] = {};
    const int n8 = n & ~7;
    for (int i = 0; i < n8; i += 8)
        for (int k = 0; k < 8; ++k) s[k] += a[i + k] * b[i + k];
    T r = ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
    for (int i = n8; i < n; ++i) r += a[i] * b[i];
    return r;
}

// One padded input plane accumulated into an output plane with a 3x3 kernel.
template <typename T>
inline void accum_3x3(const T* __restrict pin, const T* __restrict wk, T* __restrict out,
                      int s) {
    const int ps = s + 2;
    const T w0 = wk[0], w1 = wk[1], w2 = wk[2];
    const T w3 = wk[3], w4 = wk[4], w5 = wk[5];
    const T w6 = wk[6], w7 = wk[7], w8 = wk[8];
    for (int y = 0; y < s; ++y) {
        const T* __restrict p0 = pin + static_cast<size_t>(y) * ps;
        const T* __restrict p1 = p0 + ps;
        const T* __restrict p2 = p1 + ps;
        T* __restrict o = out + static_cast<size_t>(y) * s;
        for (int x = 0; x < s; ++x) {
            o[x] += w0 * p0[x] + w1 * p0[x + 1] + w2 * p0[x + 2] + w3 * p1[x] +
                    w4 * p1[x + 1] + w5 * p1[x + 2] + w6 * p2[x] + w7 * p2[x + 1] +
                    w8 * p2[x + 2];
        }
    }
}

template <typename T>
void conv3x3_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b,
                     Tensor<T>& out) {
    const int n_batch = in.dims[0], ci_n = in.dims[1], s = in.dims[2];
    const int co_n = w.dims[0];
    const size_t plane = static_cast<size_t>(s) * s;
    const size_t pplane = static_cast<size_t>(s + 2) * (s + 2);
    static thread_local std::vector<T> padded_store;
    pad_planes(in, padded_store);
    // Plain pointer so the omp region shares the calling thread's buffer.
    const T* padded = padded_store.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
        for (int co = 0; co < co_n; ++co) {
            T* oplane = out.data.data() + (static_cast<size_t>(n) * co_n + co) * plane;
            std::fill(oplane, oplane + plane, b.data[co]);
            for (int ci = 0; ci < ci_n; ++ci) {
                accum_3x3(padded + (static_cast<size_t>(n) * ci_n + ci) * pplane,
                          w.data.data() + (static_cast<size_t>(co) * ci_n + ci) * 9, oplane,
                          s);
            }
            for (size_t i = 0; i < plane; ++i)
                if (oplane[i] < T(0)) oplane[i] = T(0);  // ReLU
        }
    }
}

// gin may be null for the first layer. ReLU backward is applied by the caller.
template <typename T>
void conv3x3_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& gout,
                      Tensor<T>& gw, Tensor<T>& gb, Tensor<T>* gin) {
    const int n_batch = in.dims[0], ci_n = in.dims[1], s = in.dims[2];
    const int co_n = w.dims[0];
    const size_t plane = static_cast<size_t>(s) * s;
    const int ps = s + 2;
    const size_t pplane = static_cast<size_t>(ps) * ps;
    static thread_local std::vector<T> padded_in_store;
    pad_planes(in, padded_in_store);
    const T* padded_in = padded_in_store.data();

#pragma omp parallel for schedule(static)
    for (int co = 0; co < co_n; ++co) {
        T acc = 0;
        for (int n = 0; n < n_batch; ++n) {
            const T* gplane = gout.data.data() + (static_cast<size_t>(n) * co_n + co) * plane;
            for (size_t i = 0; i < plane; ++i) acc += gplane[i];
        }
        gb.data[co] += acc;
    }

    // Weight gradients: nine shifted dot products in a single pass.
#pragma omp parallel for collapse(2) schedule(static)
    for (int co = 0; co < co_n; ++co) {
        for (int ci = 0; ci < ci_n; ++ci) {
            T acc[9] = {};
            for (int n = 0; n < n_batch; ++n) {
                const T* gplane =
                    gout.data.data() + (static_cast<size_t>(n) * co_n + co) * plane;
                const T* pin =
                    padded_in + (static_cast<size_t>(n) * ci_n + ci) * pplane;
                for (int y = 0; y < s; ++y) {
                    const T* __restrict grow = gplane + static_cast<size_t>(y) * s;
                    const T* prow = pin + static_cast<size_t>(y) * ps;
                    for (int t = 0; t < 9; ++t)
                        acc[t] += dot8(grow, prow + (t / 3) * ps + t % 3, s);
                }
            }
            T* wk = gw.data.data() + (static_cast<size_t>(co) * ci_n + ci) * 9;
            for (int t = 0; t < 9; ++t) wk[t] += acc[t];
        }
    }

    if (!gin) return;
    // Input gradients: full correlation of the padded output gradient with the
    // flipped kernel; same fused form as the forward pass.
    static thread_local std::vector<T> padded_g_store;
    pad_planes(gout, padded_g_store);
    const T* padded_g = padded_g_store.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < n_batch; ++n) {
        for (int ci = 0; ci < ci_n; ++ci) {
            T* giplane = gin->data.data() + (static_cast<size_t>(n) * ci_n + ci) * plane;
            std::fill(giplane, giplane + plane, T(0));
            for (int co = 0; co < co_n; ++co) {
                const T* wk = w.data.data() + (static_cast<size_t>(co) * ci_n + ci) * 9;
                T flipped[9];
                for (int t = 0; t < 9; ++t) flipped[t] = wk[8 - t];
                accum_3x3(padded_g + (static_cast<size_t>(n) * co_n + co) * pplane,
                          flipped, giplane, s);
            }
        }
    }
}

template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<int>& idx) {
    const int n_batch = in.dims[0], c_n = in.dims[1], s = in.dims[2];
    const int os = s / 2;
    ensure_shape(out, {n_batch, c_n, os, os});
    idx.assign(out.count(), 0);
    size_t o = 0;
    for (int n = 0; n < n_batch; ++n) {
        for (int c = 0; c < c_n; ++c) {
            const T* plane = in.data.data() + (static_cast<size_t>(n) * c_n + c) * s * s;
            size_t base = (static_cast<size_t>(n) * c_n + c) * s * s;
            for (int y = 0; y < os; ++y) {
                for (int x = 0; x < os; ++x, ++o) {
                    // Scan-order argmax; ties go to the first index.
                    size_t best = static_cast<size_t>(2 * y) * s + 2 * x;
                    T bv = plane[best];
                    const size_t cand[3] = {best + 1, best + s, best + s + 1};
                    for (size_t ci : cand) {
                        if (plane[ci] > bv) {
                            bv = plane[ci];
                            best = ci;
                        }
                    }
                    out.data[o] = bv;
                    idx[o] = static_cast<int>(base + best);
                }
            }
        }
    }
}

template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& act) {
    for (size_t i = 0; i < grad.data.size(); ++i)
        if (act.data[i] <= T(0)) grad.data[i] = T(0);
}

}  // namespace detail

template <typename T>
void forward(const NetworkParams<T>& params, const Tensor<T>& input, ForwardCache<T>& cache) {
    const ArchDescriptor& arch = params.arch;
    const int n_batch = input.dims[0];
    if (input.dims.size() != 4 || input.dims[1] != arch.input_channels ||
        input.dims[2] != arch.input_size || input.dims[3] != arch.input_size)
        throw ArgumentError("forward: input shape does not match the architecture");

    cache.input = input;
    cache.conv_out.resize(7);
    const Tensor<T>* cur = &cache.input;
    for (int i = 0; i < 7; ++i) {
        int s = arch.conv_spatial(i);
        ensure_shape(cache.conv_out[i], {n_batch, arch.conv_channels[i], s, s});
        detail::conv3x3_forward(*cur, params.conv_w[i], params.conv_b[i], cache.conv_out[i]);
        if (i == 1 || i == 3) {
            int p = i == 1 ? 0 : 1;
            detail::maxpool2_forward(cache.conv_out[i], cache.pool_out[p], cache.pool_idx[p]);
            cur = &cache.pool_out[p];
        } else {
            cur = &cache.conv_out[i];
        }
    }

    const int os = arch.output_size();
    const size_t oplane = static_cast<size_t>(os) * os;

    // Skip branches, resized onto the output grid.
    const int in_s = arch.input_size;
    const int skip_s = arch.conv_spatial(arch.skip_conv);
    static thread_local ResizePlan<T> in_plan, skip_plan;
    if (in_plan.src_w != in_s || in_plan.dst_w != os) in_plan = ResizePlan<T>(in_s, in_s, os, os);
    if (skip_plan.src_w != skip_s || skip_plan.dst_w != os)
        skip_plan = ResizePlan<T>(skip_s, skip_s, os, os);

    ensure_shape(cache.input_resized, {n_batch, arch.input_channels, os, os});
    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < arch.input_channels; ++c)
            in_plan.forward(
                input.data.data() + (static_cast<size_t>(n) * arch.input_channels + c) * in_s * in_s,
                cache.input_resized.data.data() +
                    (static_cast<size_t>(n) * arch.input_channels + c) * oplane);

    const Tensor<T>& skip_src = cache.conv_out[arch.skip_conv];
    const int skip_c = arch.conv_channels[arch.skip_conv];
    ensure_shape(cache.skip_resized, {n_batch, skip_c, os, os});
    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < skip_c; ++c)
            skip_plan.forward(
                skip_src.data.data() + (static_cast<size_t>(n) * skip_c + c) * skip_s * skip_s,
                cache.skip_resized.data.data() + (static_cast<size_t>(n) * skip_c + c) * oplane);

    // Concat along channels: [conv7, resized input, resized skip].
    const int c7 = arch.conv_channels[6];
    const int cc = arch.concat_channels();
    ensure_shape(cache.concat, {n_batch, cc, os, os});
    for (int n = 0; n < n_batch; ++n) {
        T* dst = cache.concat.data.data() + static_cast<size_t>(n) * cc * oplane;
        const T* p7 = cache.conv_out[6].data.data() + static_cast<size_t>(n) * c7 * oplane;
        std::copy(p7, p7 + c7 * oplane, dst);
        const T* pi = cache.input_resized.data.data() +
                      static_cast<size_t>(n) * arch.input_channels * oplane;
        std::copy(pi, pi + arch.input_channels * oplane, dst + c7 * oplane);
        const T* ps = cache.skip_resized.data.data() + static_cast<size_t>(n) * skip_c * oplane;
        std::copy(ps, ps + skip_c * oplane,
                  dst + (c7 + arch.input_channels) * static_cast<size_t>(oplane));
    }

    // Fully connected head; outputs stay linear (clamping happens at inference).
    const int out_n = arch.output_count();
    const int in_dim = arch.concat_dim();
    ensure_shape(cache.output, {n_batch, out_n});
    // o-major so the weight matrix streams through memory exactly once.
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_n; ++o) {
        const T* __restrict w = params.fc_w.data.data() + static_cast<size_t>(o) * in_dim;
        for (int n = 0; n < n_batch; ++n) {
            const T* __restrict x = cache.concat.data.data() + static_cast<size_t>(n) * in_dim;
            cache.output.data[static_cast<size_t>(n) * out_n + o] =
                params.fc_b.data[o] + detail::dot8(w, x, in_dim);
        }
    }
}

// Eq-style batch loss: mean over examples of the per-pixel squared error sum.
// Targets are expected in the rescaled [0,1] domain.
template <typename T>
double loss_value(const Tensor<T>& preds, const Tensor<T>& targets) {
    double total = 0.0;
    for (size_t i = 0; i < preds.data.size(); ++i) {
        double d = static_cast<double>(preds.data[i]) - static_cast<double>(targets.data[i]);
        total += d * d;
    }
    return total / preds.dims[0];
}

template <typename T>
void backward(const NetworkParams<T>& params, const ForwardCache<T>& cache,
              const Tensor<T>& targets, NetworkParams<T>& grads) {
    const ArchDescriptor& arch = params.arch;
    const int n_batch = cache.input.dims[0];
    const int out_n = arch.output_count();
    const int in_dim = arch.concat_dim();
    const int os = arch.output_size();
    const size_t oplane = static_cast<size_t>(os) * os;

    static thread_local Tensor<T> gout;
    ensure_shape(gout, {n_batch, out_n});
    const T scale = T(2) / T(n_batch);
    for (size_t i = 0; i < gout.data.size(); ++i)
        gout.data[i] = scale * (cache.output.data[i] - targets.data[i]);
    // Plain pointers so omp regions share the calling thread's buffers.
    const T* gout_p = gout.data.data();

    // FC backward.
#pragma omp parallel for schedule(static)
    for (int o = 0; o < out_n; ++o) {
        T acc = 0;
        for (int n = 0; n < n_batch; ++n) acc += gout_p[static_cast<size_t>(n) * out_n + o];
        grads.fc_b.data[o] += acc;
    }
    // Weight gradient, blocked over the input dimension so each gradient row
    // streams through memory once and the batch activations stay cache
    // resident. Chunks own disjoint columns, so this is deterministic too.
    {
        constexpr int kChunk = 4096;
        const int n_chunks = (in_dim + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(static)
        for (int c = 0; c < n_chunks; ++c) {
            const int i0 = c * kChunk, i1 = std::min(in_dim, i0 + kChunk);
            for (int o = 0; o < out_n; ++o) {
                T* __restrict gw = grads.fc_w.data.data() + static_cast<size_t>(o) * in_dim;
                for (int n = 0; n < n_batch; ++n) {
                    const T g = gout_p[static_cast<size_t>(n) * out_n + o];
                    const T* __restrict x =
                        cache.concat.data.data() + static_cast<size_t>(n) * in_dim;
                    for (int i = i0; i < i1; ++i) gw[i] += g * x[i];
                }
            }
        }
    }
    // Input gradient, split over fixed index blocks: threads own disjoint
    // slices, so the result is identical for any worker count and the weight
    // matrix streams through memory once.
    static thread_local Tensor<T> gconcat;
    ensure_shape(gconcat, {n_batch, arch.concat_channels(), os, os});
    gconcat.zero();
    T* gconcat_p = gconcat.data.data();
    constexpr int kBlocks = 16;
#pragma omp parallel for schedule(static)
    for (int blk = 0; blk < kBlocks; ++blk) {
        const int i0 = static_cast<int>(static_cast<int64_t>(in_dim) * blk / kBlocks);
        const int i1 = static_cast<int>(static_cast<int64_t>(in_dim) * (blk + 1) / kBlocks);
        for (int o = 0; o < out_n; ++o) {
            const T* __restrict w = params.fc_w.data.data() + static_cast<size_t>(o) * in_dim;
            for (int n = 0; n < n_batch; ++n) {
                T g = gout_p[static_cast<size_t>(n) * out_n + o];
                T* __restrict gx = gconcat_p + static_cast<size_t>(n) * in_dim;
                for (int i = i0; i < i1; ++i) gx[i] += g * w[i];
            }
        }
    }

    // Split the concat gradient.
    const int c7 = arch.conv_channels[6];
    const int skip_c = arch.conv_channels[arch.skip_conv];
    const int cc = arch.concat_channels();
    static thread_local Tensor<T> g7, gskip;
    ensure_shape(g7, {n_batch, c7, os, os});
    ensure_shape(gskip, {n_batch, skip_c, os, os});
    for (int n = 0; n < n_batch; ++n) {
        const T* src = gconcat.data.data() + static_cast<size_t>(n) * cc * oplane;
        std::copy(src, src + c7 * oplane, g7.data.data() + static_cast<size_t>(n) * c7 * oplane);
        const T* ss = src + (c7 + arch.input_channels) * static_cast<size_t>(oplane);
        std::copy(ss, ss + skip_c * oplane,
                  gskip.data.data() + static_cast<size_t>(n) * skip_c * oplane);
    }
    // The resized-raw-input slice carries no trainable parameters upstream.

    // Skip resize backward into the tap's activation gradient.
    const int skip_s = arch.conv_spatial(arch.skip_conv);
    ResizePlan<T> skip_plan(skip_s, skip_s, os, os);
    static thread_local Tensor<T> gskip_src;
    ensure_shape(gskip_src, {n_batch, skip_c, skip_s, skip_s});
    gskip_src.zero();
    for (int n = 0; n < n_batch; ++n)
        for (int c = 0; c < skip_c; ++c)
            skip_plan.backward(
                gskip.data.data() + (static_cast<size_t>(n) * skip_c + c) * oplane,
                gskip_src.data.data() +
                    (static_cast<size_t>(n) * skip_c + c) * static_cast<size_t>(skip_s) * skip_s);

    // Conv chain backward, pools after conv2 and conv4.
    Tensor<T> g = std::move(g7);
    for (int i = 6; i >= 0; --i) {
        detail::relu_backward_inplace(g, cache.conv_out[i]);
        const Tensor<T>* in;
        if (i == 0)
            in = &cache.input;
        else if (i == 2)
            in = &cache.pool_out[0];
        else if (i == 4)
            in = &cache.pool_out[1];
        else
            in = &cache.conv_out[i - 1];

        if (i == 0) {
            detail::conv3x3_backward(*in, params.conv_w[i], g, grads.conv_w[i],
                                     grads.conv_b[i], static_cast<Tensor<T>*>(nullptr));
            break;
        }
        Tensor<T> gin(in->dims);
        detail::conv3x3_backward(*in, params.conv_w[i], g, grads.conv_w[i], grads.conv_b[i],
                                 &gin);
        if (i == 2 || i == 4) {
            // Pool backward: route each gradient to its argmax source.
            int p = i == 2 ? 0 : 1;
            const Tensor<T>& pooled_in = cache.conv_out[i - 1];
            Tensor<T> gprev(pooled_in.dims);
            for (size_t o = 0; o < gin.data.size(); ++o)
                gprev.data[cache.pool_idx[p][o]] += gin.data[o];
            g = std::move(gprev);
        } else {
            g = std::move(gin);
        }
        if (i - 1 == arch.skip_conv) {
            for (size_t j = 0; j < g.data.size(); ++j) g.data[j] += gskip_src.data[j];
        }
    }
}

// --- Adam ---

template <typename T>
struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;

    static AdamState make(const NetworkParams<T>& params) {
        AdamState s;
        auto& p = const_cast<NetworkParams<T>&>(params);
        for_each_tensor(p, [&](const std::string&, Tensor<T>& t_) {
            s.m.emplace_back(t_.dims);
            s.v.emplace_back(t_.dims);
        });
        return s;
    }
};

template <typename T>
void adam_step(NetworkParams<T>& params, NetworkParams<T>& grads, AdamState<T>& state) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    size_t slot = 0;
    std::vector<std::pair<std::string, Tensor<T>*>> gts;
    for_each_tensor(grads, [&](const std::string& name, Tensor<T>& t_) {
        gts.emplace_back(name, &t_);
    });
    for_each_tensor(params, [&](const std::string& name, Tensor<T>& theta) {
        Tensor<T>& g = *gts[slot].second;
        Tensor<T>& m = state.m[slot];
        Tensor<T>& v = state.v[slot];
        for (size_t i = 0; i < theta.data.size(); ++i) {
            double gi = static_cast<double>(g.data[i]);
            if (!std::isfinite(gi))
                throw Error("adam_step: non-finite gradient in " + name + " at index " +
                            std::to_string(i));
            double mi = state.beta1 * m.data[i] + (1.0 - state.beta1) * gi;
            double vi = state.beta2 * v.data[i] + (1.0 - state.beta2) * gi * gi;
            m.data[i] = static_cast<T>(mi);
            v.data[i] = static_cast<T>(vi);
            double mhat = mi / bc1;
            double vhat = vi / bc2;
            theta.data[i] =
                static_cast<T>(theta.data[i] - state.lr * mhat / (std::sqrt(vhat) + state.eps));
        }
        ++slot;
    });
}

// --- inference helpers ---

template <typename T>
Tensor<T> pack_inputs(const std::vector<const ChannelStack*>& stacks) {
    if (stacks.empty()) throw ArgumentError("pack_inputs: empty batch");
    const int s = stacks[0]->width;
    Tensor<T> t({static_cast<int>(stacks.size()), ChannelStack::kPlanes, s, s});
    size_t per = static_cast<size_t>(ChannelStack::kPlanes) * s * s;
    for (size_t n = 0; n < stacks.size(); ++n)
        for (size_t i = 0; i < per; ++i)
            t.data[n * per + i] = static_cast<T>(stacks[n]->data[i]);
    return t;
}

template <typename T>
Tensor<T> pack_targets(const std::vector<const SoftMask*>& masks, int out_count) {
    Tensor<T> t({static_cast<int>(masks.size()), out_count});
    for (size_t n = 0; n < masks.size(); ++n)
        for (int i = 0; i < out_count; ++i)
            t.data[n * out_count + i] = static_cast<T>(masks[n]->data[i] / 255.0);
    return t;
}

// Clamp to [0,1], scale to 0-255 and quantize; inference-only nonlinearity.
inline SoftMask predict_mask(const NetworkParams<float>& params, const ChannelStack& input) {
    ForwardCache<float> cache;
    forward(params, pack_inputs<float>({&input}), cache);
    const int os = params.arch.output_size();
    SoftMask mask(os, os);
    for (int i = 0; i < os * os; ++i) {
        float v = std::clamp(cache.output.data[i], 0.0f, 1.0f);
        mask.data[i] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    return mask;
}

}  // namespace usfg
