#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

// Dense double-precision tensors plus the forward/gradient rules for the five
// layer primitives the fixed CNN is made of. There is no autodiff graph:
// every gradient is handwritten and the model module composes them by hand.
// All functions are pure; identical inputs give bit-identical outputs.

namespace freqat {

struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data; // row-major

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(count(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape))
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    std::size_t size() const { return data.size(); }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data[(i * shape[1] + j) * shape[2] + k];
    }
    double& operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data[((i * shape[1] + j) * shape[2] + k) * shape[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

struct ConvLayerParams {
    Tensor kernels; // [out_ch, in_ch, kh, kw]
    Tensor bias;    // [out_ch]
};

struct DenseLayerParams {
    Tensor weight; // [out_dim, in_dim]
    Tensor bias;   // [out_dim]
};

// --- conv2d: 3x3 cross-correlation, zero padding 1, stride 1 ------------

// Per output element the accumulation order is bias, then (in_ch, ky, kx)
// ascending; the test oracle sums in the same order so results compare
// bit-exactly.
inline Tensor conv2d(const Tensor& input, const ConvLayerParams& p) {
    if (input.shape.size() != 3)
        throw std::invalid_argument("conv2d: input must be [C,H,W]");
    const std::size_t in_ch = input.shape[0], H = input.shape[1], W = input.shape[2];
    const std::size_t out_ch = p.kernels.shape[0];
    const std::size_t kh = p.kernels.shape[2], kw = p.kernels.shape[3];
    if (p.kernels.shape[1] != in_ch)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(in_ch) +
                                    " != kernel in_ch " + std::to_string(p.kernels.shape[1]));
    if (H < kh || W < kw)
        throw std::invalid_argument("conv2d: input spatial dims smaller than kernel");
    const std::ptrdiff_t pad = 1;

    Tensor out({out_ch, H, W});
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        double* oplane = &out.data[oc * H * W];
        const double b = p.bias(oc);
        for (std::size_t i = 0; i < H * W; ++i) oplane[i] = b;
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            const double* iplane = &input.data[ic * H * W];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double w = p.kernels(oc, ic, ky, kx);
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                    const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? H - static_cast<std::size_t>(dy) : H;
                    const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                    const std::size_t x1 = dx > 0 ? W - static_cast<std::size_t>(dx) : W;
                    for (std::size_t y = y0; y < y1; ++y) {
                        double* orow = oplane + y * W;
                        const double* irow = iplane + (y + dy) * W + dx;
                        for (std::size_t x = x0; x < x1; ++x)
                            orow[x] += w * irow[x];
                    }
                }
            }
        }
    }
    return out;
}

struct ConvGrads {
    Tensor input;           // d loss / d input
    ConvLayerParams params; // d loss / d (kernels, bias)
};

inline ConvGrads conv2d_grad(const Tensor& input, const ConvLayerParams& p,
                             const Tensor& upstream) {
    const std::size_t in_ch = input.shape[0], H = input.shape[1], W = input.shape[2];
    const std::size_t out_ch = p.kernels.shape[0];
    const std::size_t kh = p.kernels.shape[2], kw = p.kernels.shape[3];
    if (upstream.shape != std::vector<std::size_t>{out_ch, H, W})
        throw std::invalid_argument("conv2d_grad: upstream shape " + shape_str(upstream.shape) +
                                    " does not match output shape");
    const std::ptrdiff_t pad = 1;

    ConvGrads g;
    g.input = Tensor({in_ch, H, W});
    g.params.kernels = Tensor(p.kernels.shape);
    g.params.bias = Tensor(p.bias.shape);

    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const double* uplane = &upstream.data[oc * H * W];
        double bsum = 0.0;
        for (std::size_t i = 0; i < H * W; ++i) bsum += uplane[i];
        g.params.bias(oc) = bsum;

        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            const double* iplane = &input.data[ic * H * W];
            double* giplane = &g.input.data[ic * H * W];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double w = p.kernels(oc, ic, ky, kx);
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                    const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? H - static_cast<std::size_t>(dy) : H;
                    const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                    const std::size_t x1 = dx > 0 ? W - static_cast<std::size_t>(dx) : W;
                    double ksum = 0.0;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const double* urow = uplane + y * W;
                        const double* irow = iplane + (y + dy) * W + dx;
                        double* girow = giplane + (y + dy) * W + dx;
                        for (std::size_t x = x0; x < x1; ++x) {
                            ksum += urow[x] * irow[x];
                            girow[x] += w * urow[x];
                        }
                    }
                    g.params.kernels(oc, ic, ky, kx) = ksum;
                }
            }
        }
    }
    return g;
}

// Input gradient alone; attacks need nothing else and skipping the kernel
// outer products roughly halves the backward cost.
inline Tensor conv2d_input_grad(const Tensor& upstream, const ConvLayerParams& p,
                                std::size_t in_ch, std::size_t H, std::size_t W) {
    const std::size_t out_ch = p.kernels.shape[0];
    const std::size_t kh = p.kernels.shape[2], kw = p.kernels.shape[3];
    const std::ptrdiff_t pad = 1;
    Tensor gi({in_ch, H, W});
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        const double* uplane = &upstream.data[oc * H * W];
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            double* giplane = &gi.data[ic * H * W];
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double w = p.kernels(oc, ic, ky, kx);
                    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
                    const std::size_t y0 = dy < 0 ? static_cast<std::size_t>(-dy) : 0;
                    const std::size_t y1 = dy > 0 ? H - static_cast<std::size_t>(dy) : H;
                    const std::size_t x0 = dx < 0 ? static_cast<std::size_t>(-dx) : 0;
                    const std::size_t x1 = dx > 0 ? W - static_cast<std::size_t>(dx) : W;
                    for (std::size_t y = y0; y < y1; ++y) {
                        const double* urow = uplane + y * W;
                        double* girow = giplane + (y + dy) * W + dx;
                        for (std::size_t x = x0; x < x1; ++x)
                            girow[x] += w * urow[x];
                    }
                }
            }
        }
    }
    return gi;
}

// --- relu ----------------------------------------------------------------

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.data)
        if (v < 0.0) v = 0.0;
    return out;
}

// Subgradient 0 at exactly 0.
inline Tensor relu_grad(const Tensor& input, const Tensor& upstream) {
    if (!input.same_shape(upstream))
        throw std::invalid_argument("relu_grad: shape mismatch");
    Tensor out = Tensor::zeros_like(input);
    for (std::size_t i = 0; i < input.size(); ++i)
        if (input.data[i] > 0.0) out.data[i] = upstream.data[i];
    return out;
}

// --- maxpool2: 2x2 non-overlapping max -----------------------------------

struct PoolResult {
    Tensor output;                   // [C, H/2, W/2]
    std::vector<std::size_t> argmax; // flat input index per output element
};

// Ties are broken by the first maximal position in row-major scan order of
// the 2x2 window.
inline PoolResult maxpool2(const Tensor& input) {
    if (input.shape.size() != 3)
        throw std::invalid_argument("maxpool2: input must be [C,H,W]");
    const std::size_t C = input.shape[0], H = input.shape[1], W = input.shape[2];
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("maxpool2: spatial dims must be even, got " +
                                    shape_str(input.shape));
    PoolResult r;
    r.output = Tensor({C, H / 2, W / 2});
    r.argmax.resize(r.output.size());
    std::size_t o = 0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; y += 2) {
            for (std::size_t x = 0; x < W; x += 2) {
                std::size_t best = (c * H + y) * W + x;
                double bv = input.data[best];
                const std::size_t cand[3] = {(c * H + y) * W + x + 1,
                                             (c * H + y + 1) * W + x,
                                             (c * H + y + 1) * W + x + 1};
                for (std::size_t k = 0; k < 3; ++k) {
                    if (input.data[cand[k]] > bv) {
                        bv = input.data[cand[k]];
                        best = cand[k];
                    }
                }
                r.output.data[o] = bv;
                r.argmax[o] = best;
                ++o;
            }
        }
    }
    return r;
}

inline Tensor maxpool2_grad(const PoolResult& pooled, const Tensor& upstream,
                            const std::vector<std::size_t>& input_shape) {
    if (upstream.shape != pooled.output.shape)
        throw std::invalid_argument("maxpool2_grad: upstream shape mismatch");
    Tensor gi(input_shape);
    for (std::size_t o = 0; o < upstream.size(); ++o)
        gi.data[pooled.argmax[o]] += upstream.data[o];
    return gi;
}

// --- dense ---------------------------------------------------------------

inline Tensor dense(const Tensor& input, const DenseLayerParams& p) {
    const std::size_t out_dim = p.weight.shape[0], in_dim = p.weight.shape[1];
    if (input.size() != in_dim)
        throw std::invalid_argument("dense: input length " + std::to_string(input.size()) +
                                    " != in_dim " + std::to_string(in_dim));
    Tensor out({out_dim});
    for (std::size_t o = 0; o < out_dim; ++o) {
        const double* wrow = &p.weight.data[o * in_dim];
        double acc = p.bias(o);
        for (std::size_t i = 0; i < in_dim; ++i) acc += wrow[i] * input.data[i];
        out(o) = acc;
    }
    return out;
}

struct DenseGrads {
    Tensor input;
    DenseLayerParams params;
};

inline DenseGrads dense_grad(const Tensor& input, const DenseLayerParams& p,
                             const Tensor& upstream) {
    const std::size_t out_dim = p.weight.shape[0], in_dim = p.weight.shape[1];
    if (input.size() != in_dim || upstream.size() != out_dim)
        throw std::invalid_argument("dense_grad: length mismatch");
    DenseGrads g;
    g.input = Tensor({in_dim});
    g.params.weight = Tensor(p.weight.shape);
    g.params.bias = Tensor(p.bias.shape);
    for (std::size_t o = 0; o < out_dim; ++o) {
        const double u = upstream.data[o];
        const double* wrow = &p.weight.data[o * in_dim];
        double* gwrow = &g.params.weight.data[o * in_dim];
        for (std::size_t i = 0; i < in_dim; ++i) {
            gwrow[i] = u * input.data[i];
            g.input.data[i] += wrow[i] * u;
        }
        g.params.bias(o) = u;
    }
    return g;
}

inline Tensor dense_input_grad(const DenseLayerParams& p, const Tensor& upstream) {
    const std::size_t out_dim = p.weight.shape[0], in_dim = p.weight.shape[1];
    if (upstream.size() != out_dim)
        throw std::invalid_argument("dense_input_grad: length mismatch");
    Tensor gi({in_dim});
    for (std::size_t o = 0; o < out_dim; ++o) {
        const double u = upstream.data[o];
        const double* wrow = &p.weight.data[o * in_dim];
        for (std::size_t i = 0; i < in_dim; ++i) gi.data[i] += wrow[i] * u;
    }
    return gi;
}

// --- softmax cross-entropy -----------------------------------------------

struct CeResult {
    double loss;
    Tensor grad_logits;
};

inline CeResult softmax_cross_entropy(const Tensor& logits, int label) {
    const std::size_t C = logits.size();
    if (label < 0 || static_cast<std::size_t>(label) >= C)
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                    " out of range [0," + std::to_string(C) + ")");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits.data) m = std::max(m, v);
    double sum = 0.0;
    CeResult r;
    r.grad_logits = Tensor({C});
    for (std::size_t j = 0; j < C; ++j) {
        const double e = std::exp(logits.data[j] - m);
        r.grad_logits.data[j] = e;
        sum += e;
    }
    for (std::size_t j = 0; j < C; ++j) r.grad_logits.data[j] /= sum;
    r.loss = std::log(sum) - (logits.data[static_cast<std::size_t>(label)] - m);
    r.grad_logits.data[static_cast<std::size_t>(label)] -= 1.0;
    return r;
}

// Softmax probabilities alone (used by the on-probabilities FR variant).
inline Tensor softmax(const Tensor& logits) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : logits.data) m = std::max(m, v);
    Tensor p({logits.size()});
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        p.data[j] = std::exp(logits.data[j] - m);
        sum += p.data[j];
    }
    for (double& v : p.data) v /= sum;
    return p;
}

// Backprop of grad_p through p = softmax(z): g_z = p .* (g_p - <g_p, p>).
inline Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs) {
    double dot = 0.0;
    for (std::size_t j = 0; j < probs.size(); ++j) dot += grad_probs.data[j] * probs.data[j];
    Tensor gz({probs.size()});
    for (std::size_t j = 0; j < probs.size(); ++j)
        gz.data[j] = probs.data[j] * (grad_probs.data[j] - dot);
    return gz;
}

} // namespace freqat
