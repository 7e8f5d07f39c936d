#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "freqat/tensor.hpp"

// Discrete Fourier transforms: 1-D for the regularizer on logit vectors and
// 2-D for image-plane analysis, plus centered-spectrum shifting and the
// low-pass filter used by the bandwidth sweeps.
//
// Convention (fixed, asserted by the round-trip tests): the forward
// transform is unnormalized, X[k] = sum_n x[n] e^{-2 pi i k n / N}; the
// inverse carries the 1/N factor per axis (1/N^2 in 2-D).

namespace freqat {

struct Spectrum {
    Tensor re;
    Tensor im;
};

// Direct O(N^2) evaluation; the signals this is used on are length-10 logit
// vectors, so there is nothing to gain from a fast path.
inline Spectrum dft1d(const Tensor& signal) {
    const std::size_t n = signal.size();
    Spectrum s{Tensor({n}), Tensor({n})};
    const double step = -2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        double re = 0.0, im = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = step * static_cast<double>(k) * static_cast<double>(j);
            re += signal.data[j] * std::cos(ang);
            im += signal.data[j] * std::sin(ang);
        }
        s.re.data[k] = re;
        s.im.data[k] = im;
    }
    return s;
}

// Adjoint (conjugate transpose) of the DFT matrix applied to grad_re + i
// grad_im, real part taken: g[n] = sum_k gr[k] cos(2 pi k n / N) + gi[k]
// sin(2 pi k n / N). This is the exact backpropagation rule for dft1d.
inline Tensor dft1d_adjoint(const Tensor& grad_re, const Tensor& grad_im) {
    const std::size_t n = grad_re.size();
    if (grad_im.size() != n)
        throw std::invalid_argument("dft1d_adjoint: length mismatch");
    Tensor g({n});
    const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double ang = step * static_cast<double>(k) * static_cast<double>(j);
            acc += grad_re.data[k] * std::cos(ang) + grad_im.data[k] * std::sin(ang);
        }
        g.data[j] = acc;
    }
    return g;
}

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative radix-2 Cooley-Tukey, in place. inverse=true uses the +i kernel
// and leaves the 1/N factor to the caller.
inline void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// Direct DFT along one axis for non power-of-two extents.
inline void dft_direct(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    std::vector<std::complex<double>> out(n);
    const double step = (inverse ? 2.0 : -2.0) * std::numbers::pi / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double ang = step * static_cast<double>(k) * static_cast<double>(j);
            acc += a[j] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    a = std::move(out);
}

inline void transform_axis(std::vector<std::complex<double>>& a, bool inverse) {
    if (is_pow2(a.size()))
        fft_pow2(a, inverse);
    else
        dft_direct(a, inverse);
}

// Row-column decomposition over an H x W plane held as complex values.
inline void transform2d(std::vector<std::complex<double>>& buf, std::size_t H,
                        std::size_t W, bool inverse) {
    std::vector<std::complex<double>> line;
    for (std::size_t y = 0; y < H; ++y) {
        line.assign(buf.begin() + static_cast<std::ptrdiff_t>(y * W),
                    buf.begin() + static_cast<std::ptrdiff_t>((y + 1) * W));
        transform_axis(line, inverse);
        for (std::size_t x = 0; x < W; ++x) buf[y * W + x] = line[x];
    }
    for (std::size_t x = 0; x < W; ++x) {
        line.resize(H);
        for (std::size_t y = 0; y < H; ++y) line[y] = buf[y * W + x];
        transform_axis(line, inverse);
        for (std::size_t y = 0; y < H; ++y) buf[y * W + x] = line[y];
    }
}

} // namespace detail

inline Spectrum fft2d(const Tensor& plane) {
    if (plane.shape.size() != 2)
        throw std::invalid_argument("fft2d: plane must be 2-D");
    const std::size_t H = plane.shape[0], W = plane.shape[1];
    std::vector<std::complex<double>> buf(H * W);
    for (std::size_t i = 0; i < H * W; ++i) buf[i] = plane.data[i];
    detail::transform2d(buf, H, W, false);
    Spectrum s{Tensor({H, W}), Tensor({H, W})};
    for (std::size_t i = 0; i < H * W; ++i) {
        s.re.data[i] = buf[i].real();
        s.im.data[i] = buf[i].imag();
    }
    return s;
}

struct Ifft2dResult {
    Tensor plane;         // real part
    double max_imag_abs;  // largest |imaginary residue| dropped
};

inline Ifft2dResult ifft2d(const Spectrum& s) {
    if (!s.re.same_shape(s.im) || s.re.shape.size() != 2)
        throw std::invalid_argument("ifft2d: spectrum planes must be equal 2-D shapes");
    const std::size_t H = s.re.shape[0], W = s.re.shape[1];
    std::vector<std::complex<double>> buf(H * W);
    for (std::size_t i = 0; i < H * W; ++i) buf[i] = {s.re.data[i], s.im.data[i]};
    detail::transform2d(buf, H, W, true);
    const double scale = 1.0 / (static_cast<double>(H) * static_cast<double>(W));
    Ifft2dResult r{Tensor({H, W}), 0.0};
    for (std::size_t i = 0; i < H * W; ++i) {
        r.plane.data[i] = buf[i].real() * scale;
        const double im = std::abs(buf[i].imag() * scale);
        if (im > r.max_imag_abs) r.max_imag_abs = im;
    }
    return r;
}

namespace detail {

inline Tensor roll2d(const Tensor& t, std::size_t dy, std::size_t dx) {
    const std::size_t H = t.shape[0], W = t.shape[1];
    Tensor out({H, W});
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x)
            out((y + dy) % H, (x + dx) % W) = t(y, x);
    return out;
}

} // namespace detail

// Moves the DC coefficient to the center: circular rotation by floor(N/2)
// along each axis.
inline Spectrum fftshift2d(const Spectrum& s) {
    const std::size_t H = s.re.shape[0], W = s.re.shape[1];
    return {detail::roll2d(s.re, H / 2, W / 2), detail::roll2d(s.im, H / 2, W / 2)};
}

// Exact inverse of fftshift2d for every extent, odd included.
inline Spectrum ifftshift2d(const Spectrum& s) {
    const std::size_t H = s.re.shape[0], W = s.re.shape[1];
    return {detail::roll2d(s.re, H - H / 2, W - W / 2),
            detail::roll2d(s.im, H - H / 2, W - W / 2)};
}

struct LpfBandwidth {
    std::size_t b;
};

namespace detail {

// Centered b x b patch of an N-point axis: rows/cols in [lo, lo+b) with
// lo = N/2 - b/2 (for odd b this is N/2 - (b-1)/2). b == N keeps everything.
inline void lpf_mask_bounds(std::size_t n, std::size_t b, std::size_t& lo, std::size_t& hi) {
    lo = n / 2 - b / 2;
    hi = lo + b;
}

inline Tensor lpf_plane(const Tensor& plane, std::size_t b) {
    const std::size_t N = plane.shape[0];
    Spectrum s = fftshift2d(fft2d(plane));
    std::size_t rlo, rhi, clo, chi;
    lpf_mask_bounds(plane.shape[0], b, rlo, rhi);
    lpf_mask_bounds(plane.shape[1], b, clo, chi);
    for (std::size_t y = 0; y < plane.shape[0]; ++y) {
        for (std::size_t x = 0; x < plane.shape[1]; ++x) {
            const bool keep = y >= rlo && y < rhi && x >= clo && x < chi;
            if (!keep) {
                s.re(y, x) = 0.0;
                s.im(y, x) = 0.0;
            }
        }
    }
    (void)N;
    return ifft2d(ifftshift2d(s)).plane;
}

} // namespace detail

// Low-pass filter per channel, no clamping. Exposed because the identity and
// idempotence properties hold exactly only before the [0,1] clamp.
inline Tensor lpf_unclamped(const Tensor& image, LpfBandwidth bandwidth) {
    if (image.shape.size() != 3)
        throw std::invalid_argument("lpf: image must be [C,N,N]");
    const std::size_t C = image.shape[0], H = image.shape[1], W = image.shape[2];
    if (H != W)
        throw std::invalid_argument("lpf: planes must be square");
    if (bandwidth.b < 1 || bandwidth.b > H)
        throw std::invalid_argument("lpf: bandwidth " + std::to_string(bandwidth.b) +
                                    " out of range [1," + std::to_string(H) + "]");
    Tensor out({C, H, W});
    for (std::size_t c = 0; c < C; ++c) {
        Tensor plane({H, W});
        for (std::size_t i = 0; i < H * W; ++i) plane.data[i] = image.data[c * H * W + i];
        Tensor filtered = detail::lpf_plane(plane, bandwidth.b);
        for (std::size_t i = 0; i < H * W; ++i) out.data[c * H * W + i] = filtered.data[i];
    }
    return out;
}

// Filtered images are fed back into the model, whose input domain is [0,1],
// so the public path clamps.
inline Tensor lpf(const Tensor& image, LpfBandwidth bandwidth) {
    Tensor out = lpf_unclamped(image, bandwidth);
    for (double& v : out.data) v = std::min(1.0, std::max(0.0, v));
    return out;
}

} // namespace freqat
