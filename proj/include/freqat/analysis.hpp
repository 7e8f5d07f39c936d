#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqat/attacks.hpp"
#include "freqat/data.hpp"
#include "freqat/io.hpp"
#include "freqat/model.hpp"
#include "freqat/parallel.hpp"
#include "freqat/spectral.hpp"
#include "freqat/training.hpp"

// The three frequency-domain analyses: low-pass bandwidth sweeps, first-layer
// kernel smoothness, and natural-vs-adversarial spectrum difference maps.

namespace freqat {

struct SweepRow {
    std::size_t bandwidth = 0;
    double clean_acc = 0.0;
    double robust_acc = 0.0;
};

// Accuracy after low-pass filtering the inputs. Adversarial examples are by
// default generated against the unfiltered model on the unfiltered inputs
// and the filter applied afterwards, i.e. the LPF acts as a test-time input
// pre-processing stage. With adaptive=true the attack instead runs on the
// already-filtered image.
inline std::vector<SweepRow> lpf_sweep(const ModelParams& params, const Dataset& ds,
                                       const std::vector<std::size_t>& bandwidths,
                                       const std::optional<AttackConfig>& attack_cfg,
                                       std::uint64_t seed, bool adaptive = false,
                                       std::size_t workers = 1) {
    const std::size_t n = ds.size();
    const std::uint64_t attack_seed = derive_seed(seed, kAttackStream);

    // The non-adaptive protocol reuses one adversarial example per image
    // across all bandwidths.
    std::vector<Tensor> adv;
    if (attack_cfg && !adaptive) {
        adv.resize(n);
        parallel_chunks(n, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i)
                adv[i] = pgd(params, ds.images[i], ds.labels[i], *attack_cfg,
                             derive_seed(attack_seed, i));
        });
    }

    std::vector<SweepRow> rows;
    for (const std::size_t b : bandwidths) {
        SweepRow row;
        row.bandwidth = b;
        const std::size_t chunks = chunk_count(n);
        std::vector<std::size_t> clean_hits(chunks, 0), robust_hits(chunks, 0);
        parallel_chunks(n, workers, [&](std::size_t c, std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const Tensor filtered = lpf(ds.images[i], {b});
                if (predict(params, filtered) == ds.labels[i]) ++clean_hits[c];
                if (attack_cfg) {
                    Tensor adv_input;
                    if (adaptive)
                        adv_input = pgd(params, filtered, ds.labels[i], *attack_cfg,
                                        derive_seed(derive_seed(attack_seed, b), i));
                    else
                        adv_input = lpf(adv[i], {b});
                    if (predict(params, adv_input) == ds.labels[i]) ++robust_hits[c];
                }
            }
        });
        std::size_t clean = 0, robust = 0;
        for (std::size_t c = 0; c < chunks; ++c) {
            clean += clean_hits[c];
            robust += robust_hits[c];
        }
        row.clean_acc = static_cast<double>(clean) / static_cast<double>(n);
        row.robust_acc = attack_cfg ? static_cast<double>(robust) / static_cast<double>(n) : 0.0;
        rows.push_back(row);
    }
    return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows, std::uint64_t seed) {
    std::string out = csv_seed_line(seed);
    out += "bandwidth,clean_acc,robust_acc\n";
    for (const SweepRow& r : rows)
        out += std::to_string(r.bandwidth) + "," + format_double(r.clean_acc) + "," +
               format_double(r.robust_acc) + "\n";
    return out;
}

// Mean absolute difference between spatially adjacent weights, horizontal
// and vertical pairs, normalized by the pair count. A constant kernel scores
// exactly 0.
inline double kernel_tv(const Tensor& kernel) {
    if (kernel.shape.size() != 2)
        throw std::invalid_argument("kernel_tv: kernel must be 2-D");
    const std::size_t kh = kernel.shape[0], kw = kernel.shape[1];
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t y = 0; y < kh; ++y)
        for (std::size_t x = 0; x + 1 < kw; ++x) {
            sum += std::abs(kernel(y, x) - kernel(y, x + 1));
            ++pairs;
        }
    for (std::size_t y = 0; y + 1 < kh; ++y)
        for (std::size_t x = 0; x < kw; ++x) {
            sum += std::abs(kernel(y, x) - kernel(y + 1, x));
            ++pairs;
        }
    return pairs == 0 ? 0.0 : sum / static_cast<double>(pairs);
}

struct KernelScore {
    std::size_t out_ch = 0;
    std::size_t in_ch = 0;
    double tv = 0.0;
};

struct SmoothnessReport {
    std::vector<KernelScore> scores; // one per first-layer spatial slice
    double mean = 0.0;
    double stddev = 0.0;
};

// Total-variation score of every first-layer kernel slice; the first layer
// is the one that looks at the image, so its smoothness tracks the model's
// frequency bias.
inline SmoothnessReport smoothness_report(const ModelParams& params) {
    const Tensor& k = params.conv1.kernels;
    const std::size_t out_ch = k.shape[0], in_ch = k.shape[1], kh = k.shape[2], kw = k.shape[3];
    SmoothnessReport rep;
    for (std::size_t oc = 0; oc < out_ch; ++oc) {
        for (std::size_t ic = 0; ic < in_ch; ++ic) {
            Tensor slice({kh, kw});
            for (std::size_t y = 0; y < kh; ++y)
                for (std::size_t x = 0; x < kw; ++x) slice(y, x) = k(oc, ic, y, x);
            rep.scores.push_back({oc, ic, kernel_tv(slice)});
        }
    }
    double sum = 0.0;
    for (const KernelScore& s : rep.scores) sum += s.tv;
    rep.mean = rep.scores.empty() ? 0.0 : sum / static_cast<double>(rep.scores.size());
    double var = 0.0;
    for (const KernelScore& s : rep.scores) var += (s.tv - rep.mean) * (s.tv - rep.mean);
    rep.stddev = rep.scores.empty()
                     ? 0.0
                     : std::sqrt(var / static_cast<double>(rep.scores.size()));
    return rep;
}

inline std::string smoothness_csv(const SmoothnessReport& rep, std::uint64_t seed) {
    std::string out = csv_seed_line(seed);
    out += "out_channel,in_channel,tv\n";
    for (const KernelScore& s : rep.scores)
        out += std::to_string(s.out_ch) + "," + std::to_string(s.in_ch) + "," +
               format_double(s.tv) + "\n";
    return out;
}

// Centered spectral difference map: per channel the complex magnitude of the
// shifted spectrum difference, averaged over channels and normalized to
// [0,1] by its maximum (an all-zero map stays all-zero). Low frequency ends
// up at the center.
inline Tensor spectrum_diff(const Tensor& x, const Tensor& x_adv) {
    if (!x.same_shape(x_adv))
        throw std::invalid_argument("spectrum_diff: shape mismatch");
    const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    Tensor map({H, W});
    for (std::size_t c = 0; c < C; ++c) {
        Tensor pa({H, W}), pb({H, W});
        for (std::size_t i = 0; i < H * W; ++i) {
            pa.data[i] = x.data[c * H * W + i];
            pb.data[i] = x_adv.data[c * H * W + i];
        }
        const Spectrum sa = fftshift2d(fft2d(pa));
        const Spectrum sb = fftshift2d(fft2d(pb));
        for (std::size_t i = 0; i < H * W; ++i) {
            const double dre = sa.re.data[i] - sb.re.data[i];
            const double dim = sa.im.data[i] - sb.im.data[i];
            map.data[i] += std::hypot(dre, dim);
        }
    }
    double maxv = 0.0;
    for (double& v : map.data) {
        v /= static_cast<double>(C);
        maxv = std::max(maxv, v);
    }
    if (maxv > 0.0)
        for (double& v : map.data) v /= maxv;
    return map;
}

// Fraction of the map's energy (sum of squares) inside the centered
// N/2 x N/2 patch; a uniform map scores exactly the 0.25 area fraction.
inline double low_freq_energy_fraction(const Tensor& map) {
    const std::size_t H = map.shape[0], W = map.shape[1];
    const std::size_t rlo = H / 4, rhi = rlo + H / 2;
    const std::size_t clo = W / 4, chi = clo + W / 2;
    double inside = 0.0, total = 0.0;
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
            const double e = map(y, x) * map(y, x);
            total += e;
            if (y >= rlo && y < rhi && x >= clo && x < chi) inside += e;
        }
    return total == 0.0 ? 0.0 : inside / total;
}

// Binary PGM ("P5"), maxval 255, values quantized by round-half-up. The
// optional comment goes into the header as a standard '#' line.
inline std::string pgm_bytes(const Tensor& grid, const std::string& comment = "") {
    if (grid.shape.size() != 2)
        throw std::invalid_argument("export_pgm: grid must be 2-D");
    for (double v : grid.data)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("export_pgm: values must lie in [0,1]");
    const std::size_t H = grid.shape[0], W = grid.shape[1];
    std::string out = "P5\n";
    if (!comment.empty()) out += "# " + comment + "\n";
    out += std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    for (double v : grid.data)
        out.push_back(static_cast<char>(
            static_cast<unsigned char>(std::floor(v * 255.0 + 0.5))));
    return out;
}

inline void export_pgm(const Tensor& grid, const std::filesystem::path& path,
                       const std::string& comment = "") {
    write_file_atomic(path, pgm_bytes(grid, comment));
}

} // namespace freqat
