#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqat/rng.hpp"
#include "freqat/tensor.hpp"

// CIFAR-10 ingestion (canonical binary distribution), seeded splitting and
// subsetting, horizontal flip, and a synthetic frequency-structured dataset
// for fast tests. Pixels live in [0,1] with no mean/std normalization, so
// epsilon = 8/255 keeps its raw-pixel meaning.

namespace freqat {

struct Dataset {
    std::vector<Tensor> images; // each [3,32,32] (or synth-sized), values in [0,1]
    std::vector<int> labels;
    int class_count = 10;

    std::size_t size() const { return images.size(); }
};

// One record is 3073 bytes: a label byte then 3072 pixel bytes, channel-major
// (R plane, G plane, B plane), row-major within each plane. Pixels map to
// [0,1] by /255. File and record order are preserved.
inline void load_cifar10_file(const std::filesystem::path& path, Dataset& out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open CIFAR-10 file " + path.string());
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    constexpr std::size_t kRecord = 3073;
    if (buf.empty() || buf.size() % kRecord != 0)
        throw std::runtime_error("file size of " + path.string() + " (" +
                                 std::to_string(buf.size()) +
                                 ") is not a multiple of 3073");
    const std::size_t n = buf.size() / kRecord;
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec =
            reinterpret_cast<const unsigned char*>(buf.data()) + r * kRecord;
        const int label = rec[0];
        if (label > 9)
            throw std::runtime_error("record " + std::to_string(r) + " of " + path.string() +
                                     " has label byte " + std::to_string(label) + " > 9");
        Tensor img({3, 32, 32});
        for (std::size_t i = 0; i < 3072; ++i)
            img.data[i] = static_cast<double>(rec[1 + i]) / 255.0;
        out.images.push_back(std::move(img));
        out.labels.push_back(label);
    }
}

inline Dataset load_cifar10_train(const std::filesystem::path& dir) {
    Dataset ds;
    for (int i = 1; i <= 5; ++i)
        load_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), ds);
    return ds;
}

inline Dataset load_cifar10_test(const std::filesystem::path& dir) {
    Dataset ds;
    load_cifar10_file(dir / "test_batch.bin", ds);
    return ds;
}

// Round-trips with load_cifar10_file; pixel = round-half-up of 255 * value.
inline std::string serialize_cifar_records(const Dataset& ds) {
    std::string out;
    out.reserve(ds.size() * 3073);
    for (std::size_t r = 0; r < ds.size(); ++r) {
        out.push_back(static_cast<char>(ds.labels[r]));
        for (double v : ds.images[r].data) {
            const int byte = static_cast<int>(std::floor(v * 255.0 + 0.5));
            out.push_back(static_cast<char>(std::min(255, std::max(0, byte))));
        }
    }
    return out;
}

// Seeded shuffle of indices; the first floor(ratio * n) go to the first
// split. Disjoint and exhaustive by construction.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw std::invalid_argument("split: ratio must be in (0,1)");
    SplitMix64 rng(derive_seed(seed, kDataStream));
    const std::vector<std::size_t> order = shuffled_indices(ds.size(), rng);
    const std::size_t n_first = static_cast<std::size_t>(
        std::floor(ratio * static_cast<double>(ds.size())));
    Dataset a, b;
    a.class_count = b.class_count = ds.class_count;
    for (std::size_t i = 0; i < order.size(); ++i) {
        Dataset& dst = i < n_first ? a : b;
        dst.images.push_back(ds.images[order[i]]);
        dst.labels.push_back(ds.labels[order[i]]);
    }
    return {std::move(a), std::move(b)};
}

// Uniform per-class sample without replacement, seeded.
inline Dataset take_subset(const Dataset& ds, std::size_t per_class, std::uint64_t seed) {
    if (per_class < 1) throw std::invalid_argument("take_subset: per_class must be >= 1");
    std::vector<std::vector<std::size_t>> by_class(ds.class_count);
    for (std::size_t i = 0; i < ds.size(); ++i)
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    SplitMix64 rng(derive_seed(seed, kDataStream));
    Dataset out;
    out.class_count = ds.class_count;
    for (int c = 0; c < ds.class_count; ++c) {
        auto& pool = by_class[static_cast<std::size_t>(c)];
        if (pool.size() < per_class)
            throw std::runtime_error("take_subset: class " + std::to_string(c) + " has only " +
                                     std::to_string(pool.size()) + " examples, need " +
                                     std::to_string(per_class));
        const std::vector<std::size_t> order = shuffled_indices(pool.size(), rng);
        for (std::size_t k = 0; k < per_class; ++k) {
            out.images.push_back(ds.images[pool[order[k]]]);
            out.labels.push_back(ds.labels[pool[order[k]]]);
        }
    }
    return out;
}

inline Tensor hflip(const Tensor& img) {
    const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    Tensor out(img.shape);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                out(c, y, x) = img(c, y, W - 1 - x);
    return out;
}

// Class frequency table for the synthetic dataset: (fx, fy) cycles across
// the 32x32 plane, spread from near-DC to near-Nyquist so that shrinking a
// low-pass bandwidth knocks out the higher classes one after another.
inline constexpr std::size_t kSynthSide = 32;
inline constexpr int kSynthFreq[10][2] = {{1, 0}, {0, 2}, {2, 2}, {3, 1}, {4, 4},
                                          {6, 2}, {7, 5}, {9, 3}, {11, 6}, {13, 9}};

// Each image is a single 2-D sinusoid at its class frequency pair with a
// per-image random phase, plus uniform noise of amplitude 0.1, clamped to
// [0,1]. With zero noise the spectrum is a pure tone at the class bin pair,
// so classes are separable by spectral energy alone.
inline Dataset synth_dataset(std::size_t n_per_class, int classes, std::uint64_t seed,
                             double noise_amplitude = 0.1) {
    if (classes < 2 || classes > 10)
        throw std::invalid_argument("synth_dataset: classes must be in [2,10]");
    SplitMix64 rng(derive_seed(seed, kDataStream));
    constexpr std::size_t N = kSynthSide;
    Dataset ds;
    ds.class_count = classes;
    for (int c = 0; c < classes; ++c) {
        const double fx = kSynthFreq[c][0], fy = kSynthFreq[c][1];
        for (std::size_t k = 0; k < n_per_class; ++k) {
            const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
            Tensor img({3, N, N});
            for (std::size_t ch = 0; ch < 3; ++ch) {
                for (std::size_t y = 0; y < N; ++y) {
                    for (std::size_t x = 0; x < N; ++x) {
                        const double ang = 2.0 * std::numbers::pi *
                                               (fx * static_cast<double>(x) +
                                                fy * static_cast<double>(y)) /
                                               static_cast<double>(N) +
                                           phase;
                        double v = 0.5 + 0.35 * std::cos(ang);
                        if (noise_amplitude > 0.0)
                            v += rng.uniform(-noise_amplitude, noise_amplitude);
                        img(ch, y, x) = std::min(1.0, std::max(0.0, v));
                    }
                }
            }
            ds.images.push_back(std::move(img));
            ds.labels.push_back(c);
        }
    }
    return ds;
}

} // namespace freqat
