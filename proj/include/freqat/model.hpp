#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqat/io.hpp"
#include "freqat/rng.hpp"
#include "freqat/tensor.hpp"

// The fixed small CNN: conv(3x3) -> relu -> maxpool2 -> conv(3x3) -> relu ->
// maxpool2 -> flatten -> dense -> relu -> dense -> logits. The default
// architecture takes 3x32x32 inputs through 16 and 32 conv channels and a
// 128-wide hidden layer to 10 logits; the shapes are carried by the tensors
// themselves so tests can run reduced variants of the same network.

namespace freqat {

struct Architecture {
    std::size_t in_ch = 3;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t conv1_ch = 16;
    std::size_t conv2_ch = 32;
    std::size_t hidden = 128;
    std::size_t classes = 10;

    std::size_t flat_dim() const { return conv2_ch * (height / 4) * (width / 4); }

    std::string tag() const {
        return "cnn-" + std::to_string(in_ch) + "x" + std::to_string(height) + "x" +
               std::to_string(width) + "-c" + std::to_string(conv1_ch) + "-c" +
               std::to_string(conv2_ch) + "-d" + std::to_string(hidden) + "-d" +
               std::to_string(classes) + "-v1";
    }
};

struct ModelParams {
    ConvLayerParams conv1;
    ConvLayerParams conv2;
    DenseLayerParams fc1;
    DenseLayerParams fc2;
    std::string tag;
};

struct ParamGrads {
    ConvLayerParams conv1;
    ConvLayerParams conv2;
    DenseLayerParams fc1;
    DenseLayerParams fc2;
};

// Visits every parameter tensor in the fixed layer order used everywhere
// (init draws, checkpoints, optimizer state): conv1.kernels, conv1.bias,
// conv2.kernels, conv2.bias, fc1.weight, fc1.bias, fc2.weight, fc2.bias.
template <typename Params, typename Fn>
void for_each_tensor(Params& p, Fn&& fn) {
    fn(p.conv1.kernels);
    fn(p.conv1.bias);
    fn(p.conv2.kernels);
    fn(p.conv2.bias);
    fn(p.fc1.weight);
    fn(p.fc1.bias);
    fn(p.fc2.weight);
    fn(p.fc2.bias);
}

template <typename PA, typename PB, typename Fn>
void for_each_tensor_pair(PA& a, PB& b, Fn&& fn) {
    fn(a.conv1.kernels, b.conv1.kernels);
    fn(a.conv1.bias, b.conv1.bias);
    fn(a.conv2.kernels, b.conv2.kernels);
    fn(a.conv2.bias, b.conv2.bias);
    fn(a.fc1.weight, b.fc1.weight);
    fn(a.fc1.bias, b.fc1.bias);
    fn(a.fc2.weight, b.fc2.weight);
    fn(a.fc2.bias, b.fc2.bias);
}

inline ParamGrads zero_grads_like(const ModelParams& p) {
    ParamGrads g;
    g.conv1.kernels = Tensor(p.conv1.kernels.shape);
    g.conv1.bias = Tensor(p.conv1.bias.shape);
    g.conv2.kernels = Tensor(p.conv2.kernels.shape);
    g.conv2.bias = Tensor(p.conv2.bias.shape);
    g.fc1.weight = Tensor(p.fc1.weight.shape);
    g.fc1.bias = Tensor(p.fc1.bias.shape);
    g.fc2.weight = Tensor(p.fc2.weight.shape);
    g.fc2.bias = Tensor(p.fc2.bias.shape);
    return g;
}

// He initialization: every weight ~ N(0, 2/fan_in) from the seeded init
// stream, biases zero. Draw order is layer order with row-major traversal
// inside each weight tensor; biases consume no draws.
inline ModelParams init_model(std::uint64_t seed, const Architecture& arch) {
    SplitMix64 rng(derive_seed(seed, kInitStream));
    ModelParams p;
    p.tag = arch.tag();
    p.conv1.kernels = Tensor({arch.conv1_ch, arch.in_ch, 3, 3});
    p.conv1.bias = Tensor({arch.conv1_ch});
    p.conv2.kernels = Tensor({arch.conv2_ch, arch.conv1_ch, 3, 3});
    p.conv2.bias = Tensor({arch.conv2_ch});
    p.fc1.weight = Tensor({arch.hidden, arch.flat_dim()});
    p.fc1.bias = Tensor({arch.hidden});
    p.fc2.weight = Tensor({arch.classes, arch.hidden});
    p.fc2.bias = Tensor({arch.classes});

    auto fill_he = [&rng](Tensor& w, std::size_t fan_in) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (double& v : w.data) v = std_dev * rng.normal();
    };
    fill_he(p.conv1.kernels, arch.in_ch * 9);
    fill_he(p.conv2.kernels, arch.conv1_ch * 9);
    fill_he(p.fc1.weight, arch.flat_dim());
    fill_he(p.fc2.weight, arch.hidden);
    return p;
}

inline ModelParams init_model(std::uint64_t seed) { return init_model(seed, Architecture{}); }

inline Architecture arch_of(const ModelParams& p) {
    Architecture a;
    a.in_ch = p.conv1.kernels.shape[1];
    a.conv1_ch = p.conv1.kernels.shape[0];
    a.conv2_ch = p.conv2.kernels.shape[0];
    a.hidden = p.fc1.weight.shape[0];
    a.classes = p.fc2.weight.shape[0];
    // spatial extent from the flatten width: flat = conv2_ch * (H/4)^2
    const std::size_t hw = p.fc1.weight.shape[1] / a.conv2_ch;
    std::size_t side = 1;
    while (side * side < hw) ++side;
    a.height = side * 4;
    a.width = side * 4;
    return a;
}

struct ForwardCache {
    Tensor input;
    Tensor z1; // conv1 pre-activation
    PoolResult pool1;
    Tensor z2; // conv2 pre-activation
    PoolResult pool2;
    Tensor z3; // fc1 pre-activation
    Tensor a3; // relu(z3)
    Tensor logits;
};

inline Tensor flatten(const Tensor& t) {
    Tensor out({t.size()});
    out.data = t.data; // row-major [C,H,W] is already channel-major, row, column
    return out;
}

inline ForwardCache forward(const ModelParams& p, const Tensor& image) {
    if (image.shape.size() != 3 || image.shape[0] != p.conv1.kernels.shape[1])
        throw std::invalid_argument("forward: image shape " + shape_str(image.shape) +
                                    " does not match model input");
    ForwardCache c;
    c.input = image;
    c.z1 = conv2d(image, p.conv1);
    c.pool1 = maxpool2(relu(c.z1));
    c.z2 = conv2d(c.pool1.output, p.conv2);
    c.pool2 = maxpool2(relu(c.z2));
    c.z3 = dense(flatten(c.pool2.output), p.fc1);
    c.a3 = relu(c.z3);
    c.logits = dense(c.a3, p.fc2);
    return c;
}

struct BackwardResult {
    ParamGrads grads;
    Tensor grad_image;
};

inline void check_cache(const ModelParams& p, const ForwardCache& c) {
    if (c.logits.size() != p.fc2.weight.shape[0] ||
        c.z1.shape != std::vector<std::size_t>{p.conv1.kernels.shape[0], c.input.shape[1],
                                               c.input.shape[2]} ||
        c.z3.size() != p.fc1.weight.shape[0])
        throw std::invalid_argument("backward: cache does not match model");
}

inline BackwardResult backward(const ModelParams& p, const ForwardCache& c,
                               const Tensor& grad_logits) {
    check_cache(p, c);
    if (grad_logits.size() != c.logits.size())
        throw std::invalid_argument("backward: grad_logits length mismatch");
    BackwardResult r;

    DenseGrads g_fc2 = dense_grad(c.a3, p.fc2, grad_logits);
    Tensor d_z3 = relu_grad(c.z3, g_fc2.input);
    DenseGrads g_fc1 = dense_grad(flatten(c.pool2.output), p.fc1, d_z3);

    Tensor d_p2(c.pool2.output.shape);
    d_p2.data = g_fc1.input.data;
    Tensor d_a2 = maxpool2_grad(c.pool2, d_p2, c.z2.shape);
    Tensor d_z2 = relu_grad(c.z2, d_a2);
    ConvGrads g_c2 = conv2d_grad(c.pool1.output, p.conv2, d_z2);

    Tensor d_a1 = maxpool2_grad(c.pool1, g_c2.input, c.z1.shape);
    Tensor d_z1 = relu_grad(c.z1, d_a1);
    ConvGrads g_c1 = conv2d_grad(c.input, p.conv1, d_z1);

    r.grads.conv1 = std::move(g_c1.params);
    r.grads.conv2 = std::move(g_c2.params);
    r.grads.fc1 = std::move(g_fc1.params);
    r.grads.fc2 = std::move(g_fc2.params);
    r.grad_image = std::move(g_c1.input);
    return r;
}

// Image gradient without the parameter gradients; the attack inner loop only
// ever consumes this.
inline Tensor backward_image_only(const ModelParams& p, const ForwardCache& c,
                                  const Tensor& grad_logits) {
    check_cache(p, c);
    Tensor d_a3 = dense_input_grad(p.fc2, grad_logits);
    Tensor d_z3 = relu_grad(c.z3, d_a3);
    Tensor d_flat = dense_input_grad(p.fc1, d_z3);
    Tensor d_p2(c.pool2.output.shape);
    d_p2.data = d_flat.data;
    Tensor d_a2 = maxpool2_grad(c.pool2, d_p2, c.z2.shape);
    Tensor d_z2 = relu_grad(c.z2, d_a2);
    Tensor d_p1 = conv2d_input_grad(d_z2, p.conv2, c.pool1.output.shape[0],
                                    c.pool1.output.shape[1], c.pool1.output.shape[2]);
    Tensor d_a1 = maxpool2_grad(c.pool1, d_p1, c.z1.shape);
    Tensor d_z1 = relu_grad(c.z1, d_a1);
    return conv2d_input_grad(d_z1, p.conv1, c.input.shape[0], c.input.shape[1],
                             c.input.shape[2]);
}

// Argmax with ties broken toward the lowest class index.
inline int predict(const ModelParams& p, const Tensor& image) {
    const Tensor logits = forward(p, image).logits;
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
        if (logits.data[j] > logits.data[best]) best = j;
    return static_cast<int>(best);
}

// --- checkpoint file format ------------------------------------------------
//
// Everything little-endian:
//   bytes 0..6   magic "FRCKPT1"
//   u64          tag length, then that many bytes of architecture tag
//   8 tensors in the fixed layer order, each as
//     u64        rank
//     u64 x rank dims
//     f64 x n    data, row-major
// Files are written to a temporary name and renamed into place so an
// interrupted run never leaves a truncated checkpoint behind.

namespace detail {

constexpr char kCkptMagic[7] = {'F', 'R', 'C', 'K', 'P', 'T', '1'};

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit ByteReader(const std::string& b) : buf(b) {}
    void need(std::size_t n, const std::string& what) {
        if (pos + n > buf.size())
            throw std::runtime_error("checkpoint truncated while reading " + what);
    }
    std::uint64_t u64(const std::string& what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64(const std::string& what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

} // namespace detail

inline std::string serialize_checkpoint(const ModelParams& p) {
    std::string out(detail::kCkptMagic, sizeof(detail::kCkptMagic));
    detail::put_u64(out, p.tag.size());
    out += p.tag;
    for_each_tensor(p, [&out](const Tensor& t) {
        detail::put_u64(out, t.shape.size());
        for (std::size_t d : t.shape) detail::put_u64(out, d);
        for (double v : t.data) detail::put_f64(out, v);
    });
    return out;
}

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_checkpoint(p));
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < sizeof(detail::kCkptMagic) ||
        std::memcmp(buf.data(), detail::kCkptMagic, sizeof(detail::kCkptMagic)) != 0)
        throw std::runtime_error("bad checkpoint magic in " + path.string());

    detail::ByteReader r(buf);
    r.pos = sizeof(detail::kCkptMagic);
    const std::uint64_t tag_len = r.u64("tag length");
    r.need(tag_len, "tag");
    ModelParams p;
    p.tag = buf.substr(r.pos, tag_len);
    r.pos += tag_len;

    for_each_tensor(p, [&r](Tensor& t) {
        const std::uint64_t rank = r.u64("tensor rank");
        if (rank > 4) throw std::runtime_error("checkpoint tensor rank " + std::to_string(rank));
        std::vector<std::size_t> shape(rank);
        for (std::uint64_t i = 0; i < rank; ++i) {
            shape[i] = r.u64("tensor dim");
            if (shape[i] == 0) throw std::runtime_error("checkpoint tensor dim 0");
        }
        t = Tensor(shape);
        for (double& v : t.data) v = r.f64("tensor data");
    });
    if (r.pos != buf.size())
        throw std::runtime_error("trailing bytes in checkpoint " + path.string());
    return p;
}

} // namespace freqat
