#include <cmath>

#include "gradcheck.h"
#include "xrf/layers.h"
#include "xrf/losses.h"
#include "xrf/models.h"
#include "xrf/ops.h"
#include "xrf/rng.h"

namespace xrf::testing {

namespace {

std::int64_t extent(std::mt19937_64& rng, std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1)));
}

GradCheckResult check(const std::function<Tensor()>& f, const std::vector<Tensor>& wrt, std::mt19937_64& rng) {
    const auto seed = rng();
    return check_gradients([&] { return weighted_sum(f(), seed); }, wrt);
}

GradCheckResult check_module(Module& m, const Tensor& x, bool training, std::mt19937_64& rng) {
    TensorList params, buffers;
    m.collect("", params, buffers);
    std::vector<Tensor> wrt{x};
    for (auto& p : params) wrt.push_back(p.tensor);
    const auto dropout_seed = rng();
    return check(
        [&] {
            auto drng = std::mt19937_64(dropout_seed);
            ForwardContext ctx;
            ctx.training = training;
            ctx.rng = &drng;
            return m.forward(x, ctx);
        },
        wrt, rng);
}

// A pair of broadcast-compatible shapes: some axes of `b` collapse to 1 and
// leading axes may be dropped.
std::pair<Shape, Shape> broadcast_pair(std::mt19937_64& rng) {
    const auto rank = extent(rng, 1, 3);
    Shape a(static_cast<std::size_t>(rank));
    for (auto& d : a) d = extent(rng, 1, 4);
    Shape b = a;
    for (auto& d : b)
        if (uniform01(rng) < 0.4) d = 1;
    if (b.size() > 1 && uniform01(rng) < 0.3) b.erase(b.begin());
    if (uniform01(rng) < 0.5) std::swap(a, b);
    return {a, b};
}

std::vector<GradCase> make_op_cases() {
    std::vector<GradCase> c;
    c.push_back({"add", [](auto& rng) {
                     auto [sa, sb] = broadcast_pair(rng);
                     auto a = random_tensor(sa, rng), b = random_tensor(sb, rng);
                     return check([&] { return add(a, b); }, {a, b}, rng);
                 }});
    c.push_back({"sub", [](auto& rng) {
                     auto [sa, sb] = broadcast_pair(rng);
                     auto a = random_tensor(sa, rng), b = random_tensor(sb, rng);
                     return check([&] { return sub(a, b); }, {a, b}, rng);
                 }});
    c.push_back({"mul", [](auto& rng) {
                     auto [sa, sb] = broadcast_pair(rng);
                     auto a = random_tensor(sa, rng), b = random_tensor(sb, rng);
                     return check([&] { return mul(a, b); }, {a, b}, rng);
                 }});
    c.push_back({"scale", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 4), extent(rng, 1, 5)}, rng);
                     const double f = uniform(rng, -3.0, 3.0);
                     return check([&] { return scale(x, f); }, {x}, rng);
                 }});
    c.push_back({"add_scalar", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 6)}, rng);
                     const double v = uniform(rng, -3.0, 3.0);
                     return check([&] { return add_scalar(x, v); }, {x}, rng);
                 }});
    c.push_back({"neg", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 1, 4)}, rng);
                     return check([&] { return neg(x); }, {x}, rng);
                 }});
    c.push_back({"relu", [](auto& rng) {
                     auto x = random_nonzero({extent(rng, 1, 4), extent(rng, 1, 6)}, rng);
                     return check([&] { return relu(x); }, {x}, rng);
                 }});
    c.push_back({"gelu", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 4), extent(rng, 1, 6)}, rng, -3.0, 3.0);
                     return check([&] { return gelu(x); }, {x}, rng);
                 }});
    c.push_back({"sigmoid", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 4), extent(rng, 1, 6)}, rng, -6.0, 6.0);
                     return check([&] { return sigmoid(x); }, {x}, rng);
                 }});
    c.push_back({"exp", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 8)}, rng, -2.0, 2.0);
                     return check([&] { return exp(x); }, {x}, rng);
                 }});
    c.push_back({"log", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 8)}, rng, 0.2, 3.0);
                     return check([&] { return log(x); }, {x}, rng);
                 }});
    c.push_back({"matmul", [](auto& rng) {
                     const auto m = extent(rng, 1, 4), k = extent(rng, 1, 4), n = extent(rng, 1, 4);
                     auto a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
                     return check([&] { return matmul(a, b); }, {a, b}, rng);
                 }});
    c.push_back({"matmul_batched", [](auto& rng) {
                     const auto bt = extent(rng, 1, 3), m = extent(rng, 1, 3), k = extent(rng, 1, 4),
                                n = extent(rng, 1, 3);
                     auto a = random_tensor({bt, m, k}, rng), b = random_tensor({bt, k, n}, rng);
                     return check([&] { return matmul(a, b); }, {a, b}, rng);
                 }});
    c.push_back({"sum", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 1, 3), extent(rng, 1, 3)}, rng);
                     std::vector<int> axes;
                     for (int a = 0; a < 3; ++a)
                         if (uniform01(rng) < 0.5) axes.push_back(a);
                     const bool keep = uniform01(rng) < 0.5;
                     return check([&] { return sum(x, axes, keep); }, {x}, rng);
                 }});
    c.push_back({"mean", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 1, 3), extent(rng, 1, 3)}, rng);
                     std::vector<int> axes;
                     for (int a = 0; a < 3; ++a)
                         if (uniform01(rng) < 0.5) axes.push_back(a - 3);
                     const bool keep = uniform01(rng) < 0.5;
                     return check([&] { return mean(x, axes, keep); }, {x}, rng);
                 }});
    c.push_back({"max", [](auto& rng) {
                     auto x = random_distinct({extent(rng, 1, 3), extent(rng, 1, 4), extent(rng, 1, 3)}, rng);
                     std::vector<int> axes{static_cast<int>(uniform_index(rng, 3))};
                     const bool keep = uniform01(rng) < 0.5;
                     return check([&] { return max(x, axes, keep); }, {x}, rng);
                 }});
    c.push_back({"reshape", [](auto& rng) {
                     const auto a = extent(rng, 1, 4), b = extent(rng, 1, 4);
                     auto x = random_tensor({a, b, 2}, rng);
                     return check([&] { return reshape(x, {2 * b, a}); }, {x}, rng);
                 }});
    c.push_back({"permute", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 1, 3), extent(rng, 1, 3)}, rng);
                     std::vector<int> axes{0, 1, 2};
                     std::shuffle(axes.begin(), axes.end(), rng);
                     return check([&] { return permute(x, axes); }, {x}, rng);
                 }});
    c.push_back({"softmax", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 4), extent(rng, 1, 6)}, rng, -3.0, 3.0);
                     return check([&] { return softmax(x); }, {x}, rng);
                 }});
    c.push_back({"layer_norm", [](auto& rng) {
                     const auto d = extent(rng, 2, 6);
                     auto x = random_tensor({extent(rng, 1, 4), d}, rng, -2.0, 2.0);
                     auto g = random_tensor({d}, rng, 0.5, 1.5), s = random_tensor({d}, rng);
                     return check([&] { return layer_norm(x, g, s, 1e-5); }, {x, g, s}, rng);
                 }});
    c.push_back({"batch_norm", [](auto& rng) {
                     const auto ch = extent(rng, 1, 3);
                     Shape shape = uniform01(rng) < 0.5 ? Shape{extent(rng, 2, 4), ch}
                                                        : Shape{extent(rng, 2, 3), ch, extent(rng, 1, 3), extent(rng, 1, 3)};
                     auto x = random_tensor(shape, rng, -2.0, 2.0);
                     auto g = random_tensor({ch}, rng, 0.5, 1.5), s = random_tensor({ch}, rng);
                     return check([&] { return batch_norm(x, g, s, 1e-5, nullptr); }, {x, g, s}, rng);
                 }});
    c.push_back({"batch_norm_fixed_stats", [](auto& rng) {
                     const auto ch = extent(rng, 1, 3);
                     auto x = random_tensor({extent(rng, 1, 3), ch, 2, 2}, rng);
                     auto g = random_tensor({ch}, rng, 0.5, 1.5), s = random_tensor({ch}, rng);
                     BatchStats stats;
                     for (std::int64_t i = 0; i < ch; ++i) {
                         stats.mean.push_back(uniform(rng, -0.5, 0.5));
                         stats.var.push_back(uniform(rng, 0.5, 2.0));
                     }
                     return check([&] { return batch_norm(x, g, s, 1e-5, &stats); }, {x, g, s}, rng);
                 }});
    c.push_back({"conv2d", [](auto& rng) {
                     const auto n = extent(rng, 1, 2), ci = extent(rng, 1, 3), co = extent(rng, 1, 3);
                     const int k = static_cast<int>(extent(rng, 1, 3));
                     Conv2dGeometry geom{static_cast<int>(extent(rng, 1, 2)), static_cast<int>(extent(rng, 0, 1))};
                     const auto hw = extent(rng, k, k + 3);
                     auto x = random_tensor({n, ci, hw, hw + 1}, rng);
                     auto w = random_tensor({co, ci, k, k}, rng);
                     auto b = random_tensor({co}, rng);
                     const bool with_bias = uniform01(rng) < 0.5;
                     if (with_bias) return check([&] { return conv2d(x, w, b, geom); }, {x, w, b}, rng);
                     return check([&] { return conv2d(x, w, Tensor(), geom); }, {x, w}, rng);
                 }});
    c.push_back({"maxpool2d", [](auto& rng) {
                     const int window = static_cast<int>(extent(rng, 2, 3));
                     const int stride = static_cast<int>(extent(rng, 1, 2));
                     const int pad = static_cast<int>(extent(rng, 0, window - 1));
                     auto x = random_distinct({extent(rng, 1, 2), extent(rng, 1, 2), extent(rng, 3, 5), extent(rng, 3, 5)}, rng);
                     return check([&] { return maxpool2d(x, window, stride, pad); }, {x}, rng);
                 }});
    c.push_back({"patchify", [](auto& rng) {
                     const int p = static_cast<int>(extent(rng, 1, 3));
                     auto x = random_tensor({extent(rng, 1, 2), extent(rng, 1, 3), p * extent(rng, 1, 2), p * extent(rng, 1, 2)}, rng);
                     return check([&] { return patchify(x, p); }, {x}, rng);
                 }});
    c.push_back({"unpatchify", [](auto& rng) {
                     const int p = static_cast<int>(extent(rng, 1, 3));
                     const auto ch = extent(rng, 1, 2), gh = extent(rng, 1, 2), gw = extent(rng, 1, 2);
                     auto t = random_tensor({extent(rng, 1, 2), gh * gw, p * p * ch}, rng);
                     return check([&] { return unpatchify(t, ch, gh * p, gw * p, p); }, {t}, rng);
                 }});
    c.push_back({"dropout", [](auto& rng) {
                     auto x = random_tensor({extent(rng, 1, 4), extent(rng, 2, 8)}, rng);
                     const double rate = uniform(rng, 0.1, 0.6);
                     const auto seed = rng();
                     return check(
                         [&] {
                             auto r = std::mt19937_64(seed);
                             return dropout(x, rate, true, r);
                         },
                         {x}, rng);
                 }});
    c.push_back({"bce_loss", [](auto& rng) {
                     const Shape s{extent(rng, 1, 4), extent(rng, 1, 5)};
                     auto p = random_tensor(s, rng, 0.05, 0.95);
                     auto y = random_tensor(s, rng, 0.0, 1.0, false);
                     for (auto& v : y.mutable_data()) v = v < 0.5 ? 0.0 : 1.0;
                     return check_gradients([&] { return bce_loss(p, y); }, {p});
                 }});
    c.push_back({"bce_with_logits", [](auto& rng) {
                     const Shape s{extent(rng, 1, 4), extent(rng, 1, 5)};
                     auto z = random_tensor(s, rng, -6.0, 6.0);
                     auto y = random_tensor(s, rng, 0.0, 1.0, false);
                     for (auto& v : y.mutable_data()) v = v < 0.5 ? 0.0 : 1.0;
                     return check_gradients([&] { return bce_with_logits(z, y); }, {z});
                 }});
    return c;
}

std::vector<GradCase> make_layer_cases() {
    std::vector<GradCase> c;
    c.push_back({"Conv2d", [](auto& rng) {
                     Conv2dOptions o;
                     o.in_channels = extent(rng, 1, 3);
                     o.out_channels = extent(rng, 1, 3);
                     o.kernel = static_cast<int>(extent(rng, 1, 3));
                     o.stride = static_cast<int>(extent(rng, 1, 2));
                     o.padding = uniform01(rng) < 0.5 ? Padding::valid : Padding::same;
                     if (o.padding == Padding::same) o.kernel = 3, o.stride = 1;
                     o.bias = uniform01(rng) < 0.5;
                     Conv2d layer(o, rng);
                     auto x = random_tensor({extent(rng, 1, 2), o.in_channels, 4, 5}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"MaxPool2d", [](auto& rng) {
                     MaxPool2d layer(2, 2);
                     auto x = random_distinct({extent(rng, 1, 2), extent(rng, 1, 2), 4, extent(rng, 2, 5)}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"Dense", [](auto& rng) {
                     const auto in = extent(rng, 1, 5), out = extent(rng, 1, 5);
                     Dense layer(in, out, uniform01(rng) < 0.5 ? Init::he_normal : Init::xavier_uniform, rng);
                     Shape s = uniform01(rng) < 0.5 ? Shape{extent(rng, 1, 3), in} : Shape{2, extent(rng, 1, 3), in};
                     auto x = random_tensor(s, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"BatchNorm", [](auto& rng) {
                     const auto ch = extent(rng, 1, 3);
                     NormLayer layer(NormLayer::Kind::batch, ch);
                     for (auto& v : layer.gain().mutable_data()) v = uniform(rng, 0.5, 1.5);
                     for (auto& v : layer.shift().mutable_data()) v = uniform(rng, -0.5, 0.5);
                     auto x = random_tensor({extent(rng, 2, 3), ch, 2, extent(rng, 1, 3)}, rng, -2.0, 2.0);
                     const bool training = uniform01(rng) < 0.7;
                     return check_module(layer, x, training, rng);
                 }});
    c.push_back({"LayerNorm", [](auto& rng) {
                     const auto d = extent(rng, 2, 6);
                     NormLayer layer(NormLayer::Kind::layer, d, 1e-6);
                     for (auto& v : layer.gain().mutable_data()) v = uniform(rng, 0.5, 1.5);
                     auto x = random_tensor({extent(rng, 1, 2), extent(rng, 1, 3), d}, rng, -2.0, 2.0);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"Dropout", [](auto& rng) {
                     Dropout layer(uniform(rng, 0.1, 0.5));
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 2, 6)}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"ReLU", [](auto& rng) {
                     Activation layer(Activation::Kind::relu);
                     auto x = random_nonzero({extent(rng, 1, 3), extent(rng, 2, 6)}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"GELU", [](auto& rng) {
                     Activation layer(Activation::Kind::gelu);
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 2, 6)}, rng, -3.0, 3.0);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"Sigmoid", [](auto& rng) {
                     Activation layer(Activation::Kind::sigmoid);
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 2, 6)}, rng, -4.0, 4.0);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"Flatten", [](auto& rng) {
                     Flatten layer;
                     auto x = random_tensor({extent(rng, 1, 3), 2, extent(rng, 1, 3), 2}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"GlobalAvgPool", [](auto& rng) {
                     GlobalAvgPool layer;
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 1, 3), extent(rng, 1, 3), 3}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"TokenMeanPool", [](auto& rng) {
                     TokenMeanPool layer;
                     auto x = random_tensor({extent(rng, 1, 3), extent(rng, 1, 5), extent(rng, 1, 4)}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"MultiHeadAttention", [](auto& rng) {
                     const auto heads = extent(rng, 1, 3);
                     const auto d = heads * extent(rng, 1, 3);
                     MultiHeadAttention layer(d, heads, rng);
                     auto x = random_tensor({extent(rng, 1, 2), extent(rng, 1, 4), d}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"PatchEmbedding", [](auto& rng) {
                     const int p = static_cast<int>(extent(rng, 1, 3));
                     const auto ch = extent(rng, 1, 2);
                     const auto h = p * extent(rng, 1, 2), w = p * extent(rng, 1, 2);
                     PatchEmbedding layer(ch, h, w, p, extent(rng, 1, 4), rng);
                     auto x = random_tensor({extent(rng, 1, 2), ch, h, w}, rng);
                     return check_module(layer, x, true, rng);
                 }});
    c.push_back({"BasicBlock", [](auto& rng) {
                     const auto ci = extent(rng, 1, 2);
                     const auto co = uniform01(rng) < 0.5 ? ci : ci + 1;
                     const int stride = static_cast<int>(extent(rng, 1, 2));
                     BasicBlock block(ci, co, stride, rng);
                     auto x = random_tensor({2, ci, 4, 4}, rng);
                     return check_module(block, x, true, rng);
                 }});
    c.push_back({"TransformerBlock", [](auto& rng) {
                     const auto heads = extent(rng, 1, 2);
                     const auto d = 2 * heads;
                     TransformerBlock block(d, heads, 2, rng);
                     auto x = random_tensor({extent(rng, 1, 2), extent(rng, 1, 3), d}, rng);
                     return check_module(block, x, true, rng);
                 }});
    return c;
}

}  // namespace

const std::vector<GradCase>& op_grad_cases() {
    static const auto cases = make_op_cases();
    return cases;
}

const std::vector<GradCase>& layer_grad_cases() {
    static const auto cases = make_layer_cases();
    return cases;
}

}  // namespace xrf::testing
