#include "xrf/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "xrf/error.h"
#include "xrf/rng.h"

namespace xrf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::vector<std::int64_t> strides_of(const Shape& shape) {
    std::vector<std::int64_t> s(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
    return s;
}

// Flat source index for each element of `out` when `in` (right-aligned) is
// broadcast to it.
std::vector<std::int64_t> broadcast_index(const Shape& in, const Shape& out) {
    const std::size_t r = out.size();
    Shape padded(r, 1);
    std::copy(in.begin(), in.end(), padded.begin() + static_cast<std::ptrdiff_t>(r - in.size()));
    auto in_strides = strides_of(padded);
    for (std::size_t a = 0; a < r; ++a) {
        if (padded[a] == 1) in_strides[a] = 0;
    }
    const std::int64_t n = shape_numel(out);
    std::vector<std::int64_t> index(static_cast<std::size_t>(n));
    std::vector<std::int64_t> pos(r, 0);
    std::int64_t src = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        index[static_cast<std::size_t>(i)] = src;
        for (int a = static_cast<int>(r) - 1; a >= 0; --a) {
            if (++pos[a] < out[a]) {
                src += in_strides[a];
                break;
            }
            src -= in_strides[a] * (out[a] - 1);
            pos[a] = 0;
        }
    }
    return index;
}

enum class BinaryKind { add, sub, mul };

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b, const char* name) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const auto n = static_cast<std::size_t>(shape_numel(out_shape));
    const bool a_full = a.shape() == out_shape;
    const bool b_full = b.shape() == out_shape;
    std::vector<std::int64_t> ia, ib;
    if (!a_full) ia = broadcast_index(a.shape(), out_shape);
    if (!b_full) ib = broadcast_index(b.shape(), out_shape);
    auto ai = [&](std::size_t i) { return a_full ? i : static_cast<std::size_t>(ia[i]); };
    auto bi = [&](std::size_t i) { return b_full ? i : static_cast<std::size_t>(ib[i]); };

    const auto ad = a.data();
    const auto bd = b.data();
    std::vector<double> out(n);
    switch (kind) {
        case BinaryKind::add:
            for (std::size_t i = 0; i < n; ++i) out[i] = ad[ai(i)] + bd[bi(i)];
            break;
        case BinaryKind::sub:
            for (std::size_t i = 0; i < n; ++i) out[i] = ad[ai(i)] - bd[bi(i)];
            break;
        case BinaryKind::mul:
            for (std::size_t i = 0; i < n; ++i) out[i] = ad[ai(i)] * bd[bi(i)];
            break;
    }

    auto pa = a.impl();
    auto pb = b.impl();
    return detail::make_result(
        out_shape, std::move(out), {a, b}, name,
        [kind, pa, pb, a_full, b_full, ia = std::move(ia), ib = std::move(ib)](std::span<const double> g) {
            auto ga = detail::grad_if_needed(pa);
            auto gb = detail::grad_if_needed(pb);
            const std::size_t n = g.size();
            auto ai = [&](std::size_t i) { return a_full ? i : static_cast<std::size_t>(ia[i]); };
            auto bi = [&](std::size_t i) { return b_full ? i : static_cast<std::size_t>(ib[i]); };
            if (!ga.empty()) {
                if (kind == BinaryKind::mul) {
                    for (std::size_t i = 0; i < n; ++i) ga[ai(i)] += g[i] * pb->data[bi(i)];
                } else {
                    for (std::size_t i = 0; i < n; ++i) ga[ai(i)] += g[i];
                }
            }
            if (!gb.empty()) {
                switch (kind) {
                    case BinaryKind::add:
                        for (std::size_t i = 0; i < n; ++i) gb[bi(i)] += g[i];
                        break;
                    case BinaryKind::sub:
                        for (std::size_t i = 0; i < n; ++i) gb[bi(i)] -= g[i];
                        break;
                    case BinaryKind::mul:
                        for (std::size_t i = 0; i < n; ++i) gb[bi(i)] += g[i] * pa->data[ai(i)];
                        break;
                }
            }
        });
}

// Unary op whose derivative is expressed through input x and output y.
template <class F, class D>
Tensor unary(const Tensor& x, const char* name, F f, D df, bool check = false) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
    if (check) detail::check_finite(out, name);
    auto px = x.impl();
    auto result = detail::make_result(x.shape(), std::move(out), {x}, name, nullptr);
    if (result.impl()->node) {
        std::weak_ptr<detail::TensorImpl> weak_out = result.impl();
        result.impl()->node->backward = [px, df, weak_out](std::span<const double> g) {
            auto gx = detail::grad_if_needed(px);
            if (gx.empty()) return;
            auto out_impl = weak_out.lock();
            const auto& y = out_impl->data;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(px->data[i], y[i]);
        };
    }
    return result;
}

std::vector<int> normalize_axes(std::vector<int> axes, int rank) {
    if (axes.empty()) {
        axes.resize(static_cast<std::size_t>(rank));
        for (int i = 0; i < rank; ++i) axes[static_cast<std::size_t>(i)] = i;
        return axes;
    }
    for (auto& a : axes) {
        if (a < 0) a += rank;
        if (a < 0 || a >= rank) throw DimensionError("reduction axis out of range for rank " + std::to_string(rank));
    }
    std::sort(axes.begin(), axes.end());
    if (std::adjacent_find(axes.begin(), axes.end()) != axes.end()) {
        throw DimensionError("duplicate reduction axis");
    }
    return axes;
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
    const std::size_t r = std::max(a.size(), b.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
        const std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (ea != eb && ea != 1 && eb != 1) {
            throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = std::max(ea, eb);
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryKind::add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryKind::sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryKind::mul, a, b, "mul"); }

Tensor scale(const Tensor& x, double factor) {
    return unary(x, "scale", [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
    return unary(x, "add_scalar", [value](double v) { return v + value; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        x, "gelu", [=](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [=](double v, double) {
            const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            return cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& x) {
    return unary(
        x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; }, true);
}

Tensor log(const Tensor& x) {
    return unary(
        x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; }, true);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const bool batched = a.rank() == 3;
    if (!((a.rank() == 2 && b.rank() == 2) || (a.rank() == 3 && b.rank() == 3))) {
        throw DimensionError("matmul expects 2-D or batched 3-D operands, got " + shape_str(a.shape()) + " and " +
                             shape_str(b.shape()));
    }
    const std::int64_t batch = batched ? a.dim(0) : 1;
    const std::int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    if (b.dim(-2) != k || (batched && b.dim(0) != batch)) {
        throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    std::vector<double> out(static_cast<std::size_t>(batch * m * n));
    for (std::int64_t i = 0; i < batch; ++i) {
        ConstMap am(a.data().data() + i * m * k, m, k);
        ConstMap bm(b.data().data() + i * k * n, k, n);
        MutMap cm(out.data() + i * m * n, m, n);
        cm.noalias() = am * bm;
    }
    Shape shape = batched ? Shape{batch, m, n} : Shape{m, n};
    auto pa = a.impl();
    auto pb = b.impl();
    return detail::make_result(shape, std::move(out), {a, b}, "matmul",
                               [pa, pb, batch, m, k, n](std::span<const double> g) {
                                   auto ga = detail::grad_if_needed(pa);
                                   auto gb = detail::grad_if_needed(pb);
                                   for (std::int64_t i = 0; i < batch; ++i) {
                                       ConstMap gm(g.data() + i * m * n, m, n);
                                       if (!ga.empty()) {
                                           ConstMap bm(pb->data.data() + i * k * n, k, n);
                                           MutMap gam(ga.data() + i * m * k, m, k);
                                           gam.noalias() += gm * bm.transpose();
                                       }
                                       if (!gb.empty()) {
                                           ConstMap am(pa->data.data() + i * m * k, m, k);
                                           MutMap gbm(gb.data() + i * k * n, k, n);
                                           gbm.noalias() += am.transpose() * gm;
                                       }
                                   }
                               });
}

Tensor reduce(ReduceOp op, const Tensor& x, std::vector<int> axes, bool keepdim) {
    const int r = x.rank();
    axes = normalize_axes(std::move(axes), r);
    std::vector<bool> reduced(static_cast<std::size_t>(r), false);
    for (int a : axes) reduced[static_cast<std::size_t>(a)] = true;

    Shape kept_shape(x.shape());
    std::int64_t count = 1;
    for (int a : axes) {
        count *= x.dim(a);
        kept_shape[static_cast<std::size_t>(a)] = 1;
    }
    Shape out_shape;
    if (keepdim) {
        out_shape = kept_shape;
    } else {
        for (int a = 0; a < r; ++a) {
            if (!reduced[static_cast<std::size_t>(a)]) out_shape.push_back(x.dim(a));
        }
        if (out_shape.empty()) out_shape = {1};
    }

    // Map every input element to its output slot.
    auto out_strides = strides_of(kept_shape);
    for (int a : axes) out_strides[static_cast<std::size_t>(a)] = 0;
    const auto nin = static_cast<std::size_t>(x.numel());
    std::vector<std::int64_t> target(nin);
    {
        std::vector<std::int64_t> pos(static_cast<std::size_t>(r), 0);
        std::int64_t dst = 0;
        for (std::size_t i = 0; i < nin; ++i) {
            target[i] = dst;
            for (int a = r - 1; a >= 0; --a) {
                const auto ua = static_cast<std::size_t>(a);
                if (++pos[ua] < x.shape()[ua]) {
                    dst += out_strides[ua];
                    break;
                }
                dst -= out_strides[ua] * (x.shape()[ua] - 1);
                pos[ua] = 0;
            }
        }
    }

    const auto nout = static_cast<std::size_t>(shape_numel(out_shape));
    const auto xd = x.data();
    std::vector<double> out(nout, 0.0);
    std::vector<std::int64_t> argmax;
    if (op == ReduceOp::max) {
        out.assign(nout, -std::numeric_limits<double>::infinity());
        argmax.assign(nout, -1);
        for (std::size_t i = 0; i < nin; ++i) {
            const auto o = static_cast<std::size_t>(target[i]);
            if (argmax[o] < 0 || xd[i] > out[o]) {
                out[o] = xd[i];
                argmax[o] = static_cast<std::int64_t>(i);
            }
        }
    } else {
        for (std::size_t i = 0; i < nin; ++i) out[static_cast<std::size_t>(target[i])] += xd[i];
        if (op == ReduceOp::mean) {
            for (auto& v : out) v /= static_cast<double>(count);
        }
    }

    auto px = x.impl();
    const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : "max";
    return detail::make_result(
        out_shape, std::move(out), {x}, name,
        [op, px, count, target = std::move(target), argmax = std::move(argmax)](std::span<const double> g) {
            auto gx = detail::grad_if_needed(px);
            if (gx.empty()) return;
            if (op == ReduceOp::max) {
                for (std::size_t o = 0; o < g.size(); ++o) gx[static_cast<std::size_t>(argmax[o])] += g[o];
                return;
            }
            const double f = op == ReduceOp::mean ? 1.0 / static_cast<double>(count) : 1.0;
            for (std::size_t i = 0; i < target.size(); ++i) gx[i] += f * g[static_cast<std::size_t>(target[i])];
        });
}

Tensor sum(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return reduce(ReduceOp::sum, x, std::move(axes), keepdim);
}
Tensor mean(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return reduce(ReduceOp::mean, x, std::move(axes), keepdim);
}
Tensor max(const Tensor& x, std::vector<int> axes, bool keepdim) {
    return reduce(ReduceOp::max, x, std::move(axes), keepdim);
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    auto px = x.impl();
    return detail::make_result(std::move(shape), std::move(out), {x}, "reshape", [px](std::span<const double> g) {
        auto gx = detail::grad_if_needed(px);
        if (gx.empty()) return;
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
}

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    const int r = x.rank();
    if (static_cast<int>(axes.size()) != r) throw DimensionError("permute axis count mismatch");
    std::vector<bool> used(static_cast<std::size_t>(r), false);
    for (int a : axes) {
        if (a < 0 || a >= r || used[static_cast<std::size_t>(a)]) throw DimensionError("invalid permutation");
        used[static_cast<std::size_t>(a)] = true;
    }
    const auto in_strides = strides_of(x.shape());
    Shape out_shape(static_cast<std::size_t>(r));
    std::vector<std::int64_t> step(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        out_shape[static_cast<std::size_t>(i)] = x.dim(axes[static_cast<std::size_t>(i)]);
        step[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(axes[static_cast<std::size_t>(i)])];
    }
    const auto n = static_cast<std::size_t>(x.numel());
    std::vector<std::int64_t> source(n);
    std::vector<std::int64_t> pos(static_cast<std::size_t>(r), 0);
    std::int64_t src = 0;
    for (std::size_t i = 0; i < n; ++i) {
        source[i] = src;
        for (int a = r - 1; a >= 0; --a) {
            const auto ua = static_cast<std::size_t>(a);
            if (++pos[ua] < out_shape[ua]) {
                src += step[ua];
                break;
            }
            src -= step[ua] * (out_shape[ua] - 1);
            pos[ua] = 0;
        }
    }
    const auto xd = x.data();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = xd[static_cast<std::size_t>(source[i])];
    auto px = x.impl();
    return detail::make_result(std::move(out_shape), std::move(out), {x}, "permute",
                               [px, source = std::move(source)](std::span<const double> g) {
                                   auto gx = detail::grad_if_needed(px);
                                   if (gx.empty()) return;
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       gx[static_cast<std::size_t>(source[i])] += g[i];
                                   }
                               });
}

Tensor softmax(const Tensor& x) {
    const std::int64_t width = x.dim(-1);
    const std::int64_t rows = x.numel() / width;
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* in = xd.data() + r * width;
        double* y = out.data() + r * width;
        const double m = *std::max_element(in, in + width);
        double total = 0.0;
        for (std::int64_t j = 0; j < width; ++j) {
            y[j] = std::exp(in[j] - m);
            total += y[j];
        }
        for (std::int64_t j = 0; j < width; ++j) y[j] /= total;
    }
    auto px = x.impl();
    auto result = detail::make_result(x.shape(), std::move(out), {x}, "softmax", nullptr);
    if (result.impl()->node) {
        std::weak_ptr<detail::TensorImpl> weak_out = result.impl();
        result.impl()->node->backward = [px, weak_out, rows, width](std::span<const double> g) {
            auto gx = detail::grad_if_needed(px);
            if (gx.empty()) return;
            const auto& y = weak_out.lock()->data;
            for (std::int64_t r = 0; r < rows; ++r) {
                const std::int64_t base = r * width;
                double dot = 0.0;
                for (std::int64_t j = 0; j < width; ++j) dot += g[base + j] * y[base + j];
                for (std::int64_t j = 0; j < width; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
            }
        };
    }
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
    const std::int64_t width = x.dim(-1);
    if (gain.numel() != width || shift.numel() != width) {
        throw DimensionError("layer_norm feature extent " + std::to_string(width) + " does not match gain " +
                             shape_str(gain.shape()) + " / shift " + shape_str(shift.shape()));
    }
    const std::int64_t rows = x.numel() / width;
    const auto xd = x.data();
    const auto gd = gain.data();
    const auto sd = shift.data();
    std::vector<double> out(xd.size());
    std::vector<double> xhat(xd.size());
    std::vector<double> inv_std(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t base = r * width;
        double mu = 0.0;
        for (std::int64_t j = 0; j < width; ++j) mu += xd[base + j];
        mu /= static_cast<double>(width);
        double var = 0.0;
        for (std::int64_t j = 0; j < width; ++j) var += (xd[base + j] - mu) * (xd[base + j] - mu);
        var /= static_cast<double>(width);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(r)] = is;
        for (std::int64_t j = 0; j < width; ++j) {
            xhat[base + j] = (xd[base + j] - mu) * is;
            out[base + j] = xhat[base + j] * gd[j] + sd[j];
        }
    }
    auto px = x.impl();
    auto pg = gain.impl();
    auto ps = shift.impl();
    return detail::make_result(
        x.shape(), std::move(out), {x, gain, shift}, "layer_norm",
        [px, pg, ps, rows, width, xhat = std::move(xhat), inv_std = std::move(inv_std)](std::span<const double> g) {
            auto gx = detail::grad_if_needed(px);
            auto gg = detail::grad_if_needed(pg);
            auto gs = detail::grad_if_needed(ps);
            const auto& gain_d = pg->data;
            std::vector<double> gxhat(static_cast<std::size_t>(width));
            for (std::int64_t r = 0; r < rows; ++r) {
                const std::int64_t base = r * width;
                if (!gg.empty() || !gs.empty()) {
                    for (std::int64_t j = 0; j < width; ++j) {
                        if (!gg.empty()) gg[j] += g[base + j] * xhat[base + j];
                        if (!gs.empty()) gs[j] += g[base + j];
                    }
                }
                if (gx.empty()) continue;
                double mean_g = 0.0, mean_gx = 0.0;
                for (std::int64_t j = 0; j < width; ++j) {
                    gxhat[j] = g[base + j] * gain_d[j];
                    mean_g += gxhat[j];
                    mean_gx += gxhat[j] * xhat[base + j];
                }
                mean_g /= static_cast<double>(width);
                mean_gx /= static_cast<double>(width);
                const double is = inv_std[static_cast<std::size_t>(r)];
                for (std::int64_t j = 0; j < width; ++j) {
                    gx[base + j] += is * (gxhat[j] - mean_g - xhat[base + j] * mean_gx);
                }
            }
        });
}

Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps, const BatchStats* stats,
                  BatchStats* batch_stats_out) {
    if (x.rank() != 2 && x.rank() != 4) {
        throw DimensionError("batch_norm expects [N,C] or [N,C,H,W], got " + shape_str(x.shape()));
    }
    const std::int64_t batch = x.dim(0);
    const std::int64_t channels = x.dim(1);
    const std::int64_t spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    if (gain.numel() != channels || shift.numel() != channels) {
        throw DimensionError("batch_norm channel extent " + std::to_string(channels) + " does not match gain " +
                             shape_str(gain.shape()));
    }
    const bool use_batch = stats == nullptr;
    const auto count = static_cast<double>(batch * spatial);
    const auto xd = x.data();
    auto index = [&](std::int64_t n, std::int64_t c, std::int64_t s) { return (n * channels + c) * spatial + s; };

    BatchStats local;
    if (use_batch) {
        local.mean.assign(static_cast<std::size_t>(channels), 0.0);
        local.var.assign(static_cast<std::size_t>(channels), 0.0);
        for (std::int64_t c = 0; c < channels; ++c) {
            double mu = 0.0;
            for (std::int64_t n = 0; n < batch; ++n)
                for (std::int64_t s = 0; s < spatial; ++s) mu += xd[index(n, c, s)];
            mu /= count;
            double var = 0.0;
            for (std::int64_t n = 0; n < batch; ++n)
                for (std::int64_t s = 0; s < spatial; ++s) {
                    const double d = xd[index(n, c, s)] - mu;
                    var += d * d;
                }
            local.mean[static_cast<std::size_t>(c)] = mu;
            local.var[static_cast<std::size_t>(c)] = var / count;
        }
        if (batch_stats_out) *batch_stats_out = local;
        stats = &local;
    } else if (static_cast<std::int64_t>(stats->mean.size()) != channels ||
               static_cast<std::int64_t>(stats->var.size()) != channels) {
        throw DimensionError("batch_norm running statistics size mismatch");
    }

    std::vector<double> inv_std(static_cast<std::size_t>(channels));
    for (std::int64_t c = 0; c < channels; ++c) {
        inv_std[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(stats->var[static_cast<std::size_t>(c)] + eps);
    }
    std::vector<double> xhat(xd.size());
    std::vector<double> out(xd.size());
    const auto gd = gain.data();
    const auto sd = shift.data();
    for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t c = 0; c < channels; ++c) {
            const double mu = stats->mean[static_cast<std::size_t>(c)];
            const double is = inv_std[static_cast<std::size_t>(c)];
            for (std::int64_t s = 0; s < spatial; ++s) {
                const auto i = index(n, c, s);
                xhat[i] = (xd[i] - mu) * is;
                out[i] = xhat[i] * gd[c] + sd[c];
            }
        }

    auto px = x.impl();
    auto pg = gain.impl();
    auto ps = shift.impl();
    return detail::make_result(
        x.shape(), std::move(out), {x, gain, shift}, "batch_norm",
        [px, pg, ps, batch, channels, spatial, count, use_batch, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](std::span<const double> g) {
            auto gx = detail::grad_if_needed(px);
            auto gg = detail::grad_if_needed(pg);
            auto gs = detail::grad_if_needed(ps);
            auto index = [&](std::int64_t n, std::int64_t c, std::int64_t s) {
                return static_cast<std::size_t>((n * channels + c) * spatial + s);
            };
            for (std::int64_t c = 0; c < channels; ++c) {
                double sum_g = 0.0, sum_gx = 0.0;
                for (std::int64_t n = 0; n < batch; ++n)
                    for (std::int64_t s = 0; s < spatial; ++s) {
                        const auto i = index(n, c, s);
                        sum_g += g[i];
                        sum_gx += g[i] * xhat[i];
                    }
                if (!gg.empty()) gg[c] += sum_gx;
                if (!gs.empty()) gs[c] += sum_g;
                if (gx.empty()) continue;
                const double k = pg->data[c] * inv_std[static_cast<std::size_t>(c)];
                for (std::int64_t n = 0; n < batch; ++n)
                    for (std::int64_t s = 0; s < spatial; ++s) {
                        const auto i = index(n, c, s);
                        if (use_batch) {
                            gx[i] += k * (g[i] - sum_g / count - xhat[i] * sum_gx / count);
                        } else {
                            gx[i] += k * g[i];
                        }
                    }
            }
        });
}

Tensor patchify(const Tensor& x, int patch) {
    if (x.rank() != 4) throw DimensionError("patchify expects [N,C,H,W], got " + shape_str(x.shape()));
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (patch <= 0 || h % patch != 0 || w % patch != 0) {
        throw DimensionError("patch size " + std::to_string(patch) + " does not divide H=" + std::to_string(h) +
                             ", W=" + std::to_string(w));
    }
    const std::int64_t gh = h / patch, gw = w / patch, tokens = gh * gw;
    const std::int64_t feat = static_cast<std::int64_t>(patch) * patch * c;
    const auto total = static_cast<std::size_t>(x.numel());
    std::vector<std::int64_t> source(total);
    std::size_t o = 0;
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t gi = 0; gi < gh; ++gi)
            for (std::int64_t gj = 0; gj < gw; ++gj)
                for (std::int64_t r = 0; r < patch; ++r)
                    for (std::int64_t col = 0; col < patch; ++col)
                        for (std::int64_t ch = 0; ch < c; ++ch)
                            source[o++] = ((b * c + ch) * h + gi * patch + r) * w + gj * patch + col;
    const auto xd = x.data();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) out[i] = xd[static_cast<std::size_t>(source[i])];
    auto px = x.impl();
    return detail::make_result({n, tokens, feat}, std::move(out), {x}, "patchify",
                               [px, source = std::move(source)](std::span<const double> g) {
                                   auto gx = detail::grad_if_needed(px);
                                   if (gx.empty()) return;
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       gx[static_cast<std::size_t>(source[i])] += g[i];
                                   }
                               });
}

Tensor unpatchify(const Tensor& tokens, std::int64_t channels, std::int64_t height, std::int64_t width,
                  int patch) {
    if (tokens.rank() != 3 || patch <= 0 || height % patch != 0 || width % patch != 0) {
        throw DimensionError("unpatchify: incompatible tokens " + shape_str(tokens.shape()) + " for H=" +
                             std::to_string(height) + ", W=" + std::to_string(width) + ", P=" +
                             std::to_string(patch));
    }
    const std::int64_t n = tokens.dim(0);
    const std::int64_t gh = height / patch, gw = width / patch;
    if (tokens.dim(1) != gh * gw || tokens.dim(2) != static_cast<std::int64_t>(patch) * patch * channels) {
        throw DimensionError("unpatchify: token shape " + shape_str(tokens.shape()) + " inconsistent with image");
    }
    const auto total = static_cast<std::size_t>(tokens.numel());
    std::vector<std::int64_t> dest(total);
    std::size_t o = 0;
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t gi = 0; gi < gh; ++gi)
            for (std::int64_t gj = 0; gj < gw; ++gj)
                for (std::int64_t r = 0; r < patch; ++r)
                    for (std::int64_t col = 0; col < patch; ++col)
                        for (std::int64_t ch = 0; ch < channels; ++ch)
                            dest[o++] = ((b * channels + ch) * height + gi * patch + r) * width + gj * patch + col;
    const auto td = tokens.data();
    std::vector<double> out(total);
    for (std::size_t i = 0; i < total; ++i) out[static_cast<std::size_t>(dest[i])] = td[i];
    auto pt = tokens.impl();
    return detail::make_result({n, channels, height, width}, std::move(out), {tokens}, "unpatchify",
                               [pt, dest = std::move(dest)](std::span<const double> g) {
                                   auto gt = detail::grad_if_needed(pt);
                                   if (gt.empty()) return;
                                   for (std::size_t i = 0; i < gt.size(); ++i) {
                                       gt[i] += g[static_cast<std::size_t>(dest[i])];
                                   }
                               });
}

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(static_cast<std::size_t>(x.numel()));
    for (auto& m : mask) m = uniform01(rng) < rate ? 0.0 : keep_scale;
    const auto xd = x.data();
    std::vector<double> out(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = xd[i] * mask[i];
    auto px = x.impl();
    return detail::make_result(x.shape(), std::move(out), {x}, "dropout",
                               [px, mask = std::move(mask)](std::span<const double> g) {
                                   auto gx = detail::grad_if_needed(px);
                                   if (gx.empty()) return;
                                   for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
                               });
}

}  // namespace xrf
