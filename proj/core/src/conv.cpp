#include <Eigen/Core>
#include <limits>

#include "xrf/error.h"
#include "xrf/ops.h"

namespace xrf {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

struct ConvDims {
    std::int64_t n, c, h, w;
    std::int64_t o, kh, kw;
    std::int64_t ho, wo;
    int stride, pad;

    std::int64_t rows() const { return c * kh * kw; }
    std::int64_t cols() const { return n * ho * wo; }
};

// col[(c*kh + ki)*kw + kj][(b*ho + i)*wo + j] = x[b, c, i*s - p + ki, j*s - p + kj]
void im2col(const double* x, const ConvDims& d, double* col) {
    const std::int64_t L = d.cols();
    for (std::int64_t c = 0; c < d.c; ++c)
        for (std::int64_t ki = 0; ki < d.kh; ++ki)
            for (std::int64_t kj = 0; kj < d.kw; ++kj) {
                double* row = col + ((c * d.kh + ki) * d.kw + kj) * L;
                for (std::int64_t b = 0; b < d.n; ++b) {
                    const double* plane = x + (b * d.c + c) * d.h * d.w;
                    for (std::int64_t i = 0; i < d.ho; ++i) {
                        const std::int64_t y = i * d.stride - d.pad + ki;
                        double* dst = row + (b * d.ho + i) * d.wo;
                        if (y < 0 || y >= d.h) {
                            std::fill(dst, dst + d.wo, 0.0);
                            continue;
                        }
                        const double* src = plane + y * d.w;
                        for (std::int64_t j = 0; j < d.wo; ++j) {
                            const std::int64_t xcol = j * d.stride - d.pad + kj;
                            dst[j] = (xcol >= 0 && xcol < d.w) ? src[xcol] : 0.0;
                        }
                    }
                }
            }
}

void col2im_add(const double* col, const ConvDims& d, double* gx) {
    const std::int64_t L = d.cols();
    for (std::int64_t c = 0; c < d.c; ++c)
        for (std::int64_t ki = 0; ki < d.kh; ++ki)
            for (std::int64_t kj = 0; kj < d.kw; ++kj) {
                const double* row = col + ((c * d.kh + ki) * d.kw + kj) * L;
                for (std::int64_t b = 0; b < d.n; ++b) {
                    double* plane = gx + (b * d.c + c) * d.h * d.w;
                    for (std::int64_t i = 0; i < d.ho; ++i) {
                        const std::int64_t y = i * d.stride - d.pad + ki;
                        if (y < 0 || y >= d.h) continue;
                        const double* src = row + (b * d.ho + i) * d.wo;
                        double* dst = plane + y * d.w;
                        for (std::int64_t j = 0; j < d.wo; ++j) {
                            const std::int64_t xcol = j * d.stride - d.pad + kj;
                            if (xcol >= 0 && xcol < d.w) dst[xcol] += src[j];
                        }
                    }
                }
            }
}

}  // namespace

std::int64_t conv_output_extent(std::int64_t input, int kernel, int stride, int padding) {
    const std::int64_t span = input + 2 * static_cast<std::int64_t>(padding) - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, Conv2dGeometry geometry) {
    if (x.rank() != 4 || weights.rank() != 4) {
        throw DimensionError("conv2d expects x[N,C,H,W] and weights[O,C,kh,kw], got " + shape_str(x.shape()) +
                             " and " + shape_str(weights.shape()));
    }
    if (geometry.stride <= 0 || geometry.padding < 0) throw DimensionError("conv2d: invalid stride/padding");
    ConvDims d{};
    d.n = x.dim(0);
    d.c = x.dim(1);
    d.h = x.dim(2);
    d.w = x.dim(3);
    d.o = weights.dim(0);
    d.kh = weights.dim(2);
    d.kw = weights.dim(3);
    d.stride = geometry.stride;
    d.pad = geometry.padding;
    if (weights.dim(1) != d.c) {
        throw DimensionError("conv2d: input has " + std::to_string(d.c) + " channels, weights expect " +
                             std::to_string(weights.dim(1)));
    }
    if (d.kh > d.h + 2 * d.pad || d.kw > d.w + 2 * d.pad) {
        throw DimensionError("conv2d: kernel " + std::to_string(d.kh) + "x" + std::to_string(d.kw) +
                             " larger than padded input " + shape_str(x.shape()));
    }
    if (bias.defined() && bias.numel() != d.o) throw DimensionError("conv2d: bias extent mismatch");
    d.ho = conv_output_extent(d.h, static_cast<int>(d.kh), d.stride, d.pad);
    d.wo = conv_output_extent(d.w, static_cast<int>(d.kw), d.stride, d.pad);

    const std::int64_t K = d.rows(), L = d.cols(), spatial = d.ho * d.wo;
    std::vector<double> col(static_cast<std::size_t>(K * L));
    im2col(x.data().data(), d, col.data());

    RowMat y(d.o, L);
    y.noalias() = ConstMap(weights.data().data(), d.o, K) * ConstMap(col.data(), K, L);

    std::vector<double> out(static_cast<std::size_t>(d.n * d.o * spatial));
    const auto bd = bias.defined() ? bias.data() : std::span<const double>{};
    for (std::int64_t b = 0; b < d.n; ++b)
        for (std::int64_t o = 0; o < d.o; ++o) {
            const double bo = bd.empty() ? 0.0 : bd[static_cast<std::size_t>(o)];
            const double* src = y.data() + o * L + b * spatial;
            double* dst = out.data() + (b * d.o + o) * spatial;
            for (std::int64_t s = 0; s < spatial; ++s) dst[s] = src[s] + bo;
        }

    auto px = x.impl();
    auto pw = weights.impl();
    auto pb = bias.defined() ? bias.impl() : nullptr;
    const bool record = grad_mode_enabled() && (x.requires_grad() || weights.requires_grad() ||
                                                (bias.defined() && bias.requires_grad()));
    if (!record) col = {};
    auto backward = [px, pw, pb, d, col = std::move(col)](std::span<const double> g) {
        const std::int64_t K = d.rows(), L = d.cols(), spatial = d.ho * d.wo;
        RowMat gy(d.o, L);
        for (std::int64_t b = 0; b < d.n; ++b)
            for (std::int64_t o = 0; o < d.o; ++o) {
                const double* src = g.data() + (b * d.o + o) * spatial;
                std::copy(src, src + spatial, gy.data() + o * L + b * spatial);
            }
        auto gw = detail::grad_if_needed(pw);
        if (!gw.empty()) {
            MutMap(gw.data(), d.o, K).noalias() += gy * ConstMap(col.data(), K, L).transpose();
        }
        if (pb) {
            auto gb = detail::grad_if_needed(pb);
            if (!gb.empty()) {
                for (std::int64_t o = 0; o < d.o; ++o) gb[static_cast<std::size_t>(o)] += gy.row(o).sum();
            }
        }
        auto gx = detail::grad_if_needed(px);
        if (!gx.empty()) {
            RowMat gcol(K, L);
            gcol.noalias() = ConstMap(pw->data.data(), d.o, K).transpose() * gy;
            col2im_add(gcol.data(), d, gx.data());
        }
    };
    if (pb) {
        return detail::make_result({d.n, d.o, d.ho, d.wo}, std::move(out), {x, weights, bias}, "conv2d",
                                   std::move(backward));
    }
    return detail::make_result({d.n, d.o, d.ho, d.wo}, std::move(out), {x, weights}, "conv2d",
                               std::move(backward));
}

Tensor maxpool2d(const Tensor& x, int window, int stride, int padding) {
    if (x.rank() != 4) throw DimensionError("maxpool2d expects [N,C,H,W], got " + shape_str(x.shape()));
    if (window <= 0 || stride <= 0 || padding < 0 || padding >= window) {
        throw DimensionError("maxpool2d: invalid window/stride/padding");
    }
    const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::int64_t ho = conv_output_extent(h, window, stride, padding);
    const std::int64_t wo = conv_output_extent(w, window, stride, padding);
    if (ho < 1 || wo < 1) {
        throw DimensionError("maxpool2d: window " + std::to_string(window) + " yields empty output for " +
                             shape_str(x.shape()));
    }
    const auto xd = x.data();
    std::vector<double> out(static_cast<std::size_t>(n * c * ho * wo));
    std::vector<std::int64_t> argmax(out.size());
    std::size_t o = 0;
    for (std::int64_t p = 0; p < n * c; ++p) {
        const std::int64_t base = p * h * w;
        for (std::int64_t i = 0; i < ho; ++i)
            for (std::int64_t j = 0; j < wo; ++j, ++o) {
                double best = -std::numeric_limits<double>::infinity();
                std::int64_t best_index = -1;
                for (std::int64_t ki = 0; ki < window; ++ki) {
                    const std::int64_t y = i * stride - padding + ki;
                    if (y < 0 || y >= h) continue;
                    for (std::int64_t kj = 0; kj < window; ++kj) {
                        const std::int64_t xc = j * stride - padding + kj;
                        if (xc < 0 || xc >= w) continue;
                        const std::int64_t idx = base + y * w + xc;
                        if (best_index < 0 || xd[static_cast<std::size_t>(idx)] > best) {
                            best = xd[static_cast<std::size_t>(idx)];
                            best_index = idx;
                        }
                    }
                }
                out[o] = best;
                argmax[o] = best_index;
            }
    }
    auto px = x.impl();
    return detail::make_result({n, c, ho, wo}, std::move(out), {x}, "maxpool2d",
                               [px, argmax = std::move(argmax)](std::span<const double> g) {
                                   auto gx = detail::grad_if_needed(px);
                                   if (gx.empty()) return;
                                   for (std::size_t i = 0; i < g.size(); ++i) {
                                       gx[static_cast<std::size_t>(argmax[i])] += g[i];
                                   }
                               });
}

}  // namespace xrf
