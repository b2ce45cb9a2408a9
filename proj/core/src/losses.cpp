#include "xrf/losses.h"

#include <algorithm>
#include <cmath>

#include "xrf/error.h"

namespace xrf {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": predictions " + shape_str(a.shape()) + " vs targets " +
                             shape_str(b.shape()));
    }
}

}  // namespace

Tensor bce_loss(const Tensor& probs, const Tensor& targets) {
    check_pair(probs, targets, "bce_loss");
    const auto p = probs.data();
    const auto y = targets.data();
    const auto n = static_cast<double>(p.size());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
        total -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
    }
    auto pi = probs.impl();
    auto ti = targets.impl();
    return detail::make_result({1}, {total / n}, {probs, targets}, "bce_loss", [pi, ti, n](std::span<const double> g) {
        auto gp = detail::grad_if_needed(pi);
        if (gp.empty()) return;
        for (std::size_t i = 0; i < gp.size(); ++i) {
            const double raw = pi->data[i];
            const double q = std::clamp(raw, kBceEpsilon, 1.0 - kBceEpsilon);
            if (raw != q) continue;  // clamped region is flat
            const double t = ti->data[i];
            gp[i] += g[0] * (-t / q + (1.0 - t) / (1.0 - q)) / n;
        }
    });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    check_pair(logits, targets, "bce_with_logits");
    const auto z = logits.data();
    const auto y = targets.data();
    const auto n = static_cast<double>(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
    }
    auto zi = logits.impl();
    auto ti = targets.impl();
    return detail::make_result({1}, {total / n}, {logits, targets}, "bce_with_logits",
                               [zi, ti, n](std::span<const double> g) {
                                   auto gz = detail::grad_if_needed(zi);
                                   if (gz.empty()) return;
                                   for (std::size_t i = 0; i < gz.size(); ++i) {
                                       const double v = zi->data[i];
                                       const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                                                 : std::exp(v) / (1.0 + std::exp(v));
                                       gz[i] += g[0] * (s - ti->data[i]) / n;
                                   }
                               });
}

}  // namespace xrf
