#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xrf {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct Node;

struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first needed
    bool requires_grad = false;
    std::shared_ptr<Node> node;  // null for leaves and constants

    std::span<double> ensure_grad();
};

using BackwardFn = std::function<void(std::span<const double> grad_out)>;

// One recorded operation. `inputs` keeps the operands alive for as long as
// the result is reachable.
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
    const char* op = "";
};

}  // namespace detail

/// Dense row-major float64 array with reverse-mode autodiff.
///
/// A Tensor is a cheap handle: copies share storage. Results of differentiable
/// ops record a graph node when any operand requires grad and grad mode is on
/// (see NoGradGuard). Values are never mutated by ops; only parameters are
/// updated in place by optimizers through mutable_data().
class Tensor {
 public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::int64_t dim(int axis) const;
    int rank() const;
    std::int64_t numel() const;

    std::span<const double> data() const;
    std::span<double> mutable_data();
    double item() const;
    double at(std::initializer_list<std::int64_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> mutable_grad();
    void zero_grad();

    bool is_leaf() const;

    /// Same values, no graph history.
    Tensor detach() const;
    /// Deep copy of values (and requires_grad flag), no history.
    Tensor clone() const;

    /// Runs reverse-mode accumulation from this scalar. Leaf grads accumulate
    /// across calls; intermediate grads hold the latest pass only.
    /// Returns the number of local-gradient evaluations performed.
    std::size_t backward() const;

    // Internal plumbing used by op implementations.
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Free-function spelling of Tensor::backward.
std::size_t backward(const Tensor& loss);

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
    bool previous_;
};

bool grad_mode_enabled();

namespace detail {

// Builds an op result. The backward closure is attached only when recording is
// on and at least one input requires grad.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> inputs,
                   const char* op, BackwardFn backward);

// Returns the grad buffer of an input if it participates in differentiation.
inline std::span<double> grad_if_needed(const std::shared_ptr<TensorImpl>& impl) {
    if (!impl->requires_grad) return {};
    return impl->ensure_grad();
}

void check_finite(std::span<const double> values, const char* op);

}  // namespace detail

}  // namespace xrf
