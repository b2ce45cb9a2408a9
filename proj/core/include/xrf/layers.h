#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "xrf/ops.h"
#include "xrf/tensor.h"

namespace xrf {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

using TensorList = std::vector<NamedTensor>;

/// Per-forward-pass state threaded through every module.
struct ForwardContext {
    bool training = false;
    std::mt19937_64* rng = nullptr;  // required when training with dropout
    TensorList* trace = nullptr;     // when set, named intermediate outputs are appended
};

class Module {
 public:
    virtual ~Module() = default;
    virtual Tensor forward(const Tensor& x, ForwardContext& ctx) = 0;
    /// Appends trainable parameters and persistent buffers, names prefixed.
    virtual void collect(const std::string& /*prefix*/, TensorList& /*params*/, TensorList& /*buffers*/) {}
};

enum class Init { he_normal, xavier_uniform };

enum class Padding { valid, same, explicit_ };

struct Conv2dOptions {
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    int kernel = 3;
    int stride = 1;
    Padding padding = Padding::valid;
    int explicit_padding = 0;
    bool bias = true;
};

class Conv2d : public Module {
 public:
    Conv2d(const Conv2dOptions& options, std::mt19937_64& rng);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    int padding() const;
    int stride() const { return options_.stride; }
    const Conv2dOptions& options() const { return options_; }
    Tensor& weights() { return weights_; }
    Tensor& bias() { return bias_; }

 private:
    Conv2dOptions options_;
    Tensor weights_;  // [out, in, k, k]
    Tensor bias_;     // [out] or undefined
};

class MaxPool2d : public Module {
 public:
    MaxPool2d(int window, int stride, int padding = 0) : window_(window), stride_(stride), padding_(padding) {}
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;

 private:
    int window_, stride_, padding_;
};

/// Dense layer on the last axis: y = x W + b with W [in, out].
class Dense : public Module {
 public:
    Dense(std::int64_t in_features, std::int64_t out_features, Init init, std::mt19937_64& rng,
          bool bias = true);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    Tensor& weights() { return weights_; }
    Tensor& bias() { return bias_; }
    std::int64_t in_features() const { return weights_.dim(0); }
    std::int64_t out_features() const { return weights_.dim(1); }

 private:
    Tensor weights_;
    Tensor bias_;
};

/// Batch or layer normalization followed by a per-feature affine map.
///
/// Layer kind normalizes over the last axis. Batch kind normalizes per channel
/// (axis 1) over the batch and spatial axes while training and uses running
/// statistics in evaluation. Running variance is tracked unbiased.
class NormLayer : public Module {
 public:
    enum class Kind { batch, layer };

    // Default eps: 1e-5 for batch kind, 1e-12 for layer kind.
    NormLayer(Kind kind, std::int64_t features, std::optional<double> eps = std::nullopt, double momentum = 0.1);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    Kind kind() const { return kind_; }
    double eps() const { return eps_; }
    Tensor& gain() { return gain_; }
    Tensor& shift() { return shift_; }
    Tensor& running_mean() { return running_mean_; }
    Tensor& running_var() { return running_var_; }

 private:
    Kind kind_;
    double eps_;
    double momentum_;
    Tensor gain_, shift_;
    Tensor running_mean_, running_var_;  // batch kind only
};

class Dropout : public Module {
 public:
    explicit Dropout(double rate);
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    double rate() const { return rate_; }

 private:
    double rate_;
};

class Activation : public Module {
 public:
    enum class Kind { relu, gelu, sigmoid };
    explicit Activation(Kind kind) : kind_(kind) {}
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;

 private:
    Kind kind_;
};

/// [N, ...] -> [N, prod(...)]
class Flatten : public Module {
 public:
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
};

/// [N,C,H,W] -> [N,C]
class GlobalAvgPool : public Module {
 public:
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
};

/// [N,T,d] -> [N,d]
class TokenMeanPool : public Module {
 public:
    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
};

/// Scaled dot-product self-attention over [N,T,d] with `heads` parallel heads.
/// Projections carry no bias. The softmax weights of the latest forward pass
/// are kept (detached) as [N, heads, T, T].
class MultiHeadAttention : public Module {
 public:
    MultiHeadAttention(std::int64_t model_dim, std::int64_t heads, std::mt19937_64& rng);

    Tensor forward(const Tensor& tokens, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    std::int64_t model_dim() const { return model_dim_; }
    std::int64_t heads() const { return heads_; }
    const Tensor& last_attention() const { return last_attention_; }

    Tensor& wq() { return wq_; }
    Tensor& wk() { return wk_; }
    Tensor& wv() { return wv_; }
    Tensor& wo() { return wo_; }

 private:
    std::int64_t model_dim_;
    std::int64_t heads_;
    Tensor wq_, wk_, wv_, wo_;
    Tensor last_attention_;
};

/// Splits [N,C,H,W] into P x P patches, projects each to `dim` and adds a
/// learned positional table [T, dim].
class PatchEmbedding : public Module {
 public:
    PatchEmbedding(std::int64_t channels, std::int64_t height, std::int64_t width, int patch, std::int64_t dim,
                   std::mt19937_64& rng);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    int patch() const { return patch_; }
    std::int64_t grid_height() const { return grid_h_; }
    std::int64_t grid_width() const { return grid_w_; }
    std::int64_t tokens() const { return grid_h_ * grid_w_; }
    Dense& projection() { return projection_; }
    Tensor& positional() { return positional_; }

 private:
    std::int64_t channels_;
    int patch_;
    std::int64_t grid_h_, grid_w_;
    Dense projection_;
    Tensor positional_;
};

/// Ordered list of named child modules. Each child's output is appended to
/// the trace (when enabled) under its name.
class Sequential : public Module {
 public:
    Sequential() = default;

    template <class M>
    M& add(std::string name, std::unique_ptr<M> module) {
        M& ref = *module;
        children_.emplace_back(std::move(name), std::move(module));
        return ref;
    }

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    std::size_t size() const { return children_.size(); }
    Module& at(std::size_t i) { return *children_[i].second; }
    const std::string& name_at(std::size_t i) const { return children_[i].first; }

 private:
    std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
};

/// Fills a tensor in place with the given initializer.
void init_he_normal(Tensor& t, std::int64_t fan_in, std::mt19937_64& rng);
void init_xavier_uniform(Tensor& t, std::int64_t fan_in, std::int64_t fan_out, std::mt19937_64& rng);
void init_truncated_normal(Tensor& t, double stddev, std::mt19937_64& rng);

inline std::string join_name(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace xrf
