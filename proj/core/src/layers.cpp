#include "xrf/layers.h"

#include <cmath>
#include <stdexcept>

#include "xrf/error.h"
#include "xrf/rng.h"

namespace xrf {

void init_he_normal(Tensor& t, std::int64_t fan_in, std::mt19937_64& rng) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& v : t.mutable_data()) v = stddev * normal(rng);
}

void init_xavier_uniform(Tensor& t, std::int64_t fan_in, std::int64_t fan_out, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.mutable_data()) v = uniform(rng, -limit, limit);
}

void init_truncated_normal(Tensor& t, double stddev, std::mt19937_64& rng) {
    for (auto& v : t.mutable_data()) {
        double z = normal(rng);
        while (std::abs(z) > 2.0) z = normal(rng);
        v = stddev * z;
    }
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(const Conv2dOptions& options, std::mt19937_64& rng) : options_(options) {
    if (options.in_channels <= 0 || options.out_channels <= 0 || options.kernel <= 0 || options.stride <= 0) {
        throw std::invalid_argument("Conv2d: channels, kernel and stride must be positive");
    }
    if (options.padding == Padding::same && options.kernel % 2 == 0) {
        throw std::invalid_argument("Conv2d: 'same' padding needs an odd kernel");
    }
    weights_ = Tensor::zeros({options.out_channels, options.in_channels, options.kernel, options.kernel}, true);
    init_he_normal(weights_, options.in_channels * options.kernel * options.kernel, rng);
    if (options.bias) bias_ = Tensor::zeros({options.out_channels}, true);
}

int Conv2d::padding() const {
    switch (options_.padding) {
        case Padding::valid:
            return 0;
        case Padding::same:
            return options_.kernel / 2;
        case Padding::explicit_:
            return options_.explicit_padding;
    }
    return 0;
}

Tensor Conv2d::forward(const Tensor& x, ForwardContext&) {
    return conv2d(x, weights_, bias_, {options_.stride, padding()});
}

void Conv2d::collect(const std::string& prefix, TensorList& params, TensorList&) {
    params.push_back({join_name(prefix, "weight"), weights_});
    if (bias_.defined()) params.push_back({join_name(prefix, "bias"), bias_});
}

Tensor MaxPool2d::forward(const Tensor& x, ForwardContext&) { return maxpool2d(x, window_, stride_, padding_); }

// ---------------------------------------------------------------------------

Dense::Dense(std::int64_t in_features, std::int64_t out_features, Init init, std::mt19937_64& rng, bool bias) {
    weights_ = Tensor::zeros({in_features, out_features}, true);
    if (init == Init::he_normal) {
        init_he_normal(weights_, in_features, rng);
    } else {
        init_xavier_uniform(weights_, in_features, out_features, rng);
    }
    if (bias) bias_ = Tensor::zeros({out_features}, true);
}

Tensor Dense::forward(const Tensor& x, ForwardContext&) {
    const std::int64_t in = weights_.dim(0);
    if (x.dim(-1) != in) {
        throw DimensionError("Dense expects last extent " + std::to_string(in) + ", got " + shape_str(x.shape()));
    }
    Tensor flat = x.rank() == 2 ? x : reshape(x, {x.numel() / in, in});
    Tensor y = matmul(flat, weights_);
    if (bias_.defined()) y = add(y, bias_);
    if (x.rank() == 2) return y;
    Shape out_shape = x.shape();
    out_shape.back() = weights_.dim(1);
    return reshape(y, out_shape);
}

void Dense::collect(const std::string& prefix, TensorList& params, TensorList&) {
    params.push_back({join_name(prefix, "weight"), weights_});
    if (bias_.defined()) params.push_back({join_name(prefix, "bias"), bias_});
}

// ---------------------------------------------------------------------------

NormLayer::NormLayer(Kind kind, std::int64_t features, std::optional<double> eps, double momentum)
    : kind_(kind), eps_(eps.value_or(kind == Kind::batch ? 1e-5 : 1e-12)), momentum_(momentum) {
    if (!(eps_ > 0.0)) throw std::invalid_argument("NormLayer: eps must be positive");
    if (!(momentum_ >= 0.0 && momentum_ <= 1.0)) throw std::invalid_argument("NormLayer: momentum in [0,1]");
    gain_ = Tensor::full({features}, 1.0, true);
    shift_ = Tensor::zeros({features}, true);
    if (kind == Kind::batch) {
        running_mean_ = Tensor::zeros({features});
        running_var_ = Tensor::full({features}, 1.0);
    }
}

Tensor NormLayer::forward(const Tensor& x, ForwardContext& ctx) {
    if (kind_ == Kind::layer) return layer_norm(x, gain_, shift_, eps_);

    if (!ctx.training) {
        BatchStats stats{{running_mean_.data().begin(), running_mean_.data().end()},
                         {running_var_.data().begin(), running_var_.data().end()}};
        return batch_norm(x, gain_, shift_, eps_, &stats);
    }
    if (x.dim(0) < 2) {
        throw DimensionError("batch normalization in training mode needs a batch of at least 2, got " +
                             shape_str(x.shape()));
    }
    BatchStats batch;
    Tensor y = batch_norm(x, gain_, shift_, eps_, nullptr, &batch);
    const double count = static_cast<double>(x.numel() / x.dim(1));
    const double unbias = count / (count - 1.0);
    auto rm = running_mean_.mutable_data();
    auto rv = running_var_.mutable_data();
    for (std::size_t c = 0; c < rm.size(); ++c) {
        rm[c] = (1.0 - momentum_) * rm[c] + momentum_ * batch.mean[c];
        rv[c] = (1.0 - momentum_) * rv[c] + momentum_ * batch.var[c] * unbias;
    }
    return y;
}

void NormLayer::collect(const std::string& prefix, TensorList& params, TensorList& buffers) {
    params.push_back({join_name(prefix, "gain"), gain_});
    params.push_back({join_name(prefix, "shift"), shift_});
    if (kind_ == Kind::batch) {
        buffers.push_back({join_name(prefix, "running_mean"), running_mean_});
        buffers.push_back({join_name(prefix, "running_var"), running_var_});
    }
}

// ---------------------------------------------------------------------------

Dropout::Dropout(double rate) : rate_(rate) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout rate must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, ForwardContext& ctx) {
    if (!ctx.training || rate_ == 0.0) return x;
    if (ctx.rng == nullptr) throw std::logic_error("training-mode dropout needs an rng in the forward context");
    return dropout(x, rate_, true, *ctx.rng);
}

Tensor Activation::forward(const Tensor& x, ForwardContext&) {
    switch (kind_) {
        case Kind::relu:
            return relu(x);
        case Kind::gelu:
            return gelu(x);
        case Kind::sigmoid:
            return sigmoid(x);
    }
    return x;
}

Tensor Flatten::forward(const Tensor& x, ForwardContext&) { return reshape(x, {x.dim(0), x.numel() / x.dim(0)}); }

Tensor GlobalAvgPool::forward(const Tensor& x, ForwardContext&) {
    if (x.rank() != 4) throw DimensionError("GlobalAvgPool expects [N,C,H,W], got " + shape_str(x.shape()));
    return mean(x, {2, 3});
}

Tensor TokenMeanPool::forward(const Tensor& x, ForwardContext&) {
    if (x.rank() != 3) throw DimensionError("TokenMeanPool expects [N,T,d], got " + shape_str(x.shape()));
    return mean(x, {1});
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(std::int64_t model_dim, std::int64_t heads, std::mt19937_64& rng)
    : model_dim_(model_dim), heads_(heads) {
    if (heads <= 0 || model_dim <= 0 || model_dim % heads != 0) {
        throw std::invalid_argument("MultiHeadAttention: model_dim " + std::to_string(model_dim) +
                                    " is not divisible by heads " + std::to_string(heads));
    }
    for (Tensor* w : {&wq_, &wk_, &wv_, &wo_}) {
        *w = Tensor::zeros({model_dim, model_dim}, true);
        init_xavier_uniform(*w, model_dim, model_dim, rng);
    }
}

Tensor MultiHeadAttention::forward(const Tensor& tokens, ForwardContext&) {
    if (tokens.rank() != 3 || tokens.dim(2) != model_dim_) {
        throw DimensionError("MultiHeadAttention expects [N,T," + std::to_string(model_dim_) + "], got " +
                             shape_str(tokens.shape()));
    }
    const std::int64_t n = tokens.dim(0), t = tokens.dim(1), h = heads_, dh = model_dim_ / heads_;
    Tensor flat = reshape(tokens, {n * t, model_dim_});

    // [N*T, d] -> [N*h, T, dh] (or [N*h, dh, T] for keys).
    auto split = [&](const Tensor& w, bool keys) {
        Tensor p = reshape(matmul(flat, w), {n, t, h, dh});
        if (keys) return reshape(permute(p, {0, 2, 3, 1}), {n * h, dh, t});
        return reshape(permute(p, {0, 2, 1, 3}), {n * h, t, dh});
    };
    Tensor q = split(wq_, false);
    Tensor k = split(wk_, true);
    Tensor v = split(wv_, false);

    Tensor scores = scale(matmul(q, k), 1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor weights = softmax(scores);
    last_attention_ = reshape(weights, {n, h, t, t}).detach();

    Tensor context = reshape(matmul(weights, v), {n, h, t, dh});
    context = reshape(permute(context, {0, 2, 1, 3}), {n * t, model_dim_});
    return reshape(matmul(context, wo_), {n, t, model_dim_});
}

void MultiHeadAttention::collect(const std::string& prefix, TensorList& params, TensorList&) {
    params.push_back({join_name(prefix, "wq"), wq_});
    params.push_back({join_name(prefix, "wk"), wk_});
    params.push_back({join_name(prefix, "wv"), wv_});
    params.push_back({join_name(prefix, "wo"), wo_});
}

// ---------------------------------------------------------------------------

PatchEmbedding::PatchEmbedding(std::int64_t channels, std::int64_t height, std::int64_t width, int patch,
                               std::int64_t dim, std::mt19937_64& rng)
    : channels_(channels),
      patch_(patch),
      grid_h_(patch > 0 ? height / patch : 0),
      grid_w_(patch > 0 ? width / patch : 0),
      projection_(static_cast<std::int64_t>(patch) * patch * channels, dim, Init::xavier_uniform, rng) {
    if (patch <= 0 || height % patch != 0 || width % patch != 0) {
        throw DimensionError("patch size " + std::to_string(patch) + " does not divide H=" +
                             std::to_string(height) + ", W=" + std::to_string(width));
    }
    positional_ = Tensor::zeros({grid_h_ * grid_w_, dim}, true);
    init_truncated_normal(positional_, 0.02, rng);
}

Tensor PatchEmbedding::forward(const Tensor& x, ForwardContext& ctx) {
    if (x.rank() != 4 || x.dim(1) != channels_ || x.dim(2) != grid_h_ * patch_ || x.dim(3) != grid_w_ * patch_) {
        throw DimensionError("PatchEmbedding built for [N," + std::to_string(channels_) + "," +
                             std::to_string(grid_h_ * patch_) + "," + std::to_string(grid_w_ * patch_) +
                             "], got " + shape_str(x.shape()));
    }
    Tensor tokens = projection_.forward(patchify(x, patch_), ctx);
    return add(tokens, positional_);
}

void PatchEmbedding::collect(const std::string& prefix, TensorList& params, TensorList& buffers) {
    projection_.collect(join_name(prefix, "proj"), params, buffers);
    params.push_back({join_name(prefix, "pos"), positional_});
}

// ---------------------------------------------------------------------------

Tensor Sequential::forward(const Tensor& x, ForwardContext& ctx) {
    Tensor y = x;
    for (auto& [name, module] : children_) {
        y = module->forward(y, ctx);
        if (ctx.trace) ctx.trace->push_back({name, y});
    }
    return y;
}

void Sequential::collect(const std::string& prefix, TensorList& params, TensorList& buffers) {
    for (auto& [name, module] : children_) module->collect(join_name(prefix, name), params, buffers);
}

}  // namespace xrf
