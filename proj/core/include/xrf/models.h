#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "xrf/kvconfig.h"
#include "xrf/layers.h"

namespace xrf {

enum class Family { cnn, resnet, vit_v1_32, vit_v2_32, vit_resnet_16 };

std::string_view family_name(Family family);
/// Throws ConfigError naming the `family` field for unknown names.
Family parse_family(std::string_view name);
/// Attention-based families (ViT/32 variants and the hybrid).
bool is_vit_family(Family family);
/// True when the head emits logits rather than sigmoid probabilities.
bool family_emits_logits(Family family);

/// Declarative description of one architecture and its hyper-parameters.
/// Defaults reproduce the full-size networks; the width knobs exist so the
/// same topologies can be trained at desk scale.
struct ModelSpec {
    Family family = Family::cnn;
    std::int64_t height = 224;
    std::int64_t width = 224;
    std::int64_t channels = 3;
    std::int64_t num_classes = 15;

    std::int64_t vit_dim = 256;
    std::int64_t vit_depth = 6;
    std::int64_t vit_heads = 8;
    std::int64_t vit_mlp_ratio = 4;
    double vit_dropout = 0.1;

    std::int64_t cnn_filters1 = 32;
    std::int64_t cnn_filters2 = 64;
    std::int64_t cnn_dense = 512;

    std::int64_t resnet_width = 64;
    std::vector<std::int64_t> resnet_blocks = {3, 4, 6, 3};

    std::uint64_t seed = 0;

    /// 32 for the ViT/32 variants, 16 for the hybrid, 0 otherwise.
    int patch_size() const;
    /// Throws ConfigError when a family-specific constraint fails.
    void validate() const;

    /// Writes every field as `key=value` (keys prefixed by `prefix`).
    void write(KeyValueConfig& out, const std::string& prefix = "") const;
    /// Reads fields present in `in`, keeping defaults for missing ones.
    static ModelSpec read(const KeyValueConfig& in, const std::string& prefix = "");

    bool operator==(const ModelSpec&) const = default;
};

/// Snapshot of all parameter and buffer values, in registry order.
using ModelState = std::vector<std::vector<double>>;

class Model {
 public:
    Model(ModelSpec spec, std::unique_ptr<Sequential> net, MultiHeadAttention* last_attention_layer,
          std::int64_t grid_h, std::int64_t grid_w);

    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;

    const ModelSpec& spec() const { return spec_; }
    Family family() const { return spec_.family; }
    bool emits_logits() const { return family_emits_logits(spec_.family); }

    /// [N,C,H,W] -> [N,num_classes]; probabilities or logits per the family's head.
    Tensor forward(const Tensor& x, ForwardContext& ctx);
    /// Evaluation-mode forward without graph recording; always probabilities.
    Tensor predict(const Tensor& x);

    TensorList& parameters() { return params_; }
    const TensorList& parameters() const { return params_; }
    TensorList& buffers() { return buffers_; }
    const TensorList& buffers() const { return buffers_; }
    std::int64_t parameter_count() const;
    void zero_grad();

    ModelState snapshot() const;
    void restore(const ModelState& state);
    /// Independent copy with identical parameter and buffer values.
    Model clone() const;

    Sequential& network() { return *net_; }
    /// Last encoder attention layer; null for cnn/resnet.
    MultiHeadAttention* last_attention_layer() const { return last_attention_; }
    std::int64_t token_grid_height() const { return grid_h_; }
    std::int64_t token_grid_width() const { return grid_w_; }

 private:
    ModelSpec spec_;
    std::unique_ptr<Sequential> net_;
    MultiHeadAttention* last_attention_ = nullptr;
    std::int64_t grid_h_ = 0, grid_w_ = 0;
    TensorList params_;
    TensorList buffers_;
};

/// conv(3x3)+ReLU -> maxpool 2 -> conv(3x3)+ReLU -> maxpool 2 -> flatten ->
/// dense+ReLU -> dense+sigmoid, valid padding throughout.
Model build_cnn(const ModelSpec& spec);
/// 7x7/2 stem with BN, ReLU, 3x3/2 max pool; four stages of basic blocks;
/// global average pool; dense+sigmoid.
Model build_resnet(const ModelSpec& spec);
/// Patch-32 encoder with mean-pooled tokens and a sigmoid head.
Model build_vit(const ModelSpec& spec);
/// ResNet stem and first stage as feature extractor, then the ViT encoder on
/// a /16 token grid; the head emits logits.
Model build_hybrid(const ModelSpec& spec);
/// Dispatches on spec.family.
Model build_model(const ModelSpec& spec);

/// Two 3x3 conv+BN layers with a skip connection; the skip is a 1x1 conv+BN
/// projection when the stride or width changes.
class BasicBlock : public Module {
 public:
    BasicBlock(std::int64_t in_channels, std::int64_t out_channels, int stride, std::mt19937_64& rng);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    bool has_projection() const { return projection_ != nullptr; }

 private:
    Conv2d conv1_;
    NormLayer bn1_;
    Conv2d conv2_;
    NormLayer bn2_;
    std::unique_ptr<Conv2d> projection_;
    std::unique_ptr<NormLayer> projection_bn_;
};

/// Pre-norm transformer encoder block: x + MHA(LN(x)), then h + MLP(LN(h)).
class TransformerBlock : public Module {
 public:
    TransformerBlock(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio, std::mt19937_64& rng);

    Tensor forward(const Tensor& x, ForwardContext& ctx) override;
    void collect(const std::string& prefix, TensorList& params, TensorList& buffers) override;

    MultiHeadAttention& attention() { return attention_; }

 private:
    NormLayer norm1_;
    MultiHeadAttention attention_;
    NormLayer norm2_;
    Dense fc1_;
    Dense fc2_;
};

}  // namespace xrf
