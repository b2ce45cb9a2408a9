#include "xrf/models.h"

#include <sstream>

#include "xrf/error.h"
#include "xrf/rng.h"

namespace xrf {

std::string_view family_name(Family family) {
    switch (family) {
        case Family::cnn:
            return "cnn";
        case Family::resnet:
            return "resnet";
        case Family::vit_v1_32:
            return "vit_v1_32";
        case Family::vit_v2_32:
            return "vit_v2_32";
        case Family::vit_resnet_16:
            return "vit_resnet_16";
    }
    return "?";
}

Family parse_family(std::string_view name) {
    for (Family f : {Family::cnn, Family::resnet, Family::vit_v1_32, Family::vit_v2_32, Family::vit_resnet_16}) {
        if (family_name(f) == name) return f;
    }
    throw ConfigError("field 'family': unknown model family '" + std::string(name) +
                      "' (expected cnn, resnet, vit_v1_32, vit_v2_32 or vit_resnet_16)");
}

bool is_vit_family(Family family) {
    return family == Family::vit_v1_32 || family == Family::vit_v2_32 || family == Family::vit_resnet_16;
}

bool family_emits_logits(Family family) { return family == Family::vit_resnet_16; }

// ---------------------------------------------------------------------------

int ModelSpec::patch_size() const {
    switch (family) {
        case Family::vit_v1_32:
        case Family::vit_v2_32:
            return 32;
        case Family::vit_resnet_16:
            return 16;
        default:
            return 0;
    }
}

namespace {

std::int64_t stem_extent(std::int64_t in) {
    const auto conv = conv_output_extent(in, 7, 2, 3);
    return conv < 1 ? 0 : conv_output_extent(conv, 3, 2, 1);
}

}  // namespace

void ModelSpec::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (height <= 0 || width <= 0 || channels <= 0) fail("input extents must be positive");
    if (num_classes <= 0) fail("num_classes must be positive");

    switch (family) {
        case Family::cnn: {
            if (cnn_filters1 <= 0 || cnn_filters2 <= 0 || cnn_dense <= 0) fail("cnn widths must be positive");
            auto extent = [](std::int64_t e) {
                e = conv_output_extent(e, 3, 1, 0);
                e = e < 1 ? 0 : conv_output_extent(e, 2, 2, 0);
                e = e < 1 ? 0 : conv_output_extent(e, 3, 1, 0);
                return e < 1 ? 0 : conv_output_extent(e, 2, 2, 0);
            };
            if (extent(height) < 1 || extent(width) < 1) {
                fail("cnn input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is smaller than the receptive field chain (needs at least 10x10)");
            }
            break;
        }
        case Family::resnet:
        case Family::vit_resnet_16: {
            if (resnet_width <= 0) fail("resnet_width must be positive");
            if (resnet_blocks.empty()) fail("resnet_blocks must list at least one stage");
            for (auto b : resnet_blocks) {
                if (b <= 0) fail("resnet_blocks entries must be positive");
            }
            if (family == Family::resnet) {
                if (stem_extent(height) < 1 || stem_extent(width) < 1) fail("resnet input too small for the stem");
                break;
            }
            [[fallthrough]];
        }
        case Family::vit_v1_32:
        case Family::vit_v2_32: {
            const int p = patch_size();
            if (height % p != 0 || width % p != 0) {
                fail("input " + std::to_string(height) + "x" + std::to_string(width) + " is not divisible by patch " +
                     std::to_string(p));
            }
            if (vit_dim <= 0 || vit_depth <= 0 || vit_heads <= 0 || vit_mlp_ratio <= 0) {
                fail("vit dims must be positive");
            }
            if (vit_dim % vit_heads != 0) {
                fail("vit_dim " + std::to_string(vit_dim) + " is not divisible by vit_heads " +
                     std::to_string(vit_heads));
            }
            if (!(vit_dropout >= 0.0 && vit_dropout < 1.0)) fail("vit_dropout must lie in [0, 1)");
            break;
        }
    }
}

void ModelSpec::write(KeyValueConfig& out, const std::string& prefix) const {
    auto put = [&](const char* key, std::string value) { out.set(prefix + key, std::move(value)); };
    put("family", std::string(family_name(family)));
    put("height", std::to_string(height));
    put("width", std::to_string(width));
    put("channels", std::to_string(channels));
    put("num_classes", std::to_string(num_classes));
    put("vit_dim", std::to_string(vit_dim));
    put("vit_depth", std::to_string(vit_depth));
    put("vit_heads", std::to_string(vit_heads));
    put("vit_mlp_ratio", std::to_string(vit_mlp_ratio));
    put("vit_dropout", format_double(vit_dropout));
    put("cnn_filters1", std::to_string(cnn_filters1));
    put("cnn_filters2", std::to_string(cnn_filters2));
    put("cnn_dense", std::to_string(cnn_dense));
    put("resnet_width", std::to_string(resnet_width));
    std::string blocks;
    for (std::size_t i = 0; i < resnet_blocks.size(); ++i) {
        if (i) blocks += ',';
        blocks += std::to_string(resnet_blocks[i]);
    }
    put("resnet_blocks", blocks);
    put("seed", std::to_string(seed));
}

ModelSpec ModelSpec::read(const KeyValueConfig& in, const std::string& prefix) {
    ModelSpec s;
    if (auto f = in.find(prefix + "family")) s.family = parse_family(*f);
    s.height = in.get_int(prefix + "height", s.height);
    s.width = in.get_int(prefix + "width", s.width);
    s.channels = in.get_int(prefix + "channels", s.channels);
    s.num_classes = in.get_int(prefix + "num_classes", s.num_classes);
    s.vit_dim = in.get_int(prefix + "vit_dim", s.vit_dim);
    s.vit_depth = in.get_int(prefix + "vit_depth", s.vit_depth);
    s.vit_heads = in.get_int(prefix + "vit_heads", s.vit_heads);
    s.vit_mlp_ratio = in.get_int(prefix + "vit_mlp_ratio", s.vit_mlp_ratio);
    s.vit_dropout = in.get_double(prefix + "vit_dropout", s.vit_dropout);
    s.cnn_filters1 = in.get_int(prefix + "cnn_filters1", s.cnn_filters1);
    s.cnn_filters2 = in.get_int(prefix + "cnn_filters2", s.cnn_filters2);
    s.cnn_dense = in.get_int(prefix + "cnn_dense", s.cnn_dense);
    s.resnet_width = in.get_int(prefix + "resnet_width", s.resnet_width);
    if (auto b = in.find(prefix + "resnet_blocks")) {
        s.resnet_blocks.clear();
        std::stringstream ss(*b);
        std::string item;
        while (std::getline(ss, item, ',')) {
            KeyValueConfig one;
            one.set("resnet_blocks", item);
            s.resnet_blocks.push_back(one.get_int("resnet_blocks", 0));
        }
    }
    s.seed = in.get_uint(prefix + "seed", s.seed);
    return s;
}

// ---------------------------------------------------------------------------

BasicBlock::BasicBlock(std::int64_t in_channels, std::int64_t out_channels, int stride, std::mt19937_64& rng)
    : conv1_({in_channels, out_channels, 3, stride, Padding::explicit_, 1, false}, rng),
      bn1_(NormLayer::Kind::batch, out_channels),
      conv2_({out_channels, out_channels, 3, 1, Padding::explicit_, 1, false}, rng),
      bn2_(NormLayer::Kind::batch, out_channels) {
    if (stride != 1 || in_channels != out_channels) {
        projection_ = std::make_unique<Conv2d>(
            Conv2dOptions{in_channels, out_channels, 1, stride, Padding::valid, 0, false}, rng);
        projection_bn_ = std::make_unique<NormLayer>(NormLayer::Kind::batch, out_channels);
    }
}

Tensor BasicBlock::forward(const Tensor& x, ForwardContext& ctx) {
    Tensor h = relu(bn1_.forward(conv1_.forward(x, ctx), ctx));
    h = bn2_.forward(conv2_.forward(h, ctx), ctx);
    Tensor skip = projection_ ? projection_bn_->forward(projection_->forward(x, ctx), ctx) : x;
    return relu(add(h, skip));
}

void BasicBlock::collect(const std::string& prefix, TensorList& params, TensorList& buffers) {
    conv1_.collect(join_name(prefix, "conv1"), params, buffers);
    bn1_.collect(join_name(prefix, "bn1"), params, buffers);
    conv2_.collect(join_name(prefix, "conv2"), params, buffers);
    bn2_.collect(join_name(prefix, "bn2"), params, buffers);
    if (projection_) {
        projection_->collect(join_name(prefix, "proj"), params, buffers);
        projection_bn_->collect(join_name(prefix, "proj_bn"), params, buffers);
    }
}

TransformerBlock::TransformerBlock(std::int64_t dim, std::int64_t heads, std::int64_t mlp_ratio,
                                   std::mt19937_64& rng)
    : norm1_(NormLayer::Kind::layer, dim),
      attention_(dim, heads, rng),
      norm2_(NormLayer::Kind::layer, dim),
      fc1_(dim, dim * mlp_ratio, Init::xavier_uniform, rng),
      fc2_(dim * mlp_ratio, dim, Init::xavier_uniform, rng) {}

Tensor TransformerBlock::forward(const Tensor& x, ForwardContext& ctx) {
    Tensor h = add(x, attention_.forward(norm1_.forward(x, ctx), ctx));
    Tensor m = fc2_.forward(gelu(fc1_.forward(norm2_.forward(h, ctx), ctx)), ctx);
    return add(h, m);
}

void TransformerBlock::collect(const std::string& prefix, TensorList& params, TensorList& buffers) {
    norm1_.collect(join_name(prefix, "norm1"), params, buffers);
    attention_.collect(join_name(prefix, "attn"), params, buffers);
    norm2_.collect(join_name(prefix, "norm2"), params, buffers);
    fc1_.collect(join_name(prefix, "fc1"), params, buffers);
    fc2_.collect(join_name(prefix, "fc2"), params, buffers);
}

// ---------------------------------------------------------------------------

Model::Model(ModelSpec spec, std::unique_ptr<Sequential> net, MultiHeadAttention* last_attention_layer,
             std::int64_t grid_h, std::int64_t grid_w)
    : spec_(std::move(spec)),
      net_(std::move(net)),
      last_attention_(last_attention_layer),
      grid_h_(grid_h),
      grid_w_(grid_w) {
    net_->collect("", params_, buffers_);
}

Tensor Model::forward(const Tensor& x, ForwardContext& ctx) {
    if (x.rank() != 4 || x.dim(1) != spec_.channels || x.dim(2) != spec_.height || x.dim(3) != spec_.width) {
        throw DimensionError("model expects [N," + std::to_string(spec_.channels) + "," +
                             std::to_string(spec_.height) + "," + std::to_string(spec_.width) + "], got " +
                             shape_str(x.shape()));
    }
    return net_->forward(x, ctx);
}

Tensor Model::predict(const Tensor& x) {
    NoGradGuard no_grad;
    ForwardContext ctx;
    Tensor y = forward(x, ctx);
    return emits_logits() ? sigmoid(y) : y;
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.tensor.numel();
    return n;
}

void Model::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

ModelState Model::snapshot() const {
    ModelState state;
    state.reserve(params_.size() + buffers_.size());
    for (const auto& p : params_) state.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
    for (const auto& b : buffers_) state.emplace_back(b.tensor.data().begin(), b.tensor.data().end());
    return state;
}

void Model::restore(const ModelState& state) {
    if (state.size() != params_.size() + buffers_.size()) throw DimensionError("model state entry count mismatch");
    std::size_t i = 0;
    for (auto* list : {&params_, &buffers_}) {
        for (auto& entry : *list) {
            auto dst = entry.tensor.mutable_data();
            if (state[i].size() != dst.size()) throw DimensionError("model state size mismatch at " + entry.name);
            std::copy(state[i].begin(), state[i].end(), dst.begin());
            ++i;
        }
    }
}

Model Model::clone() const {
    Model copy = build_model(spec_);
    copy.restore(snapshot());
    return copy;
}

// ---------------------------------------------------------------------------

namespace {

void require_family(const ModelSpec& spec, std::initializer_list<Family> allowed, const char* builder) {
    for (Family f : allowed) {
        if (spec.family == f) return;
    }
    throw ConfigError(std::string(builder) + " cannot build family '" + std::string(family_name(spec.family)) + "'");
}

void add_stem(Sequential& net, const ModelSpec& spec, std::mt19937_64& rng) {
    net.add("stem.conv",
            std::make_unique<Conv2d>(
                Conv2dOptions{spec.channels, spec.resnet_width, 7, 2, Padding::explicit_, 3, false}, rng));
    net.add("stem.bn", std::make_unique<NormLayer>(NormLayer::Kind::batch, spec.resnet_width));
    net.add("stem.relu", std::make_unique<Activation>(Activation::Kind::relu));
    net.add("stem.pool", std::make_unique<MaxPool2d>(3, 2, 1));
}

void add_stage(Sequential& net, int stage, std::int64_t in_channels, std::int64_t out_channels, int stride,
               std::int64_t blocks, std::mt19937_64& rng) {
    for (std::int64_t b = 0; b < blocks; ++b) {
        net.add("stage" + std::to_string(stage) + ".block" + std::to_string(b),
                std::make_unique<BasicBlock>(b == 0 ? in_channels : out_channels, out_channels, b == 0 ? stride : 1,
                                             rng));
    }
}

// Shared transformer tail: blocks, final norm, mean-pool, dropout, head.
MultiHeadAttention* add_encoder_and_head(Sequential& net, const ModelSpec& spec, std::mt19937_64& rng) {
    MultiHeadAttention* last = nullptr;
    for (std::int64_t i = 0; i < spec.vit_depth; ++i) {
        auto& block = net.add("block" + std::to_string(i),
                              std::make_unique<TransformerBlock>(spec.vit_dim, spec.vit_heads, spec.vit_mlp_ratio, rng));
        last = &block.attention();
    }
    net.add("norm", std::make_unique<NormLayer>(NormLayer::Kind::layer, spec.vit_dim));
    net.add("pool", std::make_unique<TokenMeanPool>());
    net.add("dropout", std::make_unique<Dropout>(spec.vit_dropout));
    net.add("head", std::make_unique<Dense>(spec.vit_dim, spec.num_classes, Init::xavier_uniform, rng));
    if (!family_emits_logits(spec.family)) net.add("sigmoid", std::make_unique<Activation>(Activation::Kind::sigmoid));
    return last;
}

}  // namespace

Model build_cnn(const ModelSpec& spec) {
    require_family(spec, {Family::cnn}, "build_cnn");
    spec.validate();
    auto rng = make_rng(spec.seed, "init");
    auto net = std::make_unique<Sequential>();
    net->add("conv1", std::make_unique<Conv2d>(Conv2dOptions{spec.channels, spec.cnn_filters1, 3, 1}, rng));
    net->add("relu1", std::make_unique<Activation>(Activation::Kind::relu));
    net->add("pool1", std::make_unique<MaxPool2d>(2, 2));
    net->add("conv2", std::make_unique<Conv2d>(Conv2dOptions{spec.cnn_filters1, spec.cnn_filters2, 3, 1}, rng));
    net->add("relu2", std::make_unique<Activation>(Activation::Kind::relu));
    net->add("pool2", std::make_unique<MaxPool2d>(2, 2));
    net->add("flatten", std::make_unique<Flatten>());

    auto extent = [](std::int64_t e) {
        e = conv_output_extent(e, 3, 1, 0);
        e = conv_output_extent(e, 2, 2, 0);
        e = conv_output_extent(e, 3, 1, 0);
        return conv_output_extent(e, 2, 2, 0);
    };
    const std::int64_t flat = spec.cnn_filters2 * extent(spec.height) * extent(spec.width);
    net->add("dense1", std::make_unique<Dense>(flat, spec.cnn_dense, Init::he_normal, rng));
    net->add("relu3", std::make_unique<Activation>(Activation::Kind::relu));
    net->add("dense2", std::make_unique<Dense>(spec.cnn_dense, spec.num_classes, Init::xavier_uniform, rng));
    net->add("sigmoid", std::make_unique<Activation>(Activation::Kind::sigmoid));
    return Model(spec, std::move(net), nullptr, 0, 0);
}

Model build_resnet(const ModelSpec& spec) {
    require_family(spec, {Family::resnet}, "build_resnet");
    spec.validate();
    auto rng = make_rng(spec.seed, "init");
    auto net = std::make_unique<Sequential>();
    add_stem(*net, spec, rng);
    std::int64_t channels = spec.resnet_width;
    for (std::size_t s = 0; s < spec.resnet_blocks.size(); ++s) {
        const std::int64_t width = spec.resnet_width << s;
        add_stage(*net, static_cast<int>(s + 1), channels, width, s == 0 ? 1 : 2, spec.resnet_blocks[s], rng);
        channels = width;
    }
    net->add("pool", std::make_unique<GlobalAvgPool>());
    net->add("head", std::make_unique<Dense>(channels, spec.num_classes, Init::xavier_uniform, rng));
    net->add("sigmoid", std::make_unique<Activation>(Activation::Kind::sigmoid));
    return Model(spec, std::move(net), nullptr, 0, 0);
}

Model build_vit(const ModelSpec& spec) {
    require_family(spec, {Family::vit_v1_32, Family::vit_v2_32}, "build_vit");
    spec.validate();
    auto rng = make_rng(spec.seed, "init");
    auto net = std::make_unique<Sequential>();
    auto& embed = net->add("embed", std::make_unique<PatchEmbedding>(spec.channels, spec.height, spec.width,
                                                                     spec.patch_size(), spec.vit_dim, rng));
    const auto gh = embed.grid_height(), gw = embed.grid_width();
    MultiHeadAttention* last = add_encoder_and_head(*net, spec, rng);
    return Model(spec, std::move(net), last, gh, gw);
}

Model build_hybrid(const ModelSpec& spec) {
    require_family(spec, {Family::vit_resnet_16}, "build_hybrid");
    spec.validate();
    auto rng = make_rng(spec.seed, "init");
    auto net = std::make_unique<Sequential>();
    add_stem(*net, spec, rng);
    add_stage(*net, 1, spec.resnet_width, spec.resnet_width, 1, spec.resnet_blocks.front(), rng);

    // The stem and first stage reduce resolution by 4; a 4x4 patch embedding on
    // that map gives one token per 16x16 input region.
    constexpr int feature_stride = 4;
    const int patch = spec.patch_size() / feature_stride;
    auto& embed = net->add("embed", std::make_unique<PatchEmbedding>(spec.resnet_width, spec.height / feature_stride,
                                                                     spec.width / feature_stride, patch, spec.vit_dim,
                                                                     rng));
    const auto gh = embed.grid_height(), gw = embed.grid_width();
    MultiHeadAttention* last = add_encoder_and_head(*net, spec, rng);
    return Model(spec, std::move(net), last, gh, gw);
}

Model build_model(const ModelSpec& spec) {
    switch (spec.family) {
        case Family::cnn:
            return build_cnn(spec);
        case Family::resnet:
            return build_resnet(spec);
        case Family::vit_v1_32:
        case Family::vit_v2_32:
            return build_vit(spec);
        case Family::vit_resnet_16:
            return build_hybrid(spec);
    }
    throw ConfigError("unknown family");
}

}  // namespace xrf
