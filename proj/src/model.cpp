#include "volta/model.hpp"

#include <cstring>
#include <string>

namespace volta {

namespace {

constexpr std::size_t kLayerCount = 12;
constexpr std::size_t kGroupCount = 14;

}  // namespace

// ---- configuration --------------------------------------------------------

void ArchitectureConfig::validate() const
{
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2, got " + std::to_string(num_classes));
    if (input_channels == 0 || input_h == 0 || input_w == 0) throw ConfigError("input extents must be positive");
    for (std::size_t f : conv_filters)
        if (f == 0) throw ConfigError("convolution filter counts must be positive");
    if (kernel == 0 || stride == 0 || pool_kernel == 0 || pool_stride == 0) {
        throw ConfigError("kernel and stride sizes must be positive");
    }
    if (!(bn_eps > 0.0) || !(bn_momentum > 0.0 && bn_momentum < 1.0)) {
        throw ConfigError("batchnorm eps must be positive and momentum in (0, 1)");
    }
    try {
        (void)shape_chain();
    } catch (const ShapeError& e) {
        throw ConfigError(std::string("architecture leaves no spatial output: ") + e.what());
    }
}

std::vector<Shape4> ArchitectureConfig::shape_chain() const
{
    std::vector<Shape4> chain;
    Shape4 s{1, input_channels, input_h, input_w};
    std::size_t in_c = input_channels;
    for (std::size_t stage = 0; stage < 3; ++stage) {
        const ConvGeometry geo{in_c, conv_filters[stage], kernel, stride, padding};
        s = geo.output_shape(s);
        chain.push_back(s);  // conv
        chain.push_back(s);  // bn
        chain.push_back(s);  // relu
        if (stage == 0) {
            s = PoolGeometry{pool_kernel, pool_stride}.output_shape(s);
            chain.push_back(s);
        }
        in_c = conv_filters[stage];
    }
    s = {1, s.per_sample(), 1, 1};
    chain.push_back(s);
    chain.push_back({1, num_classes, 1, 1});
    return chain;
}

std::size_t ArchitectureConfig::flatten_width() const
{
    return shape_chain()[kLayerCount - 2].c;
}

bool ArchitectureConfig::same_backbone(const ArchitectureConfig& other) const
{
    ArchitectureConfig a = *this;
    a.num_classes = other.num_classes;
    return a == other;
}

std::string_view to_string(TrainablePolicy policy)
{
    return policy == TrainablePolicy::all ? "all" : "head_only";
}

TrainablePolicy parse_policy(std::string_view text)
{
    if (text == "all") return TrainablePolicy::all;
    if (text == "head_only") return TrainablePolicy::head_only;
    throw ConfigError("unknown trainable policy '" + std::string(text) + "'");
}

// ---- model ----------------------------------------------------------------

template <typename T>
const std::vector<std::string>& BasicModel<T>::layer_names()
{
    static const std::vector<std::string> names{"conv1", "bn1",   "relu1", "pool1",   "conv2", "bn2",
                                                "relu2", "conv3", "bn3",   "relu3", "flatten", "head"};
    return names;
}

template <typename T>
BasicModel<T>::BasicModel(ArchitectureConfig config) : config_(config)
{
    config_.validate();
    std::size_t in_c = config_.input_channels;
    for (std::size_t stage = 0; stage < 3; ++stage) {
        const std::size_t out_c = config_.conv_filters[stage];
        layers_.emplace_back(ConvLayer<T>({in_c, out_c, config_.kernel, config_.stride, config_.padding}));
        layers_.emplace_back(BatchNormLayer<T>(out_c, config_.bn_eps, config_.bn_momentum));
        layers_.emplace_back(ReluLayer<T>{});
        if (stage == 0) layers_.emplace_back(MaxPoolLayer<T>({config_.pool_kernel, config_.pool_stride}));
        in_c = out_c;
    }
    layers_.emplace_back(FlattenLayer<T>{});
    layers_.emplace_back(LinearLayer<T>(config_.flatten_width(), config_.num_classes));
    for (const auto& group : parameter_groups()) group_layer_.push_back(group.layer);
    mask_.assign(kGroupCount, true);
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& x, Pass pass)
{
    return forward_range(x, 0, layers_.size(), pass);
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward_range(const BasicTensor<T>& x, std::size_t first, std::size_t last, Pass pass)
{
    if (first > last || last > layers_.size()) throw ShapeError("invalid layer range");
    if (first == 0) {
        const Shape4 s = x.shape();
        if (s.c != config_.input_channels || s.h != config_.input_h || s.w != config_.input_w) {
            throw ShapeError("model expects input (n," + std::to_string(config_.input_channels) + "," +
                             std::to_string(config_.input_h) + "," + std::to_string(config_.input_w) + "), got " +
                             to_string(s));
        }
    }
    const std::size_t trainable_from = first_trainable_layer();
    if (pass == Pass::train) {
        cached_inputs_.assign(layers_.size(), BasicTensor<T>{});
        cached_first_ = std::max(first, trainable_from);
        cached_last_ = last;
    }
    BasicTensor<T> act = x;
    for (std::size_t i = first; i < last; ++i) {
        const Pass layer_pass = pass == Pass::train ? training_pass(i) : Pass::infer;
        if (pass == Pass::train && i >= trainable_from) cached_inputs_[i] = act;
        act = std::visit([&](auto& layer) { return layer.forward(act, layer_pass); }, layers_[i]);
    }
    return act;
}

template <typename T>
void BasicModel<T>::backward(const BasicTensor<T>& grad_output)
{
    if (cached_last_ == 0 || cached_inputs_.empty()) throw Error("backward called without a train-pass forward");
    BasicTensor<T> grad = grad_output;
    for (std::size_t i = cached_last_; i-- > cached_first_;) {
        const bool need_input_grad = i > cached_first_;
        grad = std::visit(
            [&](auto& layer) { return layer.backward(cached_inputs_[i], grad, training_pass(i), need_input_grad); },
            layers_[i]);
    }
}

template <typename T>
std::vector<ParamGroup<T>> BasicModel<T>::parameter_groups()
{
    std::vector<ParamGroup<T>> groups;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        auto slots = std::visit([](auto& layer) { return layer.parameters(); }, layers_[i]);
        for (const auto& slot : slots) groups.push_back({layer_names()[i] + "." + std::string(slot.role), i, slot});
    }
    return groups;
}

template <typename T>
std::vector<TensorEntry<T>> BasicModel<T>::tensor_entries() const
{
    std::vector<TensorEntry<T>> entries;
    auto& self = const_cast<BasicModel&>(*this);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::visit(
            [&](auto& layer) {
                using L = std::decay_t<decltype(layer)>;
                for (const auto& p : layer.parameters()) entries.push_back({i, L::kind, p.role, p.rank, p.value});
                for (const auto& b : layer.buffers()) entries.push_back({i, L::kind, b.role, b.rank, b.value});
            },
            self.layers_[i]);
    }
    return entries;
}

template <typename T>
void BasicModel<T>::set_trainable_mask(std::vector<bool> mask)
{
    if (mask.size() != kGroupCount) throw ConfigError("trainable mask must have one flag per parameter group");
    mask_ = std::move(mask);
}

template <typename T>
void BasicModel<T>::set_trainable(TrainablePolicy policy)
{
    mask_.assign(kGroupCount, policy == TrainablePolicy::all);
    mask_[kGroupCount - 2] = true;
    mask_[kGroupCount - 1] = true;
}

template <typename T>
bool BasicModel<T>::layer_trainable(std::size_t layer) const
{
    for (std::size_t g = 0; g < group_layer_.size(); ++g)
        if (group_layer_[g] == layer && mask_[g]) return true;
    return false;
}

template <typename T>
std::size_t BasicModel<T>::first_trainable_layer() const
{
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layer_trainable(i)) return i;
    return layers_.size();
}

template <typename T>
Pass BasicModel<T>::training_pass(std::size_t layer) const
{
    if (layer < first_trainable_layer()) return Pass::infer;
    if (kind_of(layers_[layer]) == LayerKind::batchnorm && !layer_trainable(layer)) return Pass::infer;
    return Pass::train;
}

template <typename T>
ParameterCount BasicModel<T>::count_parameters() const
{
    ParameterCount count;
    for (const auto& e : tensor_entries()) {
        const bool is_buffer = e.role == "running_mean" || e.role == "running_var";
        if (!is_buffer) count.trainable += e.tensor->size();
        count.total_with_stats += e.tensor->size();
    }
    return count;
}

template <typename T>
std::size_t BasicModel<T>::active_parameter_count() const
{
    auto& self = const_cast<BasicModel&>(*this);
    std::size_t total = 0;
    const auto groups = self.parameter_groups();
    for (std::size_t g = 0; g < groups.size(); ++g)
        if (mask_[g]) total += groups[g].slot.value->size();
    return total;
}

template class BasicModel<float>;
template class BasicModel<double>;

// ---- free functions -------------------------------------------------------

ModelGraph build_model(const ArchitectureConfig& config, std::uint64_t seed)
{
    ModelGraph model(config);
    Rng rng(seed);
    for (auto& layer : model.layers()) std::visit([&](auto& l) { l.initialize(rng); }, layer);
    return model;
}

ModelGraph build_voltavision(std::size_t num_classes, std::uint64_t seed)
{
    ArchitectureConfig config;
    config.num_classes = num_classes;
    return build_model(config, seed);
}

ParameterCount count_parameters(const ModelGraph& model)
{
    return model.count_parameters();
}

ModelGraph replace_head(const ModelGraph& model, std::size_t num_classes, std::uint64_t seed)
{
    if (num_classes < 2) throw ConfigError("num_classes must be at least 2, got " + std::to_string(num_classes));
    ArchitectureConfig config = model.config();
    config.num_classes = num_classes;
    ModelGraph out(config);
    for (std::size_t i = 0; i + 1 < model.layers().size(); ++i) out.layers()[i] = model.layers()[i];
    Rng rng(seed, /*stream=*/1);
    out.head().initialize(rng);
    out.provenance = model.provenance;
    out.set_trainable_mask(model.trainable_mask());
    return out;
}

ModelGraph set_trainable(ModelGraph model, TrainablePolicy policy)
{
    model.set_trainable(policy);
    return model;
}

std::uint64_t backbone_checksum(const ModelGraph& model)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const std::size_t head = model.layers().size() - 1;
    for (const auto& e : model.tensor_entries()) {
        if (e.layer == head) continue;
        const auto* bytes = reinterpret_cast<const unsigned char*>(e.tensor->raw());
        for (std::size_t i = 0; i < e.tensor->size() * sizeof(float); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace volta
