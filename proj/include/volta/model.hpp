#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "volta/layers.hpp"

namespace volta {

/// Hyperparameters of the three-stage compact CNN:
///   conv1 -> bn1 -> relu -> maxpool -> conv2 -> bn2 -> relu -> conv3 -> bn3 -> relu -> flatten -> linear
/// With the defaults, a 3x32x32 input chains through
///   12x34x34 -> 12x11x11 -> 20x13x13 -> 32x15x15 -> 7200 -> num_classes.
struct ArchitectureConfig {
    std::size_t input_channels = 3;
    std::size_t input_h = 32;
    std::size_t input_w = 32;
    std::array<std::size_t, 3> conv_filters{12, 20, 32};
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 2;
    std::size_t pool_kernel = 3;
    std::size_t pool_stride = 3;
    std::size_t num_classes = 3;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;

    /// Throws ConfigError for num_classes < 2 or geometry that leaves no output.
    void validate() const;

    /// Per-sample stage output shapes (n = 1), one entry per layer.
    std::vector<Shape4> shape_chain() const;
    std::size_t flatten_width() const;

    /// Equal in everything except num_classes.
    bool same_backbone(const ArchitectureConfig& other) const;

    friend bool operator==(const ArchitectureConfig&, const ArchitectureConfig&) = default;
};

enum class TrainablePolicy { head_only, all };

std::string_view to_string(TrainablePolicy policy);
TrainablePolicy parse_policy(std::string_view text);

struct ParameterCount {
    std::size_t trainable = 0;         // every learnable scalar
    std::size_t total_with_stats = 0;  // plus batchnorm running statistics
};

/// Named view of a trainable tensor inside a model.
template <typename T>
struct ParamGroup {
    std::string name;
    std::size_t layer;
    ParamSlot<T> slot;
};

/// One checkpoint manifest entry: a trainable tensor or a running statistic.
template <typename T>
struct TensorEntry {
    std::size_t layer;
    LayerKind kind;
    std::string_view role;
    std::size_t rank;
    const BasicTensor<T>* tensor;
};

/// Ordered layer graph with a per-parameter-group trainable mask.
///
/// forward(x, Pass::train) caches each layer input from the first trainable
/// layer onward; backward() consumes that cache. A batchnorm layer runs with
/// batch statistics only when its own parameters are trainable, so frozen
/// layers never change state.
template <typename T>
class BasicModel {
public:
    /// Builds the layer list with deterministic default values (zero weights,
    /// unit gamma and running variance). Use build_voltavision for a seeded model.
    explicit BasicModel(ArchitectureConfig config);

    const ArchitectureConfig& config() const noexcept { return config_; }
    std::vector<LayerNode<T>>& layers() noexcept { return layers_; }
    const std::vector<LayerNode<T>>& layers() const noexcept { return layers_; }
    static const std::vector<std::string>& layer_names();

    LinearLayer<T>& head() { return std::get<LinearLayer<T>>(layers_.back()); }
    const LinearLayer<T>& head() const { return std::get<LinearLayer<T>>(layers_.back()); }

    BasicTensor<T> forward(const BasicTensor<T>& x, Pass pass);
    /// Runs layers [first, last). Under Pass::train, caches inputs needed by backward().
    BasicTensor<T> forward_range(const BasicTensor<T>& x, std::size_t first, std::size_t last, Pass pass);

    /// Backpropagates from the output of the last layer run under Pass::train
    /// down to the first trainable layer, filling parameter gradients.
    void backward(const BasicTensor<T>& grad_output);

    std::vector<ParamGroup<T>> parameter_groups();
    std::vector<TensorEntry<T>> tensor_entries() const;

    const std::vector<bool>& trainable_mask() const noexcept { return mask_; }
    void set_trainable_mask(std::vector<bool> mask);
    void set_trainable(TrainablePolicy policy);
    bool layer_trainable(std::size_t layer) const;
    /// layers().size() when nothing is trainable.
    std::size_t first_trainable_layer() const;
    /// Layer pass used for training: train only where the layer learns.
    Pass training_pass(std::size_t layer) const;

    ParameterCount count_parameters() const;
    std::size_t active_parameter_count() const;

    template <typename U>
    BasicModel<U> cast() const
    {
        BasicModel<U> out(config_);
        for (std::size_t i = 0; i < layers_.size(); ++i) out.layers()[i] = cast_layer<U, T>(layers_[i]);
        out.provenance = provenance;
        out.class_names = class_names;
        out.set_trainable_mask(mask_);
        return out;
    }

    /// Free-text note on where the backbone weights came from; empty for scratch.
    std::string provenance;
    /// Head output labels; empty when unknown, otherwise num_classes entries.
    std::vector<std::string> class_names;

private:
    ArchitectureConfig config_;
    std::vector<LayerNode<T>> layers_;
    std::vector<bool> mask_;
    std::vector<std::size_t> group_layer_;
    std::vector<BasicTensor<T>> cached_inputs_;
    std::size_t cached_first_ = 0;
    std::size_t cached_last_ = 0;
};

using ModelGraph = BasicModel<float>;

/// Seeded model per the default architecture; num_classes < 2 throws ConfigError.
ModelGraph build_voltavision(std::size_t num_classes, std::uint64_t seed);
ModelGraph build_model(const ArchitectureConfig& config, std::uint64_t seed);

ParameterCount count_parameters(const ModelGraph& model);

/// Copy of `model` with a freshly initialized head of `num_classes` outputs.
/// Backbone parameters, running statistics and the trainable mask are kept.
ModelGraph replace_head(const ModelGraph& model, std::size_t num_classes, std::uint64_t seed);

ModelGraph set_trainable(ModelGraph model, TrainablePolicy policy);

/// FNV-1a over the raw bytes of every backbone tensor (all but the head).
std::uint64_t backbone_checksum(const ModelGraph& model);

}  // namespace volta
