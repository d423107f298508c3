#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "volta/kernels.hpp"
#include "volta/rng.hpp"
#include "volta/tensor.hpp"

namespace volta {

enum class LayerKind : std::uint8_t {
    conv = 1,
    batchnorm = 2,
    relu = 3,
    maxpool = 4,
    flatten = 5,
    linear = 6,
};

std::string_view to_string(LayerKind kind);

/// train: batchnorm uses batch statistics and updates running stats.
/// infer: every layer is a pure function.
enum class Pass { infer, train };

/// Non-owning view of one trainable tensor and its gradient buffer.
/// `rank` is the number of leading Shape4 extents that are meaningful.
template <typename T>
struct ParamSlot {
    std::string_view role;
    BasicTensor<T>* value;
    BasicTensor<T>* grad;
    std::size_t rank;
};

/// Non-trainable state carried in checkpoints (batchnorm running statistics).
template <typename T>
struct BufferSlot {
    std::string_view role;
    BasicTensor<T>* value;
    std::size_t rank;
};

template <typename T>
class ConvLayer {
public:
    static constexpr LayerKind kind = LayerKind::conv;

    explicit ConvLayer(ConvGeometry geo);

    /// Weights uniform in +-sqrt(6 / fan_in), bias zero.
    void initialize(Rng& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x, Pass pass);
    BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass pass, bool need_input_grad);
    Shape4 output_shape(const Shape4& in) const { return geometry.output_shape(in); }

    std::vector<ParamSlot<T>> parameters();
    std::vector<BufferSlot<T>> buffers() { return {}; }

    ConvGeometry geometry;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
    BasicTensor<T> weight_grad;
    BasicTensor<T> bias_grad;
};

template <typename T>
class BatchNormLayer {
public:
    static constexpr LayerKind kind = LayerKind::batchnorm;

    BatchNormLayer(std::size_t channels, double eps, double momentum);

    void initialize(Rng&) {}

    /// Train: per-channel statistics over (n, h, w); the biased variance both
    /// normalizes and feeds the running-variance update
    ///   running <- (1 - momentum) * running + momentum * batch.
    /// Throws DataError when a channel has fewer than two elements.
    BasicTensor<T> forward(const BasicTensor<T>& x, Pass pass);

    /// Recomputes the statistics of `x` that the matching forward pass used.
    BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass pass, bool need_input_grad);
    Shape4 output_shape(const Shape4& in) const;

    std::vector<ParamSlot<T>> parameters();
    std::vector<BufferSlot<T>> buffers();

    std::size_t channels;
    double eps;
    double momentum;
    BasicTensor<T> gamma;
    BasicTensor<T> beta;
    BasicTensor<T> running_mean;
    BasicTensor<T> running_var;
    BasicTensor<T> gamma_grad;
    BasicTensor<T> beta_grad;
};

template <typename T>
class ReluLayer {
public:
    static constexpr LayerKind kind = LayerKind::relu;

    void initialize(Rng&) {}
    BasicTensor<T> forward(const BasicTensor<T>& x, Pass pass);
    /// Passes the gradient where x > 0; the subgradient at 0 is 0.
    BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass pass, bool need_input_grad);
    Shape4 output_shape(const Shape4& in) const { return in; }
    std::vector<ParamSlot<T>> parameters() { return {}; }
    std::vector<BufferSlot<T>> buffers() { return {}; }
};

template <typename T>
class MaxPoolLayer {
public:
    static constexpr LayerKind kind = LayerKind::maxpool;

    explicit MaxPoolLayer(PoolGeometry geo) : geometry(geo) {}

    void initialize(Rng&) {}
    /// Ties go to the first element in row-major window order.
    BasicTensor<T> forward(const BasicTensor<T>& x, Pass pass);
    /// Re-derives the window winners from `x`, so it never depends on which
    /// input the last forward call saw.
    BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass pass, bool need_input_grad);
    Shape4 output_shape(const Shape4& in) const { return geometry.output_shape(in); }
    std::vector<ParamSlot<T>> parameters() { return {}; }
    std::vector<BufferSlot<T>> buffers() { return {}; }

    PoolGeometry geometry;
    std::vector<std::size_t> argmax;  // winners of the last train forward or backward
};

template <typename T>
class FlattenLayer {
public:
    static constexpr LayerKind kind = LayerKind::flatten;

    void initialize(Rng&) {}
    BasicTensor<T> forward(const BasicTensor<T>& x, Pass) { return flatten_to_rows(x); }
    BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass, bool need_input_grad);
    Shape4 output_shape(const Shape4& in) const { return {in.n, in.per_sample(), 1, 1}; }
    std::vector<ParamSlot<T>> parameters() { return {}; }
    std::vector<BufferSlot<T>> buffers() { return {}; }
};

template <typename T>
class LinearLayer {
public:
    static constexpr LayerKind kind = LayerKind::linear;

    LinearLayer(std::size_t in_features, std::size_t out_features);

    /// Weights uniform in +-sqrt(6 / in_features), bias zero.
    void initialize(Rng& rng);

    BasicTensor<T> forward(const BasicTensor<T>& x, Pass pass);
    BasicTensor<T> backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass pass, bool need_input_grad);
    Shape4 output_shape(const Shape4& in) const;
    std::size_t parameter_count() const { return out_features * (in_features + 1); }

    std::vector<ParamSlot<T>> parameters();
    std::vector<BufferSlot<T>> buffers() { return {}; }

    std::size_t in_features;
    std::size_t out_features;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
    BasicTensor<T> weight_grad;
    BasicTensor<T> bias_grad;
};

template <typename T>
using LayerNode =
    std::variant<ConvLayer<T>, BatchNormLayer<T>, ReluLayer<T>, MaxPoolLayer<T>, FlattenLayer<T>, LinearLayer<T>>;

template <typename T>
LayerKind kind_of(const LayerNode<T>& node)
{
    return std::visit([](const auto& layer) { return std::decay_t<decltype(layer)>::kind; }, node);
}

/// Converts trainable values and running statistics to another precision;
/// gradient buffers are reset to zero.
template <typename U, typename T>
LayerNode<U> cast_layer(const LayerNode<T>& node);

}  // namespace volta
