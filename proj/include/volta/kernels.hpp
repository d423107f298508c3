#pragma once

// Compute kernels for convolution, max pooling and the fully connected layer.
//
// Two implementations share one signature set:
//   volta::reference  serial loops written for clarity, used as the test baseline
//   volta::parallel   OpenMP versions used by the layers
// Both are deterministic: every output element is reduced by exactly one
// thread in a fixed order, so results do not depend on the thread count.

#include <cstddef>
#include <vector>

#include "volta/tensor.hpp"

namespace volta {

struct ConvGeometry {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    /// floor((extent + 2 * padding - kernel) / stride) + 1; throws if < 1.
    std::size_t out_extent(std::size_t extent) const;
    Shape4 output_shape(const Shape4& input) const;
    Shape4 weight_shape() const { return {out_channels, in_channels, kernel, kernel}; }
    Shape4 bias_shape() const { return {out_channels, 1, 1, 1}; }
    std::size_t parameter_count() const { return out_channels * (in_channels * kernel * kernel + 1); }
};

struct PoolGeometry {
    std::size_t kernel = 0;
    std::size_t stride = 0;

    Shape4 output_shape(const Shape4& input) const;
};

template <typename T>
struct ConvGrads {
    BasicTensor<T> input;  // empty when not requested
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

template <typename T>
struct LinearGrads {
    BasicTensor<T> input;
    BasicTensor<T> weight;
    BasicTensor<T> bias;
};

#define VOLTA_KERNEL_DECLS                                                                                          \
    template <typename T>                                                                                           \
    BasicTensor<T> conv2d_forward(const ConvGeometry& geo, const BasicTensor<T>& x, const BasicTensor<T>& weight,  \
                                  const BasicTensor<T>& bias);                                                      \
    template <typename T>                                                                                           \
    ConvGrads<T> conv2d_backward(const ConvGeometry& geo, const BasicTensor<T>& x, const BasicTensor<T>& weight,   \
                                 const BasicTensor<T>& grad_out, bool need_input_grad);                             \
    /* argmax receives, per output element, the flat input index of its window's winner. */                        \
    template <typename T>                                                                                           \
    BasicTensor<T> maxpool_forward(const PoolGeometry& geo, const BasicTensor<T>& x,                               \
                                   std::vector<std::size_t>* argmax);                                               \
    template <typename T>                                                                                           \
    BasicTensor<T> maxpool_backward(const Shape4& input_shape, const std::vector<std::size_t>& argmax,             \
                                    const BasicTensor<T>& grad_out);                                                \
    template <typename T>                                                                                           \
    BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias); \
    template <typename T>                                                                                           \
    LinearGrads<T> linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight,                          \
                                   const BasicTensor<T>& grad_out, bool need_input_grad);

namespace reference {
VOLTA_KERNEL_DECLS
}  // namespace reference

namespace parallel {
VOLTA_KERNEL_DECLS
}  // namespace parallel

#undef VOLTA_KERNEL_DECLS

namespace detail {
void check_conv_args(const ConvGeometry& geo, const Shape4& x, const Shape4& weight, const Shape4* bias);
void check_linear_args(const Shape4& x, const Shape4& weight);
}  // namespace detail

}  // namespace volta
