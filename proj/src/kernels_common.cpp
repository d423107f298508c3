#include "volta/kernels.hpp"

#include <string>

namespace volta {

std::size_t ConvGeometry::out_extent(std::size_t extent) const
{
    const std::size_t padded = extent + 2 * padding;
    if (stride == 0 || kernel == 0 || padded < kernel) {
        throw ShapeError("convolution with kernel " + std::to_string(kernel) + ", stride " + std::to_string(stride) +
                         ", padding " + std::to_string(padding) + " produces no output for extent " +
                         std::to_string(extent));
    }
    return (padded - kernel) / stride + 1;
}

Shape4 ConvGeometry::output_shape(const Shape4& input) const
{
    if (input.c != in_channels) {
        throw ShapeError("convolution expects " + std::to_string(in_channels) + " input channels, got input " +
                         to_string(input) + " for weights " + to_string(weight_shape()));
    }
    return {input.n, out_channels, out_extent(input.h), out_extent(input.w)};
}

Shape4 PoolGeometry::output_shape(const Shape4& input) const
{
    if (kernel == 0 || stride == 0) throw ShapeError("max pool kernel and stride must be positive");
    if (input.h < kernel || input.w < kernel) {
        throw ShapeError("max pool kernel " + std::to_string(kernel) + " larger than input " + to_string(input));
    }
    return {input.n, input.c, (input.h - kernel) / stride + 1, (input.w - kernel) / stride + 1};
}

namespace detail {

void check_conv_args(const ConvGeometry& geo, const Shape4& x, const Shape4& weight, const Shape4* bias)
{
    if (weight != geo.weight_shape()) {
        throw ShapeError("convolution weight shape " + to_string(weight) + " does not match geometry " +
                         to_string(geo.weight_shape()));
    }
    if (bias != nullptr && *bias != geo.bias_shape()) {
        throw ShapeError("convolution bias shape " + to_string(*bias) + " does not match " +
                         to_string(geo.bias_shape()));
    }
    (void)geo.output_shape(x);
}

void check_linear_args(const Shape4& x, const Shape4& weight)
{
    if (x.h != 1 || x.w != 1 || weight.h != 1 || weight.w != 1 || x.c != weight.c) {
        throw ShapeError("linear layer with weights " + to_string(weight) + " cannot take input " + to_string(x));
    }
}

}  // namespace detail
}  // namespace volta
