#include "volta/kernels.hpp"

namespace volta::reference {

template <typename T>
BasicTensor<T> conv2d_forward(const ConvGeometry& geo, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias)
{
    detail::check_conv_args(geo, x.shape(), weight.shape(), &bias.shape());
    const Shape4 in = x.shape();
    const Shape4 out_shape = geo.output_shape(in);
    BasicTensor<T> out(out_shape);
    const auto pad = static_cast<long>(geo.padding);

    for (std::size_t n = 0; n < out_shape.n; ++n)
        for (std::size_t o = 0; o < out_shape.c; ++o)
            for (std::size_t i = 0; i < out_shape.h; ++i)
                for (std::size_t j = 0; j < out_shape.w; ++j) {
                    T acc = bias[o];
                    for (std::size_t c = 0; c < in.c; ++c)
                        for (std::size_t u = 0; u < geo.kernel; ++u)
                            for (std::size_t v = 0; v < geo.kernel; ++v) {
                                const long y = static_cast<long>(i * geo.stride + u) - pad;
                                const long z = static_cast<long>(j * geo.stride + v) - pad;
                                if (y < 0 || z < 0 || y >= static_cast<long>(in.h) || z >= static_cast<long>(in.w))
                                    continue;
                                acc += weight.at(o, c, u, v) * x.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(z));
                            }
                    out.at(n, o, i, j) = acc;
                }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const ConvGeometry& geo, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, bool need_input_grad)
{
    detail::check_conv_args(geo, x.shape(), weight.shape(), nullptr);
    const Shape4 in = x.shape();
    if (grad_out.shape() != geo.output_shape(in)) {
        throw ShapeError("convolution gradient " + to_string(grad_out.shape()) + " does not match output " +
                         to_string(geo.output_shape(in)));
    }
    const Shape4 os = grad_out.shape();
    ConvGrads<T> g{need_input_grad ? BasicTensor<T>(in) : BasicTensor<T>{}, BasicTensor<T>(weight.shape()),
                   BasicTensor<T>(geo.bias_shape())};
    const auto pad = static_cast<long>(geo.padding);

    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t o = 0; o < os.c; ++o)
            for (std::size_t i = 0; i < os.h; ++i)
                for (std::size_t j = 0; j < os.w; ++j) {
                    const T go = grad_out.at(n, o, i, j);
                    g.bias[o] += go;
                    for (std::size_t c = 0; c < in.c; ++c)
                        for (std::size_t u = 0; u < geo.kernel; ++u)
                            for (std::size_t v = 0; v < geo.kernel; ++v) {
                                const long y = static_cast<long>(i * geo.stride + u) - pad;
                                const long z = static_cast<long>(j * geo.stride + v) - pad;
                                if (y < 0 || z < 0 || y >= static_cast<long>(in.h) || z >= static_cast<long>(in.w))
                                    continue;
                                const auto yy = static_cast<std::size_t>(y);
                                const auto zz = static_cast<std::size_t>(z);
                                g.weight.at(o, c, u, v) += go * x.at(n, c, yy, zz);
                                if (need_input_grad) g.input.at(n, c, yy, zz) += go * weight.at(o, c, u, v);
                            }
                }
    return g;
}

template <typename T>
BasicTensor<T> maxpool_forward(const PoolGeometry& geo, const BasicTensor<T>& x, std::vector<std::size_t>* argmax)
{
    const Shape4 in = x.shape();
    const Shape4 os = geo.output_shape(in);
    BasicTensor<T> out(os);
    if (argmax) argmax->assign(os.count(), 0);

    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t c = 0; c < os.c; ++c)
            for (std::size_t i = 0; i < os.h; ++i)
                for (std::size_t j = 0; j < os.w; ++j) {
                    std::size_t best = in.index(n, c, i * geo.stride, j * geo.stride);
                    for (std::size_t u = 0; u < geo.kernel; ++u)
                        for (std::size_t v = 0; v < geo.kernel; ++v) {
                            const std::size_t idx = in.index(n, c, i * geo.stride + u, j * geo.stride + v);
                            if (x[idx] > x[best]) best = idx;
                        }
                    out.at(n, c, i, j) = x[best];
                    if (argmax) (*argmax)[os.index(n, c, i, j)] = best;
                }
    return out;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape4& input_shape, const std::vector<std::size_t>& argmax,
                                const BasicTensor<T>& grad_out)
{
    if (argmax.size() != grad_out.size()) throw ShapeError("max pool gradient does not match cached forward pass");
    BasicTensor<T> grad_in(input_shape);
    for (std::size_t k = 0; k < grad_out.size(); ++k) grad_in[argmax[k]] += grad_out[k];
    return grad_in;
}

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias)
{
    detail::check_linear_args(x.shape(), weight.shape());
    const std::size_t batch = x.shape().n, in = weight.shape().c, outs = weight.shape().n;
    BasicTensor<T> out({batch, outs, 1, 1});
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < outs; ++o) {
            T acc = bias[o];
            for (std::size_t f = 0; f < in; ++f) acc += weight[o * in + f] * x[n * in + f];
            out[n * outs + o] = acc;
        }
    return out;
}

template <typename T>
LinearGrads<T> linear_backward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& grad_out,
                               bool need_input_grad)
{
    detail::check_linear_args(x.shape(), weight.shape());
    const std::size_t batch = x.shape().n, in = weight.shape().c, outs = weight.shape().n;
    if (grad_out.shape() != Shape4{batch, outs, 1, 1}) {
        throw ShapeError("linear gradient " + to_string(grad_out.shape()) + " does not match output");
    }
    LinearGrads<T> g{need_input_grad ? BasicTensor<T>(x.shape()) : BasicTensor<T>{}, BasicTensor<T>(weight.shape()),
                     BasicTensor<T>({outs, 1, 1, 1})};
    for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < outs; ++o) {
            const T go = grad_out[n * outs + o];
            g.bias[o] += go;
            for (std::size_t f = 0; f < in; ++f) {
                g.weight[o * in + f] += go * x[n * in + f];
                if (need_input_grad) g.input[n * in + f] += go * weight[o * in + f];
            }
        }
    return g;
}

#define VOLTA_INSTANTIATE(T)                                                                                       \
    template BasicTensor<T> conv2d_forward(const ConvGeometry&, const BasicTensor<T>&, const BasicTensor<T>&,     \
                                           const BasicTensor<T>&);                                                 \
    template ConvGrads<T> conv2d_backward(const ConvGeometry&, const BasicTensor<T>&, const BasicTensor<T>&,      \
                                          const BasicTensor<T>&, bool);                                            \
    template BasicTensor<T> maxpool_forward(const PoolGeometry&, const BasicTensor<T>&, std::vector<std::size_t>*); \
    template BasicTensor<T> maxpool_backward(const Shape4&, const std::vector<std::size_t>&, const BasicTensor<T>&); \
    template BasicTensor<T> linear_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
    template LinearGrads<T> linear_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, bool);

VOLTA_INSTANTIATE(float)
VOLTA_INSTANTIATE(double)

}  // namespace volta::reference
