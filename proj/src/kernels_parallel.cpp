#include "volta/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace volta::parallel {

namespace {

using Index = std::int64_t;

// Adds w * src[(i*stride + u), (j*stride + v)] into dst[i, j] for a whole output plane.
template <typename T>
inline void accumulate_window(T* dst, const T* src, T w, std::size_t out_h, std::size_t out_w, std::size_t src_w,
                              std::size_t stride, std::size_t u, std::size_t v)
{
    for (std::size_t i = 0; i < out_h; ++i) {
        const T* row = src + (i * stride + u) * src_w + v;
        T* drow = dst + i * out_w;
        if (stride == 1) {
            for (std::size_t j = 0; j < out_w; ++j) drow[j] += w * row[j];
        } else {
            for (std::size_t j = 0; j < out_w; ++j) drow[j] += w * row[j * stride];
        }
    }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const ConvGeometry& geo, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                              const BasicTensor<T>& bias)
{
    detail::check_conv_args(geo, x.shape(), weight.shape(), &bias.shape());
    const BasicTensor<T> xp = pad_spatial(x, geo.padding);
    const Shape4 ps = xp.shape();
    const Shape4 os = geo.output_shape(x.shape());
    BasicTensor<T> out(os);
    const std::size_t k = geo.kernel;

#pragma omp parallel for collapse(2) schedule(static)
    for (Index n = 0; n < static_cast<Index>(os.n); ++n)
        for (Index o = 0; o < static_cast<Index>(os.c); ++o) {
            T* dst = &out.at(n, o, 0, 0);
            std::fill(dst, dst + os.plane(), bias[o]);
            for (std::size_t c = 0; c < ps.c; ++c) {
                const T* src = &xp.at(n, c, 0, 0);
                for (std::size_t u = 0; u < k; ++u)
                    for (std::size_t v = 0; v < k; ++v)
                        accumulate_window(dst, src, weight.at(o, c, u, v), os.h, os.w, ps.w, geo.stride, u, v);
            }
        }
    return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const ConvGeometry& geo, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                             const BasicTensor<T>& grad_out, bool need_input_grad)
{
    detail::check_conv_args(geo, x.shape(), weight.shape(), nullptr);
    if (grad_out.shape() != geo.output_shape(x.shape())) {
        throw ShapeError("convolution gradient " + to_string(grad_out.shape()) + " does not match output " +
                         to_string(geo.output_shape(x.shape())));
    }
    const BasicTensor<T> xp = pad_spatial(x, geo.padding);
    const Shape4 ps = xp.shape();
    const Shape4 os = grad_out.shape();
    const std::size_t k = geo.kernel, s = geo.stride;
    ConvGrads<T> g{{}, BasicTensor<T>(weight.shape()), BasicTensor<T>(geo.bias_shape())};

#pragma omp parallel for schedule(static)
    for (Index o = 0; o < static_cast<Index>(os.c); ++o) {
        T acc{};
        for (std::size_t n = 0; n < os.n; ++n) {
            const T* go = &grad_out.at(n, o, 0, 0);
            for (std::size_t p = 0; p < os.plane(); ++p) acc += go[p];
        }
        g.bias[o] = acc;
    }

#pragma omp parallel for collapse(2) schedule(static)
    for (Index o = 0; o < static_cast<Index>(os.c); ++o)
        for (Index c = 0; c < static_cast<Index>(ps.c); ++c)
            for (std::size_t u = 0; u < k; ++u)
                for (std::size_t v = 0; v < k; ++v) {
                    T acc{};
                    for (std::size_t n = 0; n < os.n; ++n) {
                        const T* go = &grad_out.at(n, o, 0, 0);
                        const T* src = &xp.at(n, c, 0, 0);
                        for (std::size_t i = 0; i < os.h; ++i) {
                            const T* row = src + (i * s + u) * ps.w + v;
                            const T* grow = go + i * os.w;
                            for (std::size_t j = 0; j < os.w; ++j) acc += grow[j] * row[j * s];
                        }
                    }
                    g.weight.at(o, c, u, v) = acc;
                }

    if (need_input_grad) {
        BasicTensor<T> gxp(ps);
#pragma omp parallel for collapse(2) schedule(static)
        for (Index n = 0; n < static_cast<Index>(ps.n); ++n)
            for (Index c = 0; c < static_cast<Index>(ps.c); ++c) {
                T* dst = &gxp.at(n, c, 0, 0);
                for (std::size_t o = 0; o < os.c; ++o) {
                    const T* go = &grad_out.at(n, o, 0, 0);
                    for (std::size_t u = 0; u < k; ++u)
                        for (std::size_t v = 0; v < k; ++v) {
                            const T w = weight.at(o, c, u, v);
                            for (std::size_t i = 0; i < os.h; ++i) {
                                T* row = dst + (i * s + u) * ps.w + v;
                                const T* grow = go + i * os.w;
                                for (std::size_t j = 0; j < os.w; ++j) row[j * s] += w * grow[j];
                            }
                        }
                }
            }
        g.input = crop_spatial(gxp, geo.padding);
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

#pragma omp parallel for collapse(2) schedule(static)
    for (Index n = 0; n < static_cast<Index>(os.n); ++n)
        for (Index c = 0; c < static_cast<Index>(os.c); ++c) {
            const std::size_t base = in.index(n, c, 0, 0);
            const T* plane = x.raw() + base;
            for (std::size_t i = 0; i < os.h; ++i)
                for (std::size_t j = 0; j < os.w; ++j) {
                    std::size_t best = i * geo.stride * in.w + j * geo.stride;
                    for (std::size_t u = 0; u < geo.kernel; ++u) {
                        const std::size_t row = (i * geo.stride + u) * in.w + j * geo.stride;
                        for (std::size_t v = 0; v < geo.kernel; ++v)
                            if (plane[row + v] > plane[best]) best = row + v;
                    }
                    const std::size_t oi = os.index(n, c, i, j);
                    out[oi] = plane[best];
                    if (argmax) (*argmax)[oi] = base + best;
                }
        }
    return out;
}

template <typename T>
BasicTensor<T> maxpool_backward(const Shape4& input_shape, const std::vector<std::size_t>& argmax,
                                const BasicTensor<T>& grad_out)
{
    if (argmax.size() != grad_out.size()) throw ShapeError("max pool gradient does not match cached forward pass");
    BasicTensor<T> grad_in(input_shape);
    const Shape4 os = grad_out.shape();
    // Windows of one (n, c) plane only ever point into that plane.
#pragma omp parallel for schedule(static)
    for (Index p = 0; p < static_cast<Index>(os.n * os.c); ++p) {
        const std::size_t begin = static_cast<std::size_t>(p) * os.plane();
        for (std::size_t k = begin; k < begin + os.plane(); ++k) grad_in[argmax[k]] += grad_out[k];
    }
    return grad_in;
}

template <typename T>
BasicTensor<T> linear_forward(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias)
{
    detail::check_linear_args(x.shape(), weight.shape());
    const std::size_t batch = x.shape().n, in = weight.shape().c, outs = weight.shape().n;
    BasicTensor<T> out({batch, outs, 1, 1});

#pragma omp parallel for collapse(2) schedule(static)
    for (Index n = 0; n < static_cast<Index>(batch); ++n)
        for (Index o = 0; o < static_cast<Index>(outs); ++o) {
            const T* wrow = weight.raw() + o * in;
            const T* xrow = x.raw() + n * in;
            T acc = bias[o];
            for (std::size_t f = 0; f < in; ++f) acc += wrow[f] * xrow[f];
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
    LinearGrads<T> g{{}, BasicTensor<T>(weight.shape()), BasicTensor<T>({outs, 1, 1, 1})};

#pragma omp parallel for schedule(static)
    for (Index o = 0; o < static_cast<Index>(outs); ++o) {
        T* gw = g.weight.raw() + o * in;
        T gb{};
        for (std::size_t n = 0; n < batch; ++n) {
            const T go = grad_out[n * outs + o];
            gb += go;
            const T* xrow = x.raw() + n * in;
            for (std::size_t f = 0; f < in; ++f) gw[f] += go * xrow[f];
        }
        g.bias[o] = gb;
    }

    if (need_input_grad) {
        g.input = BasicTensor<T>(x.shape());
#pragma omp parallel for schedule(static)
        for (Index n = 0; n < static_cast<Index>(batch); ++n) {
            T* gx = g.input.raw() + n * in;
            for (std::size_t o = 0; o < outs; ++o) {
                const T go = grad_out[n * outs + o];
                const T* wrow = weight.raw() + o * in;
                for (std::size_t f = 0; f < in; ++f) gx[f] += go * wrow[f];
            }
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

}  // namespace volta::parallel
