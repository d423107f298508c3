#include "volta/layers.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace volta {

std::string_view to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::linear: return "linear";
    }
    return "unknown";
}

namespace {

template <typename T>
void fill_uniform(BasicTensor<T>& t, double bound, Rng& rng)
{
    for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

struct ChannelStats {
    double mean;
    double inv_std;
};

template <typename T>
ChannelStats batch_stats(const BasicTensor<T>& x, std::size_t c, double eps, double* variance)
{
    const Shape4 s = x.shape();
    const double count = static_cast<double>(s.n * s.plane());
    double sum = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = &x.at(n, c, 0, 0);
        for (std::size_t k = 0; k < s.plane(); ++k) sum += static_cast<double>(p[k]);
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = &x.at(n, c, 0, 0);
        for (std::size_t k = 0; k < s.plane(); ++k) {
            const double d = static_cast<double>(p[k]) - mean;
            sq += d * d;
        }
    }
    const double var = sq / count;
    if (variance) *variance = var;
    return {mean, 1.0 / std::sqrt(var + eps)};
}

using Index = std::int64_t;

}  // namespace

// ---- conv -----------------------------------------------------------------

template <typename T>
ConvLayer<T>::ConvLayer(ConvGeometry geo)
    : geometry(geo), weight(geo.weight_shape()), bias(geo.bias_shape()), weight_grad(geo.weight_shape()),
      bias_grad(geo.bias_shape())
{
}

template <typename T>
void ConvLayer<T>::initialize(Rng& rng)
{
    const double fan_in = static_cast<double>(geometry.in_channels * geometry.kernel * geometry.kernel);
    fill_uniform(weight, std::sqrt(6.0 / fan_in), rng);
    bias.fill(T{});
}

template <typename T>
BasicTensor<T> ConvLayer<T>::forward(const BasicTensor<T>& x, Pass)
{
    return parallel::conv2d_forward(geometry, x, weight, bias);
}

template <typename T>
BasicTensor<T> ConvLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass,
                                      bool need_input_grad)
{
    auto g = parallel::conv2d_backward(geometry, x, weight, grad_out, need_input_grad);
    weight_grad = std::move(g.weight);
    bias_grad = std::move(g.bias);
    return std::move(g.input);
}

template <typename T>
std::vector<ParamSlot<T>> ConvLayer<T>::parameters()
{
    return {{"weight", &weight, &weight_grad, 4}, {"bias", &bias, &bias_grad, 1}};
}

// ---- batchnorm ------------------------------------------------------------

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::size_t channels_, double eps_, double momentum_)
    : channels(channels_), eps(eps_), momentum(momentum_), gamma({channels_, 1, 1, 1}, T{1}),
      beta({channels_, 1, 1, 1}), running_mean({channels_, 1, 1, 1}), running_var({channels_, 1, 1, 1}, T{1}),
      gamma_grad({channels_, 1, 1, 1}), beta_grad({channels_, 1, 1, 1})
{
}

template <typename T>
Shape4 BatchNormLayer<T>::output_shape(const Shape4& in) const
{
    if (in.c != channels) {
        throw ShapeError("batchnorm over " + std::to_string(channels) + " channels got input " + to_string(in));
    }
    return in;
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::forward(const BasicTensor<T>& x, Pass pass)
{
    const Shape4 s = output_shape(x.shape());
    if (pass == Pass::train && s.n * s.plane() < 2) {
        throw DataError("degenerate batch: batchnorm in train mode needs at least 2 values per channel, got input " +
                        to_string(s));
    }
    BasicTensor<T> out(s);

#pragma omp parallel for schedule(static)
    for (Index ci = 0; ci < static_cast<Index>(s.c); ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        double mean, inv_std;
        if (pass == Pass::train) {
            double var = 0.0;
            const ChannelStats st = batch_stats(x, c, eps, &var);
            mean = st.mean;
            inv_std = st.inv_std;
            running_mean[c] = static_cast<T>((1.0 - momentum) * running_mean[c] + momentum * mean);
            running_var[c] = static_cast<T>((1.0 - momentum) * running_var[c] + momentum * var);
        } else {
            mean = static_cast<double>(running_mean[c]);
            inv_std = 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps);
        }
        const T scale = static_cast<T>(static_cast<double>(gamma[c]) * inv_std);
        const T shift = static_cast<T>(static_cast<double>(beta[c]) - static_cast<double>(gamma[c]) * inv_std * mean);
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* src = &x.at(n, c, 0, 0);
            T* dst = &out.at(n, c, 0, 0);
            for (std::size_t k = 0; k < s.plane(); ++k) dst[k] = src[k] * scale + shift;
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> BatchNormLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass pass,
                                           bool need_input_grad)
{
    const Shape4 s = output_shape(x.shape());
    if (grad_out.shape() != s) throw ShapeError("batchnorm gradient " + to_string(grad_out.shape()) + " vs " + to_string(s));
    BasicTensor<T> grad_in = need_input_grad ? BasicTensor<T>(s) : BasicTensor<T>{};
    const double count = static_cast<double>(s.n * s.plane());

#pragma omp parallel for schedule(static)
    for (Index ci = 0; ci < static_cast<Index>(s.c); ++ci) {
        const auto c = static_cast<std::size_t>(ci);
        ChannelStats st{};
        if (pass == Pass::train) {
            st = batch_stats(x, c, eps, nullptr);
        } else {
            st = {static_cast<double>(running_mean[c]), 1.0 / std::sqrt(static_cast<double>(running_var[c]) + eps)};
        }
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* xs = &x.at(n, c, 0, 0);
            const T* gs = &grad_out.at(n, c, 0, 0);
            for (std::size_t k = 0; k < s.plane(); ++k) {
                const double dy = static_cast<double>(gs[k]);
                sum_dy += dy;
                sum_dy_xhat += dy * (static_cast<double>(xs[k]) - st.mean) * st.inv_std;
            }
        }
        gamma_grad[c] = static_cast<T>(sum_dy_xhat);
        beta_grad[c] = static_cast<T>(sum_dy);
        if (!need_input_grad) continue;

        const double g = static_cast<double>(gamma[c]);
        for (std::size_t n = 0; n < s.n; ++n) {
            const T* xs = &x.at(n, c, 0, 0);
            const T* gs = &grad_out.at(n, c, 0, 0);
            T* dst = &grad_in.at(n, c, 0, 0);
            for (std::size_t k = 0; k < s.plane(); ++k) {
                const double dy = static_cast<double>(gs[k]);
                if (pass == Pass::train) {
                    const double xhat = (static_cast<double>(xs[k]) - st.mean) * st.inv_std;
                    dst[k] = static_cast<T>(g * st.inv_std / count * (count * dy - sum_dy - xhat * sum_dy_xhat));
                } else {
                    dst[k] = static_cast<T>(dy * g * st.inv_std);
                }
            }
        }
    }
    return grad_in;
}

template <typename T>
std::vector<ParamSlot<T>> BatchNormLayer<T>::parameters()
{
    return {{"gamma", &gamma, &gamma_grad, 1}, {"beta", &beta, &beta_grad, 1}};
}

template <typename T>
std::vector<BufferSlot<T>> BatchNormLayer<T>::buffers()
{
    return {{"running_mean", &running_mean, 1}, {"running_var", &running_var, 1}};
}

// ---- relu -----------------------------------------------------------------

template <typename T>
BasicTensor<T> ReluLayer<T>::forward(const BasicTensor<T>& x, Pass)
{
    BasicTensor<T> out(x.shape());
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(n); ++i) out[i] = x[i] > T{} ? x[i] : T{};
    return out;
}

template <typename T>
BasicTensor<T> ReluLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass, bool need_input_grad)
{
    if (!need_input_grad) return {};
    if (grad_out.shape() != x.shape()) throw ShapeError("relu gradient " + to_string(grad_out.shape()) + " vs " + to_string(x.shape()));
    BasicTensor<T> out(x.shape());
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(n); ++i) out[i] = x[i] > T{} ? grad_out[i] : T{};
    return out;
}

// ---- maxpool --------------------------------------------------------------

template <typename T>
BasicTensor<T> MaxPoolLayer<T>::forward(const BasicTensor<T>& x, Pass pass)
{
    return parallel::maxpool_forward(geometry, x, pass == Pass::train ? &argmax : nullptr);
}

template <typename T>
BasicTensor<T> MaxPoolLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass,
                                         bool need_input_grad)
{
    if (!need_input_grad) return {};
    if (grad_out.shape() != geometry.output_shape(x.shape())) {
        throw ShapeError("max pool gradient " + to_string(grad_out.shape()) + " does not match input " + to_string(x.shape()));
    }
    (void)parallel::maxpool_forward(geometry, x, &argmax);
    return parallel::maxpool_backward(x.shape(), argmax, grad_out);
}

// ---- flatten --------------------------------------------------------------

template <typename T>
BasicTensor<T> FlattenLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass, bool need_input_grad)
{
    if (!need_input_grad) return {};
    BasicTensor<T> g = grad_out;
    g.reshape(x.shape());
    return g;
}

// ---- linear ---------------------------------------------------------------

template <typename T>
LinearLayer<T>::LinearLayer(std::size_t in, std::size_t out)
    : in_features(in), out_features(out), weight({out, in, 1, 1}), bias({out, 1, 1, 1}), weight_grad({out, in, 1, 1}),
      bias_grad({out, 1, 1, 1})
{
}

template <typename T>
void LinearLayer<T>::initialize(Rng& rng)
{
    fill_uniform(weight, std::sqrt(6.0 / static_cast<double>(in_features)), rng);
    bias.fill(T{});
}

template <typename T>
Shape4 LinearLayer<T>::output_shape(const Shape4& in) const
{
    detail::check_linear_args(in, weight.shape());
    return {in.n, out_features, 1, 1};
}

template <typename T>
BasicTensor<T> LinearLayer<T>::forward(const BasicTensor<T>& x, Pass)
{
    return parallel::linear_forward(x, weight, bias);
}

template <typename T>
BasicTensor<T> LinearLayer<T>::backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out, Pass,
                                        bool need_input_grad)
{
    auto g = parallel::linear_backward(x, weight, grad_out, need_input_grad);
    weight_grad = std::move(g.weight);
    bias_grad = std::move(g.bias);
    return std::move(g.input);
}

template <typename T>
std::vector<ParamSlot<T>> LinearLayer<T>::parameters()
{
    return {{"weight", &weight, &weight_grad, 2}, {"bias", &bias, &bias_grad, 1}};
}

// ---- precision conversion -------------------------------------------------

template <typename U, typename T>
LayerNode<U> cast_layer(const LayerNode<T>& node)
{
    return std::visit(
        [](const auto& layer) -> LayerNode<U> {
            using L = std::decay_t<decltype(layer)>;
            if constexpr (std::is_same_v<L, ConvLayer<T>>) {
                ConvLayer<U> out(layer.geometry);
                out.weight = layer.weight.template cast<U>();
                out.bias = layer.bias.template cast<U>();
                return out;
            } else if constexpr (std::is_same_v<L, BatchNormLayer<T>>) {
                BatchNormLayer<U> out(layer.channels, layer.eps, layer.momentum);
                out.gamma = layer.gamma.template cast<U>();
                out.beta = layer.beta.template cast<U>();
                out.running_mean = layer.running_mean.template cast<U>();
                out.running_var = layer.running_var.template cast<U>();
                return out;
            } else if constexpr (std::is_same_v<L, ReluLayer<T>>) {
                return ReluLayer<U>{};
            } else if constexpr (std::is_same_v<L, MaxPoolLayer<T>>) {
                return MaxPoolLayer<U>(layer.geometry);
            } else if constexpr (std::is_same_v<L, FlattenLayer<T>>) {
                return FlattenLayer<U>{};
            } else {
                LinearLayer<U> out(layer.in_features, layer.out_features);
                out.weight = layer.weight.template cast<U>();
                out.bias = layer.bias.template cast<U>();
                return out;
            }
        },
        node);
}

template class ConvLayer<float>;
template class ConvLayer<double>;
template class BatchNormLayer<float>;
template class BatchNormLayer<double>;
template class ReluLayer<float>;
template class ReluLayer<double>;
template class MaxPoolLayer<float>;
template class MaxPoolLayer<double>;
template class FlattenLayer<float>;
template class FlattenLayer<double>;
template class LinearLayer<float>;
template class LinearLayer<double>;

template LayerNode<double> cast_layer<double, float>(const LayerNode<float>&);
template LayerNode<float> cast_layer<float, double>(const LayerNode<double>&);
template LayerNode<float> cast_layer<float, float>(const LayerNode<float>&);

}  // namespace volta
