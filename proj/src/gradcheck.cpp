#include "volta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "volta/layers.hpp"
#include "volta/train.hpp"

namespace volta {

double relative_error(double analytic, double numeric)
{
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / scale;
}

GradCheckResult gradient_check(const std::function<double()>& loss, std::span<double> values,
                               std::span<const double> analytic, std::span<const std::size_t> probe,
                               const std::string& target, double step)
{
    GradCheckResult result{target, 0.0, 0, {}, 0};
    // One probe at step h. gap is the spread between the one-sided slopes; it
    // shrinks with h on smooth ground and stays put once a kink is inside the
    // step. noise is a rounding allowance for differences of the loss at h.
    struct Probe {
        double central, gap, noise;
    };
    for (std::size_t idx : probe) {
        if (!std::isfinite(analytic[idx])) throw NumericError("non-finite analytic gradient for " + target);
        const double saved = values[idx];
        const double center = loss();
        auto at = [&](double h) {
            values[idx] = saved + h;
            const double plus = loss();
            values[idx] = saved - h;
            const double minus = loss();
            values[idx] = saved;
            if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(center)) {
                throw NumericError("non-finite value while checking gradients of " + target);
            }
            const double forward = (plus - center) / h, backward = (center - minus) / h;
            return Probe{(plus - minus) / (2.0 * h), std::abs(forward - backward),
                         64.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(center), 1.0) / h};
        };

        // Accept a step once it and a tenth of it agree, both in the central
        // estimate and in the one-sided spread shrinking with the step.
        ++result.coordinates;
        bool smooth = false;
        double numeric = 0.0;
        Probe coarse = at(step);
        for (double h = step / 10.0; h >= step / 100.0 && !smooth; h /= 10.0) {
            const Probe fine = at(h);
            const bool shrinking = fine.gap <= 0.2 * coarse.gap + 4.0 * fine.noise;
            const bool agree = std::abs(coarse.central - fine.central) <=
                               1e-6 * std::max(std::abs(coarse.central), std::abs(fine.central)) + 4.0 * fine.noise;
            if (shrinking && agree) {
                smooth = true;
                numeric = coarse.central;
            }
            coarse = fine;
        }
        if (!smooth) {
            ++result.nonsmooth;
            continue;
        }
        result.max_relative_error = std::max(result.max_relative_error, relative_error(analytic[idx], numeric));
    }
    return result;
}

std::vector<std::size_t> sample_coordinates(std::size_t size, std::size_t count, std::uint64_t seed)
{
    std::vector<std::size_t> all(size);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (count >= size) return all;
    Rng rng(seed, 0x6772616463686b);
    rng.shuffle(all.begin(), all.end());
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

namespace {

Tensor64 random_tensor(const Shape4& shape, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    Tensor64 t(shape);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

double weighted_sum(const Tensor64& y, const Tensor64& r)
{
    return std::inner_product(y.data().begin(), y.data().end(), r.data().begin(), 0.0);
}

void merge(GradCheckResult& into, const GradCheckResult& part)
{
    into.max_relative_error = std::max(into.max_relative_error, part.max_relative_error);
    into.coordinates += part.coordinates;
    into.nonsmooth += part.nonsmooth;
}

template <typename Layer>
GradCheckResult check_layer(Layer& layer, Tensor64 x, Pass pass, std::uint64_t seed, std::size_t samples,
                            const std::string& name)
{
    Rng rng(seed, 11);
    const Tensor64 r = random_tensor(layer.forward(x, pass).shape(), rng);
    auto loss = [&] { return weighted_sum(layer.forward(x, pass), r); };

    const Tensor64 grad_x = layer.backward(x, r, pass, true);
    GradCheckResult result{name, 0.0, 0, {}, 0};
    merge(result, gradient_check(loss, x.data(), grad_x.data(), sample_coordinates(x.size(), samples, seed), name));
    for (const auto& slot : layer.parameters()) {
        const Tensor64 analytic = *slot.grad;
        merge(result, gradient_check(loss, slot.value->data(), analytic.data(),
                                     sample_coordinates(slot.value->size(), samples, seed + 1), name));
    }
    return result;
}

}  // namespace

GradCheckResult check_conv_gradients(const Shape4& input, const ConvGeometry& geo, std::uint64_t seed,
                                     std::size_t samples)
{
    Rng rng(seed);
    ConvLayer<double> layer(geo);
    layer.weight = random_tensor(layer.weight.shape(), rng);
    layer.bias = random_tensor(layer.bias.shape(), rng);
    return check_layer(layer, random_tensor(input, rng), Pass::train, seed, samples, "conv");
}

GradCheckResult check_batchnorm_gradients(const Shape4& input, std::uint64_t seed, std::size_t samples)
{
    Rng rng(seed);
    BatchNormLayer<double> layer(input.c, 1e-5, 0.1);
    layer.gamma = random_tensor(layer.gamma.shape(), rng, 0.5, 1.5);
    layer.beta = random_tensor(layer.beta.shape(), rng);
    return check_layer(layer, random_tensor(input, rng, -2.0, 2.0), Pass::train, seed, samples, "batchnorm");
}

GradCheckResult check_relu_gradients(const Shape4& input, std::uint64_t seed, std::size_t samples)
{
    Rng rng(seed);
    Tensor64 x(input);
    for (auto& v : x.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.01, 1.0);
    ReluLayer<double> layer;
    return check_layer(layer, std::move(x), Pass::train, seed, samples, "relu");
}

GradCheckResult check_maxpool_gradients(const Shape4& input, const PoolGeometry& geo, std::uint64_t seed,
                                        std::size_t samples)
{
    Rng rng(seed);
    std::vector<double> values(input.count());
    std::iota(values.begin(), values.end(), 0.0);
    rng.shuffle(values.begin(), values.end());
    for (auto& v : values) v *= 0.01;
    MaxPoolLayer<double> layer(geo);
    return check_layer(layer, Tensor64(input, std::move(values)), Pass::train, seed, samples, "maxpool");
}

GradCheckResult check_linear_gradients(std::size_t batch, std::size_t in_features, std::size_t out_features,
                                       std::uint64_t seed, std::size_t samples)
{
    Rng rng(seed);
    LinearLayer<double> layer(in_features, out_features);
    layer.weight = random_tensor(layer.weight.shape(), rng);
    layer.bias = random_tensor(layer.bias.shape(), rng);
    return check_layer(layer, random_tensor({batch, in_features, 1, 1}, rng), Pass::train, seed, samples, "linear");
}

GradCheckResult check_network_gradients(std::size_t num_classes, std::size_t batch, NetworkCheck mode,
                                        std::uint64_t seed, std::size_t samples_per_group)
{
    BasicModel<double> model = build_voltavision(num_classes, seed).cast<double>();
    model.set_trainable(TrainablePolicy::all);
    Rng rng(seed, 23);
    auto& layers = model.layers();
    if (mode == NetworkCheck::frozen_bn) {
        auto mask = model.trainable_mask();
        auto groups = model.parameter_groups();
        for (std::size_t g = 0; g < groups.size(); ++g) {
            if (kind_of(layers[groups[g].layer]) == LayerKind::batchnorm) mask[g] = false;
        }
        model.set_trainable_mask(mask);
        for (auto& node : layers) {
            if (auto* bn = std::get_if<BatchNormLayer<double>>(&node)) {
                for (auto& v : bn->running_mean.data()) v = rng.uniform(-0.2, 0.2);
                for (auto& v : bn->running_var.data()) v = rng.uniform(0.5, 1.5);
            }
        }
    }
    const ArchitectureConfig& cfg = model.config();
    const Tensor64 x = random_tensor({batch, cfg.input_channels, cfg.input_h, cfg.input_w}, rng);
    std::vector<std::size_t> targets(batch);
    for (auto& t : targets) t = rng.below(num_classes);
    const std::span<const std::size_t> target_span(targets);

    auto loss = [&] { return cross_entropy(model.forward(x, Pass::train), target_span).loss; };
    const auto analytic = cross_entropy(model.forward(x, Pass::train), target_span);
    model.backward(analytic.grad_logits);

    static constexpr const char* names[] = {"network (head)", "network (batch statistics)",
                                            "network (frozen batchnorm)"};
    GradCheckResult result{names[static_cast<int>(mode)], 0.0, 0, {}, 0};
    auto groups = model.parameter_groups();
    const auto mask = model.trainable_mask();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const std::size_t layer = groups[g].layer;
        if (!mask[g]) continue;
        if (mode == NetworkCheck::head && layer + 1 != layers.size()) continue;
        const bool absorbed = groups[g].slot.rank == 1 && kind_of(layers[layer]) == LayerKind::conv &&
                              layer + 1 < layers.size() && kind_of(layers[layer + 1]) == LayerKind::batchnorm &&
                              model.training_pass(layer + 1) == Pass::train;
        if (absorbed) {
            result.skipped.push_back(groups[g].name);
            continue;
        }
        const Tensor64 grad = *groups[g].slot.grad;
        merge(result, gradient_check(loss, groups[g].slot.value->data(), grad.data(),
                                     sample_coordinates(grad.size(), samples_per_group, seed + g), groups[g].name));
    }
    return result;
}

}  // namespace volta
