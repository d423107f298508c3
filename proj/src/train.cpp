#include "volta/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "volta/data.hpp"

namespace volta {

void TrainConfig::validate() const
{
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(base_lr > 0.0)) throw ConfigError("base learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (lr_step < 1) throw ConfigError("lr step must be at least 1");
    if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ConfigError("lr gamma must be in (0, 1]");
    if (batch_size < 2) throw ConfigError("batch size must be at least 2 for batchnorm training");
}

double step_lr(double base_lr, std::size_t step, double gamma, std::size_t epoch)
{
    if (step == 0) throw ConfigError("lr step must be at least 1");
    return base_lr * std::pow(gamma, static_cast<double>(epoch / step));
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits)
{
    const std::size_t n = logits.shape().n, classes = logits.shape().c;
    BasicTensor<T> out(logits.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.raw() + i * classes;
        const double peak = static_cast<double>(*std::max_element(row, row + classes));
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) total += std::exp(static_cast<double>(row[c]) - peak);
        for (std::size_t c = 0; c < classes; ++c)
            out[i * classes + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - peak) / total);
    }
    return out;
}

template <typename T>
LossResult<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> targets)
{
    const Shape4 s = logits.shape();
    if (s.h != 1 || s.w != 1 || s.n != targets.size() || s.n == 0) {
        throw ShapeError("cross entropy needs (n, C, 1, 1) logits with one target per row, got " + to_string(s) +
                         " and " + std::to_string(targets.size()) + " targets");
    }
    const std::size_t classes = s.c;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (targets[i] >= classes) {
            throw LabelError("sample " + std::to_string(i) + " has label " + std::to_string(targets[i]) +
                             " outside [0, " + std::to_string(classes) + ")");
        }
    }
    BasicTensor<T> grad(s);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(s.n);
    for (std::size_t i = 0; i < s.n; ++i) {
        const T* row = logits.raw() + i * classes;
        const double peak = static_cast<double>(*std::max_element(row, row + classes));
        double denom = 0.0;
        for (std::size_t c = 0; c < classes; ++c) denom += std::exp(static_cast<double>(row[c]) - peak);
        const double log_denom = std::log(denom);
        total += -(static_cast<double>(row[targets[i]]) - peak - log_denom);
        for (std::size_t c = 0; c < classes; ++c) {
            const double p = std::exp(static_cast<double>(row[c]) - peak - log_denom);
            grad[i * classes + c] = static_cast<T>((p - (c == targets[i] ? 1.0 : 0.0)) * inv_n);
        }
    }
    return {static_cast<T>(total * inv_n), std::move(grad)};
}

template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& logits)
{
    const std::size_t n = logits.shape().n, classes = logits.shape().per_sample();
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.raw() + i * classes;
        out[i] = static_cast<std::size_t>(std::max_element(row, row + classes) - row);
    }
    return out;
}

template BasicTensor<float> softmax(const BasicTensor<float>&);
template BasicTensor<double> softmax(const BasicTensor<double>&);
template LossResult<float> cross_entropy(const BasicTensor<float>&, std::span<const std::size_t>);
template LossResult<double> cross_entropy(const BasicTensor<double>&, std::span<const std::size_t>);
template std::vector<std::size_t> argmax_rows(const BasicTensor<float>&);
template std::vector<std::size_t> argmax_rows(const BasicTensor<double>&);

void sgd_update(std::span<float> params, std::span<const float> grads, std::span<float> velocity, double momentum,
                double lr)
{
    if (params.size() != grads.size() || params.size() != velocity.size()) {
        throw ShapeError("sgd update with " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " + std::to_string(velocity.size()) + " velocities");
    }
    const float mu = static_cast<float>(momentum);
    const float rate = static_cast<float>(lr);
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity[i] = mu * velocity[i] + grads[i];
        params[i] -= rate * velocity[i];
    }
}

SgdOptimizer::SgdOptimizer(ModelGraph& model, double momentum) : momentum_(momentum)
{
    const auto groups = model.parameter_groups();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (model.trainable_mask()[g]) {
            velocity_.emplace_back(Tensor(groups[g].slot.value->shape()));
        } else {
            velocity_.emplace_back(std::nullopt);
        }
    }
}

void SgdOptimizer::step(ModelGraph& model, double lr)
{
    auto groups = model.parameter_groups();
    if (groups.size() != velocity_.size()) throw ShapeError("optimizer state does not match model parameter groups");
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (!model.trainable_mask()[g] || !velocity_[g]) continue;
        sgd_update(groups[g].slot.value->data(), groups[g].slot.grad->data(), velocity_[g]->data(), momentum_, lr);
    }
}

namespace {

/// Trains layers [start, end) on inputs that already went through [0, start).
EpochSummary run_epoch(ModelGraph& model, const Tensor& stage_inputs, std::size_t start,
                       std::span<const std::size_t> labels, std::span<const std::size_t> indices,
                       const TrainConfig& config, SgdOptimizer& optimizer, std::size_t epoch)
{
    if (indices.empty()) throw DataError("training split is empty");
    const double lr = step_lr(config.base_lr, config.lr_step, config.lr_gamma, epoch);
    const std::size_t end = model.layers().size();
    const bool learns = start < end;

    double loss_sum = 0.0;
    std::size_t correct = 0, batches = 0;
    for (const auto& batch : iterate_batches(indices, config.batch_size, config.seed, epoch)) {
        if (batch.size() < 2) {
            throw DataError("degenerate batch of " + std::to_string(batch.size()) +
                            " sample(s); train mode needs at least 2");
        }
        std::vector<std::size_t> targets(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = labels[batch[i]];

        const Tensor x = gather_samples(stage_inputs, std::span<const std::size_t>(batch));
        const Tensor logits = model.forward_range(x, start, end, learns ? Pass::train : Pass::infer);
        const auto result = cross_entropy(logits, std::span<const std::size_t>(targets));
        if (!std::isfinite(result.loss)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
        if (learns) {
            model.backward(result.grad_logits);
            optimizer.step(model, lr);
        }
        const auto predicted = argmax_rows(logits);
        for (std::size_t i = 0; i < batch.size(); ++i) correct += predicted[i] == targets[i];
        loss_sum += static_cast<double>(result.loss);
        ++batches;
    }
    return {epoch, lr, loss_sum / static_cast<double>(batches),
            static_cast<double>(correct) / static_cast<double>(indices.size())};
}

Tensor run_prefix(ModelGraph& model, const Tensor& inputs, std::size_t end)
{
    if (end == 0) return inputs;
    constexpr std::size_t chunk = 256;
    const std::size_t n = inputs.shape().n;
    Tensor out;
    std::vector<std::size_t> rows;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        rows.clear();
        for (std::size_t i = begin; i < std::min(n, begin + chunk); ++i) rows.push_back(i);
        const Tensor part = model.forward_range(gather_samples(inputs, std::span<const std::size_t>(rows)), 0, end,
                                                Pass::infer);
        if (begin == 0) out = Tensor({n, part.shape().c, part.shape().h, part.shape().w});
        std::copy(part.data().begin(), part.data().end(), out.sample(begin).begin());
    }
    return out;
}

}  // namespace

EpochSummary train_epoch(ModelGraph& model, const Tensor& inputs, std::span<const std::size_t> labels,
                         std::span<const std::size_t> indices, const TrainConfig& config, SgdOptimizer& optimizer,
                         std::size_t epoch)
{
    if (labels.size() != inputs.shape().n) throw ShapeError("label count does not match input batch");
    // The frozen prefix is pure, so running it per batch or up front gives identical values.
    return run_epoch(model, inputs, 0, labels, indices, config, optimizer, epoch);
}

FitResult fit(ModelGraph& model, const Tensor& inputs, std::span<const std::size_t> labels,
              std::span<const std::size_t> train_indices, std::span<const std::size_t> validation_indices,
              const TrainConfig& config)
{
    config.validate();
    if (train_indices.empty()) throw DataError("training split is empty");
    if (labels.size() != inputs.shape().n) throw ShapeError("label count does not match input batch");
    const auto started = std::chrono::steady_clock::now();

    model.set_trainable(config.trainable_policy);
    SgdOptimizer optimizer(model, config.momentum);
    const std::size_t start = std::min(model.first_trainable_layer(), model.layers().size());
    const Tensor features = run_prefix(model, inputs, start);

    FitResult result;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const EpochSummary summary =
            run_epoch(model, features, start, labels, train_indices, config, optimizer, epoch);
        EpochRecord record{epoch, summary.lr, summary.mean_loss, summary.accuracy, std::nullopt};
        if (!validation_indices.empty()) {
            const Tensor x = gather_samples(features, validation_indices);
            const auto predicted = argmax_rows(model.forward_range(x, start, model.layers().size(), Pass::infer));
            std::size_t correct = 0;
            for (std::size_t i = 0; i < validation_indices.size(); ++i)
                correct += predicted[i] == labels[validation_indices[i]];
            record.validation_accuracy = static_cast<double>(correct) / static_cast<double>(validation_indices.size());
        }
        result.history.push_back(record);
    }
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

}  // namespace volta
