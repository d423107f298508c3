#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "volta/model.hpp"

namespace volta {

/// SGD fine-tuning hyperparameters. Defaults: 25 epochs, lr 1e-3 decayed by
/// 0.1 every 7 epochs, momentum 0.9, batch 32, mean-reduced cross entropy.
struct TrainConfig {
    std::size_t epochs = 25;
    double base_lr = 1e-3;
    double momentum = 0.9;
    std::size_t lr_step = 7;
    double lr_gamma = 0.1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    TrainablePolicy trainable_policy = TrainablePolicy::head_only;

    /// Throws ConfigError when any invariant is violated.
    void validate() const;
};

/// base_lr * gamma^floor(epoch / step)
double step_lr(double base_lr, std::size_t step, double gamma, std::size_t epoch);

template <typename T>
struct LossResult {
    T loss;
    BasicTensor<T> grad_logits;
};

/// Row-wise softmax of (n, C, 1, 1) logits, max-subtracted.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

/// Mean over samples of -log softmax(logits)[target]; gradient (softmax - one_hot) / n.
/// Throws LabelError naming the sample when a target is out of range.
template <typename T>
LossResult<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> targets);

/// Per-row argmax of (n, C, 1, 1) logits; ties resolve to the lowest class.
template <typename T>
std::vector<std::size_t> argmax_rows(const BasicTensor<T>& logits);

/// v <- momentum * v + g;  p <- p - lr * v
void sgd_update(std::span<float> params, std::span<const float> grads, std::span<float> velocity, double momentum,
                double lr);

/// Momentum buffers, one per trainable parameter group, zero-initialized.
class SgdOptimizer {
public:
    SgdOptimizer(ModelGraph& model, double momentum);

    /// Updates every trainable group of `model`; frozen groups are not touched.
    void step(ModelGraph& model, double lr);

    const std::vector<std::optional<Tensor>>& velocities() const noexcept { return velocity_; }
    double momentum() const noexcept { return momentum_; }

private:
    double momentum_;
    std::vector<std::optional<Tensor>> velocity_;
};

struct EpochSummary {
    std::size_t epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;  // mean of batch losses
    double accuracy = 0.0;   // fraction of training samples predicted correctly in-batch
};

/// One pass over `indices` of (inputs, labels) in the seeded order for `epoch`.
/// Throws DataError if a batch has fewer than two samples.
EpochSummary train_epoch(ModelGraph& model, const Tensor& inputs, std::span<const std::size_t> labels,
                         std::span<const std::size_t> indices, const TrainConfig& config, SgdOptimizer& optimizer,
                         std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    std::optional<double> validation_accuracy;
};

struct FitResult {
    std::vector<EpochRecord> history;
    double seconds = 0.0;
};

/// Applies config.trainable_policy, then trains for config.epochs with the
/// step schedule. When the trainable part starts after the input layer, the
/// frozen prefix is evaluated once and its features reused every epoch.
FitResult fit(ModelGraph& model, const Tensor& inputs, std::span<const std::size_t> labels,
              std::span<const std::size_t> train_indices, std::span<const std::size_t> validation_indices,
              const TrainConfig& config);

}  // namespace volta
