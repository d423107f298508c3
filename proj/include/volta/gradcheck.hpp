#pragma once

// Finite-difference verification of the hand-written backward passes.
// Everything here runs in double precision so that algorithmic mistakes are
// not masked by float rounding.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "volta/kernels.hpp"
#include "volta/model.hpp"

namespace volta {

inline constexpr double kFiniteDifferenceStep = 1e-5;

/// |a - f| / max(|a|, |f|, 1e-8)
double relative_error(double analytic, double numeric);

struct GradCheckResult {
    std::string target;
    double max_relative_error = 0.0;
    std::size_t coordinates = 0;
    /// Parameter groups left out because their exact gradient is identically zero.
    std::vector<std::string> skipped;
    /// Probes that still straddled a ReLU or max-pool switch at the smallest
    /// step; excluded from max_relative_error.
    std::size_t nonsmooth = 0;
};

/// Central differences of `loss` at `values[probe[i]]` against `analytic[probe[i]]`.
/// A probe counts as smooth when the central estimates at h and h / 10 match
/// and the spread between one-sided slopes shrinks with the step; otherwise a
/// kink sits inside the step and the probe is retried one decade lower (down to
/// step / 100) before being counted as nonsmooth. `values` is perturbed in place and restored. Throws
/// NumericError on non-finite losses or gradients.
GradCheckResult gradient_check(const std::function<double()>& loss, std::span<double> values,
                               std::span<const double> analytic, std::span<const std::size_t> probe,
                               const std::string& target, double step = kFiniteDifferenceStep);

/// Up to `count` distinct coordinates out of `size`, seeded.
std::vector<std::size_t> sample_coordinates(std::size_t size, std::size_t count, std::uint64_t seed);

// Per-layer checks on random inputs. The probed loss is sum(r * layer(x)) for a
// fixed random r; every input and parameter coordinate up to `samples` is probed.
GradCheckResult check_conv_gradients(const Shape4& input, const ConvGeometry& geo, std::uint64_t seed,
                                     std::size_t samples = 64);
GradCheckResult check_batchnorm_gradients(const Shape4& input, std::uint64_t seed, std::size_t samples = 64);
/// Inputs are drawn with |x| > 1e-3 so no probe straddles the kink.
GradCheckResult check_relu_gradients(const Shape4& input, std::uint64_t seed, std::size_t samples = 64);
/// Inputs are distinct values so no probe flips a window's winner.
GradCheckResult check_maxpool_gradients(const Shape4& input, const PoolGeometry& geo, std::uint64_t seed,
                                        std::size_t samples = 64);
GradCheckResult check_linear_gradients(std::size_t batch, std::size_t in_features, std::size_t out_features,
                                       std::uint64_t seed, std::size_t samples = 64);

enum class NetworkCheck {
    head,           // head weight and bias only
    train_mode_bn,  // every group, batchnorm on batch statistics
    frozen_bn,      // conv and head groups, batchnorm frozen on random running statistics
};

/// Full network with mean cross-entropy loss. With batch statistics a conv
/// bias that feeds a batchnorm has an exactly zero gradient (the batch mean
/// absorbs it), so train_mode_bn lists those groups in `skipped` and
/// frozen_bn is where they get probed.
GradCheckResult check_network_gradients(std::size_t num_classes, std::size_t batch, NetworkCheck mode,
                                        std::uint64_t seed, std::size_t samples_per_group = 12);

}  // namespace volta
