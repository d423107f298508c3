#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "volta/tensor.hpp"

namespace volta {

struct LabeledSample {
    Tensor image;  // (1, 3, H, W), values in [0, 1]
    std::size_t label = 0;
};

struct LabeledDataset {
    std::vector<std::string> class_names;
    std::vector<LabeledSample> samples;
    std::string source;
    /// CIFAR-100 coarse label bytes, kept so records can be re-serialized.
    std::vector<std::uint8_t> coarse_labels;

    std::size_t class_count() const noexcept { return class_names.size(); }
    std::vector<std::size_t> class_counts() const;
    std::vector<std::size_t> labels() const;
};

/// Reads `root/<class>/*.{png,jpg,jpeg}`. Classes are the sorted subdirectory
/// names; files are taken in sorted path order. Grayscale is replicated to RGB,
/// alpha is dropped. Throws DataError for fewer than two classes or an empty
/// class and DecodeError naming the file for unreadable images.
LabeledDataset load_image_folder(const std::filesystem::path& root);

enum class CifarVariant { cifar10, cifar100 };

/// Records are label byte(s) + 3072 pixel bytes (R, G, B planes, 32x32
/// row-major). CIFAR-100 records carry coarse then fine label; the fine one is
/// used. Class names come from batches.meta.txt / fine_label_names.txt next to
/// the first file when present, otherwise zero-padded indices.
LabeledDataset load_cifar_binary(std::span<const std::filesystem::path> files, CifarVariant variant);

std::size_t cifar_record_size(CifarVariant variant);
std::vector<std::uint8_t> encode_cifar_records(const LabeledDataset& dataset, CifarVariant variant);

/// Keeps only the named classes (in their original order) and renumbers labels.
LabeledDataset filter_classes(const LabeledDataset& dataset, std::span<const std::string> keep);

struct PreprocessConfig {
    std::size_t target_h = 32;
    std::size_t target_w = 32;
    float mean = 0.5f;
    float std = 0.5f;
};

/// Bilinear resize with half-pixel centers, sampling coordinate
///   src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1],
/// followed by (x - mean) / std.
Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w);
Tensor preprocess(const Tensor& image, const PreprocessConfig& config = {});

/// A whole dataset preprocessed into one (N, 3, H, W) batch tensor.
struct PreparedSet {
    Tensor images;
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names;
    std::string source;
};

PreparedSet prepare(const LabeledDataset& dataset, const PreprocessConfig& config = {});

struct FoldPlan {
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::size_t>> folds;  // each sorted ascending

    std::vector<std::size_t> training_indices(std::size_t fold) const;
};

/// Stratified k-fold plan. Each class is shuffled with Rng(seed, class index)
/// and dealt round-robin; the deal position carries over between classes so
/// fold sizes differ by at most one overall and per class.
FoldPlan kfold_split(std::span<const std::size_t> labels, std::size_t class_count, std::size_t k, std::uint64_t seed,
                     std::span<const std::string> class_names = {});

/// "fold <i>: <indices...>" lines.
std::string format_fold_plan(const FoldPlan& plan);

/// Seeded shuffle keyed by (seed, epoch), cut into batch_size chunks. A final
/// chunk with fewer than two samples is merged into the previous one.
std::vector<std::vector<std::size_t>> iterate_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                      std::uint64_t seed, std::size_t epoch);

}  // namespace volta
