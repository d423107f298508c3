#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "volta/data.hpp"
#include "volta/model.hpp"
#include "volta/train.hpp"

namespace volta {

/// Rows are true classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = 0) : classes_(classes), counts_(classes * classes, 0) {}

    static ConfusionMatrix from_predictions(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
                                            std::size_t classes);

    void add(std::size_t truth, std::size_t predicted);
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts_[truth * classes_ + predicted]; }
    std::size_t& at(std::size_t truth, std::size_t predicted) { return counts_[truth * classes_ + predicted]; }
    std::size_t classes() const noexcept { return classes_; }
    std::size_t total() const;

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);
    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

private:
    std::size_t classes_;
    std::vector<std::size_t> counts_;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Fractions in [0, 1]; precision, recall and F1 are macro (unweighted) means.
struct Metrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::vector<ClassMetrics> per_class;
};

/// 0/0 ratios count as 0. Throws DataError for an empty matrix.
Metrics compute_metrics(const ConfusionMatrix& cm);

/// Eval-mode argmax prediction, lowest class index on ties.
std::vector<std::size_t> predict_classes(ModelGraph& model, const Tensor& inputs);

struct FoldResult {
    std::size_t fold = 0;
    std::size_t train_count = 0;
    std::size_t validation_count = 0;
    Metrics metrics;
    ConfusionMatrix confusion;
    double final_train_loss = 0.0;
    double seconds = 0.0;
};

struct CrossValidationEcho {
    std::string label;
    std::string dataset;
    std::vector<std::string> class_names;
    std::size_t samples = 0;
    std::string pretrained;  // provenance note, or empty for scratch
    std::size_t k = 0;
    std::uint64_t seed = 0;
    TrainConfig train;
};

struct MetricsReport {
    CrossValidationEcho config;
    std::vector<FoldResult> folds;
    Metrics mean;  // per_class left empty
    double seconds = 0.0;
};

/// k-fold cross-validation. For fold f the run seed is config.seed ^ f; the
/// model is the pretrained one with a fresh head (or a fresh seeded model when
/// `pretrained` is null), trained on the other folds and scored on fold f at
/// the final epoch. Throws CheckpointError if the pretrained backbone differs
/// from the default architecture.
MetricsReport cross_validate(const ModelGraph* pretrained, const PreparedSet& data, const FoldPlan& folds,
                             const TrainConfig& config, const std::string& label = {},
                             const std::function<void(const FoldResult&)>& on_fold = {});

/// Stable key-ordered text report; percentages with two decimals. Wall times
/// are only written when `include_timing` is set, so default reports are
/// byte-identical across identical runs.
std::string format_report(const MetricsReport& report, bool include_timing = false);

struct TableRow {
    std::string pretrain_dataset;
    std::string model;
    Metrics mean;
    std::optional<double> seconds;
    std::optional<std::size_t> model_bytes;
};

/// Accuracy / Precision / Recall / F1-Score / Fine-tuning Time / Model Size.
std::string format_table(std::span<const TableRow> rows);

/// "127kb", "1.08Mb" style sizes (decimal units).
std::string format_model_size(std::size_t bytes);

}  // namespace volta
