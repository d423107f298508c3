#include "volta/eval.hpp"

#include <algorithm>
#include <chrono>
#include <string>

#include <fmt/format.h>

namespace volta {

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const std::size_t> truth,
                                                  std::span<const std::size_t> predicted, std::size_t classes)
{
    if (truth.size() != predicted.size()) throw ShapeError("truth and prediction counts differ");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
    return cm;
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted)
{
    if (truth >= classes_ || predicted >= classes_) {
        throw LabelError("confusion entry (" + std::to_string(truth) + ", " + std::to_string(predicted) +
                         ") outside " + std::to_string(classes_) + " classes");
    }
    ++at(truth, predicted);
}

std::size_t ConfusionMatrix::total() const
{
    std::size_t sum = 0;
    for (auto v : counts_) sum += v;
    return sum;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other)
{
    if (other.classes_ != classes_) throw ShapeError("cannot add confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

Metrics compute_metrics(const ConfusionMatrix& cm)
{
    const std::size_t total = cm.total();
    if (total == 0) throw DataError("cannot compute metrics from an empty confusion matrix");
    const std::size_t k = cm.classes();
    auto ratio = [](double num, double den) { return den == 0.0 ? 0.0 : num / den; };

    Metrics m;
    std::size_t trace = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t row = 0, col = 0;
        for (std::size_t j = 0; j < k; ++j) {
            row += cm.at(c, j);
            col += cm.at(j, c);
        }
        const double tp = static_cast<double>(cm.at(c, c));
        trace += cm.at(c, c);
        ClassMetrics cls;
        cls.precision = ratio(tp, static_cast<double>(col));
        cls.recall = ratio(tp, static_cast<double>(row));
        cls.f1 = ratio(2.0 * cls.precision * cls.recall, cls.precision + cls.recall);
        m.precision += cls.precision;
        m.recall += cls.recall;
        m.f1 += cls.f1;
        m.per_class.push_back(cls);
    }
    m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    m.precision /= static_cast<double>(k);
    m.recall /= static_cast<double>(k);
    m.f1 /= static_cast<double>(k);
    return m;
}

std::vector<std::size_t> predict_classes(ModelGraph& model, const Tensor& inputs)
{
    return argmax_rows(model.forward(inputs, Pass::infer));
}

MetricsReport cross_validate(const ModelGraph* pretrained, const PreparedSet& data, const FoldPlan& folds,
                             const TrainConfig& config, const std::string& label,
                             const std::function<void(const FoldResult&)>& on_fold)
{
    config.validate();
    const std::size_t classes = data.class_names.size();
    if (classes < 2) throw DataError("cross-validation needs at least 2 classes");
    if (pretrained) {
        const ArchitectureConfig expected{};
        if (!pretrained->config().same_backbone(expected)) {
            throw CheckpointError(CheckpointError::Kind::architecture_mismatch,
                                  "pretrained checkpoint backbone differs from the default architecture");
        }
    }
    std::size_t covered = 0;
    for (const auto& fold : folds.folds) covered += fold.size();
    if (covered != data.labels.size()) throw DataError("fold plan does not cover the dataset");

    const auto started = std::chrono::steady_clock::now();
    MetricsReport report;
    report.config = {label, data.source, data.class_names, data.labels.size(),
                     pretrained ? pretrained->provenance : std::string{}, folds.k, config.seed, config};

    for (std::size_t f = 0; f < folds.folds.size(); ++f) {
        const auto fold_started = std::chrono::steady_clock::now();
        TrainConfig fold_config = config;
        fold_config.seed = config.seed ^ static_cast<std::uint64_t>(f);

        ModelGraph model = pretrained ? replace_head(*pretrained, classes, fold_config.seed)
                                      : build_voltavision(classes, fold_config.seed);
        const auto train_idx = folds.training_indices(f);
        const auto& val_idx = folds.folds[f];
        const FitResult fit_result = fit(model, data.images, data.labels, train_idx, {}, fold_config);

        const auto predicted = predict_classes(model, gather_samples(data.images, std::span<const std::size_t>(val_idx)));
        std::vector<std::size_t> truth;
        for (std::size_t i : val_idx) truth.push_back(data.labels[i]);

        FoldResult result;
        result.fold = f;
        result.train_count = train_idx.size();
        result.validation_count = val_idx.size();
        result.confusion = ConfusionMatrix::from_predictions(truth, predicted, classes);
        result.metrics = compute_metrics(result.confusion);
        result.final_train_loss = fit_result.history.back().train_loss;
        result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - fold_started).count();
        if (on_fold) on_fold(result);
        report.folds.push_back(std::move(result));
    }

    const double k = static_cast<double>(report.folds.size());
    for (const auto& fold : report.folds) {
        report.mean.accuracy += fold.metrics.accuracy;
        report.mean.precision += fold.metrics.precision;
        report.mean.recall += fold.metrics.recall;
        report.mean.f1 += fold.metrics.f1;
    }
    report.mean.accuracy /= k;
    report.mean.precision /= k;
    report.mean.recall /= k;
    report.mean.f1 /= k;
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

namespace {

std::string pct(double fraction)
{
    return fmt::format("{:.2f}", 100.0 * fraction);
}

std::string join(const std::vector<std::string>& items, std::string_view sep)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += sep;
        out += items[i];
    }
    return out;
}

std::string confusion_line(const ConfusionMatrix& cm)
{
    std::string out;
    for (std::size_t r = 0; r < cm.classes(); ++r) {
        if (r) out += " |";
        for (std::size_t c = 0; c < cm.classes(); ++c) out += " " + std::to_string(cm.at(r, c));
    }
    return out;
}

}  // namespace

std::string format_report(const MetricsReport& report, bool include_timing)
{
    const auto& cfg = report.config;
    std::string out = "# voltavision cross-validation report\n\n[config]\n";
    auto kv = [&out](std::string_view key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
    kv("label", cfg.label.empty() ? "-" : cfg.label);
    kv("dataset", cfg.dataset);
    kv("samples", std::to_string(cfg.samples));
    kv("classes", join(cfg.class_names, ", "));
    kv("pretrained", cfg.pretrained.empty() ? "none (scratch)" : cfg.pretrained);
    kv("folds", std::to_string(cfg.k));
    kv("seed", std::to_string(cfg.seed));
    kv("fold_seed", "seed xor fold_index");
    kv("epochs", std::to_string(cfg.train.epochs));
    kv("base_lr", fmt::format("{}", cfg.train.base_lr));
    kv("momentum", fmt::format("{}", cfg.train.momentum));
    kv("lr_step", std::to_string(cfg.train.lr_step));
    kv("lr_gamma", fmt::format("{}", cfg.train.lr_gamma));
    kv("batch_size", std::to_string(cfg.train.batch_size));
    kv("trainable_policy", std::string(to_string(cfg.train.trainable_policy)));
    kv("loss_reduction", "mean");
    kv("averaging", "macro");
    kv("evaluation", "final epoch on held-out fold");

    for (const auto& fold : report.folds) {
        out += fmt::format("\n[fold {}]\n", fold.fold);
        kv("train_samples", std::to_string(fold.train_count));
        kv("validation_samples", std::to_string(fold.validation_count));
        kv("accuracy", pct(fold.metrics.accuracy));
        kv("precision", pct(fold.metrics.precision));
        kv("recall", pct(fold.metrics.recall));
        kv("f1", pct(fold.metrics.f1));
        kv("final_train_loss", fmt::format("{:.6f}", fold.final_train_loss));
        kv("confusion", confusion_line(fold.confusion).substr(1));
        if (include_timing) kv("wall_seconds", fmt::format("{:.1f}", fold.seconds));
    }

    out += "\n[mean]\n";
    kv("accuracy", pct(report.mean.accuracy));
    kv("precision", pct(report.mean.precision));
    kv("recall", pct(report.mean.recall));
    kv("f1", pct(report.mean.f1));
    if (include_timing) kv("wall_seconds", fmt::format("{:.1f}", report.seconds));
    return out;
}

std::string format_model_size(std::size_t bytes)
{
    const double b = static_cast<double>(bytes);
    if (b >= 1e6) return fmt::format("{:.2f}Mb", b / 1e6);
    return fmt::format("{:.0f}kb", b / 1e3);
}

std::string format_table(std::span<const TableRow> rows)
{
    std::size_t first = 17, second = 5;
    for (const auto& r : rows) {
        first = std::max(first, r.pretrain_dataset.size());
        second = std::max(second, r.model.size());
    }
    auto line = [&](std::string_view a, std::string_view b, std::string_view acc, std::string_view prec,
                    std::string_view rec, std::string_view f1, std::string_view time, std::string_view size) {
        return fmt::format("{:<{}}  {:<{}}  {:>8}  {:>9}  {:>6}  {:>8}  {:>8}  {:>10}\n", a, first, b, second, acc, prec,
                           rec, f1, time, size);
    };
    std::string out = line("Pre-Train Dataset", "Model", "Accuracy", "Precision", "Recall", "F1-Score", "Time (s)",
                           "Model Size");
    for (const auto& r : rows) {
        out += line(r.pretrain_dataset, r.model, pct(r.mean.accuracy), pct(r.mean.precision), pct(r.mean.recall),
                    pct(r.mean.f1), r.seconds ? fmt::format("{:.1f}", *r.seconds) : std::string("-"),
                    r.model_bytes ? format_model_size(*r.model_bytes) : std::string("-"));
    }
    return out;
}

}  // namespace volta
