#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "volta/checkpoint.hpp"
#include "volta/data.hpp"
#include "volta/error.hpp"
#include "volta/eval.hpp"
#include "volta/gradcheck.hpp"
#include "volta/image_io.hpp"
#include "volta/run_manifest.hpp"
#include "volta/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace volta::cli {

namespace {

std::string num(double v) { return fmt::format("{}", v); }

std::string absolute(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

struct TrainFlags {
    std::size_t epochs = 25;
    double lr = 1e-3;
    double momentum = 0.9;
    std::size_t lr_step = 7;
    double lr_gamma = 0.1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void add_to(CLI::App* app)
    {
        app->add_option("--epochs", epochs, "training epochs")->capture_default_str();
        app->add_option("--lr", lr, "base learning rate")->capture_default_str();
        app->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
        app->add_option("--lr-step", lr_step, "epochs between learning-rate decays")->capture_default_str();
        app->add_option("--lr-gamma", lr_gamma, "learning-rate decay factor")->capture_default_str();
        app->add_option("--batch-size", batch_size, "mini-batch size")->capture_default_str();
        app->add_option("--seed", seed, "seed for every random choice")->capture_default_str();
    }

    TrainConfig config(TrainablePolicy policy) const
    {
        TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.base_lr = lr;
        cfg.momentum = momentum;
        cfg.lr_step = lr_step;
        cfg.lr_gamma = lr_gamma;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        cfg.trainable_policy = policy;
        cfg.validate();
        return cfg;
    }

    void append(std::vector<std::string>& argv) const
    {
        argv.insert(argv.end(), {"--epochs", std::to_string(epochs), "--lr", num(lr), "--momentum", num(momentum),
                                 "--lr-step", std::to_string(lr_step), "--lr-gamma", num(lr_gamma), "--batch-size",
                                 std::to_string(batch_size), "--seed", std::to_string(seed)});
    }

    ordered_json json(TrainablePolicy policy) const
    {
        return {{"epochs", epochs},     {"base_lr", lr},         {"momentum", momentum},
                {"lr_step", lr_step},   {"lr_gamma", lr_gamma},  {"batch_size", batch_size},
                {"seed", seed},         {"trainable_policy", std::string(to_string(policy))},
                {"loss", "cross_entropy_mean"}};
    }
};

// --- dataset specs ---------------------------------------------------------

struct CifarSpec {
    std::optional<CifarVariant> variant;  // nullopt: detect from file size
    std::string path;
};

std::optional<CifarSpec> parse_cifar_spec(const std::string& spec)
{
    for (auto [prefix, variant] : {std::pair<std::string_view, std::optional<CifarVariant>>{"cifar10:", CifarVariant::cifar10},
                                   {"cifar100:", CifarVariant::cifar100},
                                   {"cifar:", std::nullopt}}) {
        if (spec.starts_with(prefix)) return CifarSpec{variant, spec.substr(prefix.size())};
    }
    return std::nullopt;
}

CifarVariant detect_variant(const fs::path& file)
{
    std::error_code ec;
    const auto size = fs::file_size(file, ec);
    if (ec) throw IoError("cannot read " + file.string() + ": " + ec.message());
    const bool ten = size % cifar_record_size(CifarVariant::cifar10) == 0;
    const bool hundred = size % cifar_record_size(CifarVariant::cifar100) == 0;
    if (ten == hundred) {
        throw ConfigError("cannot tell whether " + file.string() + " is CIFAR-10 or CIFAR-100; use cifar10: or cifar100:");
    }
    return ten ? CifarVariant::cifar10 : CifarVariant::cifar100;
}

/// Canonical spec strings with absolute paths.
std::vector<std::string> resolve_data_specs(const std::vector<std::string>& specs)
{
    std::vector<std::string> out;
    for (const auto& s : specs) {
        if (auto c = parse_cifar_spec(s)) {
            const CifarVariant v = c->variant ? *c->variant : detect_variant(c->path);
            out.push_back((v == CifarVariant::cifar10 ? "cifar10:" : "cifar100:") + absolute(c->path));
        } else {
            out.push_back(absolute(s));
        }
    }
    return out;
}

LabeledDataset load_dataset(const std::vector<std::string>& specs)
{
    if (specs.empty()) throw ConfigError("--data is required");
    if (!parse_cifar_spec(specs.front())) {
        if (specs.size() != 1) throw ConfigError("only one image folder may be given with --data");
        return load_image_folder(specs.front());
    }
    std::vector<fs::path> files;
    std::optional<CifarVariant> variant;
    for (const auto& s : specs) {
        const auto c = parse_cifar_spec(s);
        if (!c) throw ConfigError("cannot mix an image folder with CIFAR files in --data");
        const CifarVariant v = c->variant ? *c->variant : detect_variant(c->path);
        if (variant && *variant != v) throw ConfigError("cannot mix CIFAR-10 and CIFAR-100 files in --data");
        variant = v;
        files.emplace_back(c->path);
    }
    return load_cifar_binary(files, *variant);
}

std::vector<HashedPath> data_inputs(const std::vector<std::string>& resolved_specs)
{
    std::vector<HashedPath> inputs;
    for (const auto& s : resolved_specs) {
        const auto c = parse_cifar_spec(s);
        const fs::path p = c ? fs::path(c->path) : fs::path(s);
        inputs.push_back({p.string(), hash_path(p)});
        if (c) {
            for (const char* meta : {"batches.meta.txt", "fine_label_names.txt"}) {
                const fs::path m = p.parent_path() / meta;
                const bool listed = std::any_of(inputs.begin(), inputs.end(), [&](const auto& h) { return h.path == m.string(); });
                if (fs::is_regular_file(m) && !listed) inputs.push_back({m.string(), hash_path(m)});
            }
        }
    }
    return inputs;
}

PreparedSet prepare_for(const LabeledDataset& ds, const ArchitectureConfig& arch)
{
    PreprocessConfig pre;
    pre.target_h = arch.input_h;
    pre.target_w = arch.input_w;
    return prepare(ds, pre);
}

std::vector<std::size_t> all_indices(std::size_t n)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}

void print_history(std::ostream& out, const FitResult& result)
{
    for (const auto& e : result.history) {
        out << fmt::format("epoch {:>3}  lr {:<8g} loss {:.6f}  train acc {:.2f}\n", e.epoch, e.lr, e.train_loss,
                           100.0 * e.train_accuracy);
    }
}

// --- manifests -------------------------------------------------------------

class ManifestWriter {
public:
    ManifestWriter(RunManifest manifest, fs::path path) : manifest_(std::move(manifest)), path_(std::move(path))
    {
        write_manifest(manifest_, path_);
    }

    void finish(std::ostream& out)
    {
        hash_outputs(manifest_);
        write_manifest(manifest_, path_);
        out << "manifest: " << path_.string() << "\n";
    }

private:
    RunManifest manifest_;
    fs::path path_;
};

RunManifest new_manifest(const std::string& command, std::vector<std::string> argv, ordered_json config,
                         std::vector<HashedPath> inputs, const std::vector<std::string>& outputs, std::uint64_t seed)
{
    RunManifest m;
    m.command = command;
    m.argv = std::move(argv);
    m.config = std::move(config);
    m.inputs = std::move(inputs);
    for (const auto& o : outputs) m.outputs.push_back({o, ""});
    m.seed = seed;
    return m;
}

// --- pretrain --------------------------------------------------------------

struct PretrainOptions {
    std::vector<std::string> data;
    std::size_t classes = 0;
    std::vector<std::string> class_filter;
    std::string name;
    std::string out;
    TrainFlags train;
};

int cmd_pretrain(PretrainOptions o, std::ostream& out)
{
    o.data = resolve_data_specs(o.data);
    o.out = absolute(o.out);
    LabeledDataset ds = load_dataset(o.data);
    if (!o.class_filter.empty()) ds = filter_classes(ds, o.class_filter);
    if (o.classes != 0 && o.classes != ds.class_count()) {
        throw ConfigError(fmt::format("class-count mismatch: --classes {} but the dataset has {} classes", o.classes,
                                      ds.class_count()));
    }
    const TrainConfig cfg = o.train.config(TrainablePolicy::all);
    if (o.name.empty()) o.name = ds.source;

    std::vector<std::string> argv{"pretrain"};
    for (const auto& d : o.data) argv.insert(argv.end(), {"--data", d});
    argv.insert(argv.end(), {"--classes", std::to_string(ds.class_count())});
    for (const auto& c : o.class_filter) argv.insert(argv.end(), {"--class-filter", c});
    argv.insert(argv.end(), {"--name", o.name, "--out", o.out});
    o.train.append(argv);
    ordered_json config{{"data", o.data},
                        {"classes", ds.class_count()},
                        {"class_filter", o.class_filter},
                        {"class_names", ds.class_names},
                        {"name", o.name},
                        {"train", o.train.json(cfg.trainable_policy)}};
    ManifestWriter manifest(new_manifest("pretrain", argv, config, data_inputs(o.data), {o.out}, cfg.seed),
                            manifest_path_for(o.out));

    ModelGraph model = build_voltavision(ds.class_count(), cfg.seed);
    const PreparedSet set = prepare_for(ds, model.config());
    model.provenance = fmt::format("{}; {} classes; {} epochs; seed {}", o.name, ds.class_count(), cfg.epochs, cfg.seed);
    model.class_names = ds.class_names;
    out << fmt::format("pretraining on {} images, {} classes\n", set.labels.size(), ds.class_count());
    const auto result = fit(model, set.images, set.labels, all_indices(set.labels.size()), {}, cfg);
    print_history(out, result);
    const std::size_t bytes = save_checkpoint(model, o.out);
    out << fmt::format("wrote {} ({})\n", o.out, format_model_size(bytes));
    manifest.finish(out);
    return exit_ok;
}

// --- finetune --------------------------------------------------------------

struct FinetuneOptions {
    std::string from;
    bool scratch = false;
    std::vector<std::string> data;
    bool unfreeze = false;
    std::string out;
    TrainFlags train;
};

void require_source(const std::string& from, bool scratch)
{
    if (from.empty() == !scratch) throw ConfigError("give exactly one of --from <checkpoint> or --scratch");
}

int cmd_finetune(FinetuneOptions o, std::ostream& out)
{
    require_source(o.from, o.scratch);
    o.data = resolve_data_specs(o.data);
    o.out = absolute(o.out);
    if (!o.from.empty()) o.from = absolute(o.from);
    const TrainablePolicy policy = o.unfreeze ? TrainablePolicy::all : TrainablePolicy::head_only;
    const TrainConfig cfg = o.train.config(policy);

    std::optional<ModelGraph> source;
    if (!o.from.empty()) source = load_checkpoint(o.from);
    const LabeledDataset ds = load_dataset(o.data);

    std::vector<std::string> argv{"finetune"};
    if (o.scratch) argv.push_back("--scratch");
    else argv.insert(argv.end(), {"--from", o.from});
    for (const auto& d : o.data) argv.insert(argv.end(), {"--data", d});
    if (o.unfreeze) argv.push_back("--unfreeze");
    argv.insert(argv.end(), {"--out", o.out});
    o.train.append(argv);
    auto inputs = data_inputs(o.data);
    if (source) inputs.insert(inputs.begin(), {o.from, hash_path(o.from)});
    ordered_json config{{"from", o.scratch ? ordered_json(nullptr) : ordered_json(o.from)},
                        {"data", o.data},
                        {"classes", ds.class_count()},
                        {"class_names", ds.class_names},
                        {"train", o.train.json(policy)}};
    ManifestWriter manifest(new_manifest("finetune", argv, config, inputs, {o.out}, cfg.seed), manifest_path_for(o.out));

    ModelGraph model = source ? replace_head(*source, ds.class_count(), cfg.seed) : build_voltavision(ds.class_count(), cfg.seed);
    model.class_names = ds.class_names;
    const PreparedSet set = prepare_for(ds, model.config());
    const auto before = backbone_checksum(model);
    out << fmt::format("fine-tuning {} on {} images, {} classes, {} trainable parameters\n",
                       model.provenance.empty() ? "scratch model" : "\"" + model.provenance + "\"", set.labels.size(),
                       ds.class_count(), set_trainable(model, policy).active_parameter_count());
    const auto result = fit(model, set.images, set.labels, all_indices(set.labels.size()), {}, cfg);
    print_history(out, result);
    const auto after = backbone_checksum(model);
    out << fmt::format("backbone checksum {:016x} -> {:016x}{}\n", before, after,
                       before == after ? " (unchanged)" : "");
    const std::size_t bytes = save_checkpoint(model, o.out);
    out << fmt::format("wrote {} ({})\n", o.out, format_model_size(bytes));
    manifest.finish(out);
    return exit_ok;
}

// --- crossval --------------------------------------------------------------

struct CrossvalOptions {
    std::string from;
    bool scratch = false;
    std::vector<std::string> data;
    bool unfreeze = false;
    std::size_t folds = 5;
    std::string report;
    std::string folds_out;
    std::string label;
    bool timing = false;
    TrainFlags train;
};

int cmd_crossval(CrossvalOptions o, std::ostream& out)
{
    require_source(o.from, o.scratch);
    if (o.folds < 2) throw ConfigError(fmt::format("--folds must be at least 2, got {}", o.folds));
    o.data = resolve_data_specs(o.data);
    if (!o.from.empty()) o.from = absolute(o.from);
    if (!o.report.empty()) o.report = absolute(o.report);
    if (!o.folds_out.empty()) o.folds_out = absolute(o.folds_out);
    const TrainablePolicy policy = o.unfreeze ? TrainablePolicy::all : TrainablePolicy::head_only;
    const TrainConfig cfg = o.train.config(policy);

    std::optional<ModelGraph> pretrained;
    if (!o.from.empty()) pretrained = load_checkpoint(o.from);
    const LabeledDataset ds = load_dataset(o.data);
    const PreparedSet set = prepare(ds);
    const FoldPlan plan = kfold_split(set.labels, set.class_names.size(), o.folds, cfg.seed, set.class_names);

    std::optional<ManifestWriter> manifest;
    std::vector<std::string> outputs;
    if (!o.report.empty()) outputs.push_back(o.report);
    if (!o.folds_out.empty()) outputs.push_back(o.folds_out);
    if (!outputs.empty()) {
        std::vector<std::string> argv{"crossval"};
        if (o.scratch) argv.push_back("--scratch");
        else argv.insert(argv.end(), {"--from", o.from});
        for (const auto& d : o.data) argv.insert(argv.end(), {"--data", d});
        if (o.unfreeze) argv.push_back("--unfreeze");
        argv.insert(argv.end(), {"--folds", std::to_string(o.folds)});
        if (!o.report.empty()) argv.insert(argv.end(), {"--report", o.report});
        if (!o.folds_out.empty()) argv.insert(argv.end(), {"--folds-out", o.folds_out});
        if (!o.label.empty()) argv.insert(argv.end(), {"--label", o.label});
        if (o.timing) argv.push_back("--timing");
        o.train.append(argv);
        auto inputs = data_inputs(o.data);
        if (pretrained) inputs.insert(inputs.begin(), {o.from, hash_path(o.from)});
        ordered_json config{{"from", o.scratch ? ordered_json(nullptr) : ordered_json(o.from)},
                            {"data", o.data},
                            {"folds", o.folds},
                            {"fold_seed", "seed xor fold_index"},
                            {"label", o.label},
                            {"timing", o.timing},
                            {"train", o.train.json(policy)}};
        manifest.emplace(new_manifest("crossval", argv, config, inputs, outputs, cfg.seed),
                         manifest_path_for(outputs.front()));
    }
    if (!o.folds_out.empty()) write_text_file(o.folds_out, format_fold_plan(plan));

    const auto report = cross_validate(pretrained ? &*pretrained : nullptr, set, plan, cfg, o.label,
                                       [&out](const FoldResult& f) {
                                           out << fmt::format("fold {}: accuracy {:.2f}  f1 {:.2f}  ({} / {})\n", f.fold,
                                                              100.0 * f.metrics.accuracy, 100.0 * f.metrics.f1,
                                                              f.train_count, f.validation_count);
                                       });
    const std::string text = format_report(report, o.timing);
    if (!o.report.empty()) write_text_file(o.report, text);

    ModelGraph sized = pretrained ? replace_head(*pretrained, set.class_names.size(), 0)
                                  : build_voltavision(set.class_names.size(), 0);
    sized.class_names = set.class_names;
    const TableRow row{pretrained ? pretrained->provenance : std::string("none (scratch)"), "VoltaVision", report.mean,
                       report.seconds, serialize_checkpoint(sized).size()};
    out << "\n" << format_table(std::span<const TableRow>(&row, 1));
    if (manifest) manifest->finish(out);
    return exit_ok;
}

// --- predict ---------------------------------------------------------------

struct PredictOptions {
    std::string model;
    std::string image;
    bool sorted = false;
};

int cmd_predict(const PredictOptions& o, std::ostream& out)
{
    ModelGraph model = load_checkpoint(o.model);
    const Tensor image = read_image(o.image);
    PreprocessConfig pre;
    pre.target_h = model.config().input_h;
    pre.target_w = model.config().input_w;
    const Tensor probs = softmax(model.forward(preprocess(image, pre), Pass::infer));

    const std::size_t classes = model.config().num_classes;
    auto name = [&](std::size_t c) { return c < model.class_names.size() ? model.class_names[c] : fmt::format("class{}", c); };
    std::vector<std::size_t> order = all_indices(classes);
    const std::size_t best = argmax_rows(probs).front();
    if (o.sorted) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
    }
    out << fmt::format("predicted: {} ({:.6f})\n", name(best), probs[best]);
    ordered_json probabilities = ordered_json::array();
    for (std::size_t c : order) {
        out << fmt::format("  {:<24} {:.6f}\n", name(c), probs[c]);
        probabilities.push_back({{"class", name(c)}, {"p", probs[c]}});
    }
    const ordered_json line{{"image", o.image}, {"class", name(best)}, {"index", best}, {"probabilities", probabilities}};
    out << line.dump() << "\n";
    return exit_ok;
}

// --- inspect ---------------------------------------------------------------

int cmd_inspect(const std::string& path, std::ostream& out)
{
    const auto bytes = read_file_bytes(path);
    const ModelGraph model = deserialize_checkpoint(bytes);
    const auto& cfg = model.config();
    out << fmt::format("checkpoint  {}\nsize        {} bytes ({})\nprovenance  {}\nclasses     {}\n", path, bytes.size(),
                       format_model_size(bytes.size()), model.provenance.empty() ? "none (scratch)" : model.provenance,
                       cfg.num_classes);
    if (!model.class_names.empty()) {
        std::string names;
        for (const auto& n : model.class_names) names += (names.empty() ? "" : ", ") + n;
        out << "labels      " << names << "\n";
    }
    out << fmt::format("\n{:<8} {:<10} {:<14} {:>10}\n", "layer", "kind", "output", "params");
    const auto chain = cfg.shape_chain();
    const auto entries = model.tensor_entries();
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        const auto& node = model.layers()[i];
        std::size_t params = 0;
        for (const auto& e : entries) {
            if (e.layer == i && !e.role.starts_with("running_")) params += e.tensor->size();
        }
        const Shape4& s = chain[i];
        out << fmt::format("{:<8} {:<10} {:<14} {:>10}\n", BasicModel<float>::layer_names()[i], to_string(kind_of(node)),
                           fmt::format("{}x{}x{}", s.c, s.h, s.w), params);
    }
    const auto counts = count_parameters(model);
    out << fmt::format("\ntrainable parameters      {}\nwith running statistics   {}\nbackbone checksum         {:016x}\n",
                       counts.trainable, counts.total_with_stats, backbone_checksum(model));
    return exit_ok;
}

// --- selfcheck -------------------------------------------------------------

class Checklist {
public:
    explicit Checklist(std::ostream& out) : out_(out) {}

    void item(bool ok, const std::string& text)
    {
        out_ << (ok ? "PASS  " : "FAIL  ") << text << "\n";
        failures_ += ok ? 0 : 1;
    }
    int failures() const { return failures_; }

private:
    std::ostream& out_;
    int failures_ = 0;
};

void selfcheck_gradients(Checklist& list)
{
    auto report = [&list](const GradCheckResult& r, double limit) {
        std::string text = fmt::format("gradcheck {:<28} max rel err {:.3e} < {:.0e} ({} coords)", r.target,
                                       r.max_relative_error, limit, r.coordinates);
        if (r.nonsmooth > 0) text += fmt::format("; {} probes on a kink", r.nonsmooth);
        if (!r.skipped.empty()) {
            text += "; zero-gradient groups";
            for (const auto& s : r.skipped) text += " " + s;
        }
        list.item(r.max_relative_error < limit && r.coordinates > 0 && 10 * r.nonsmooth <= r.coordinates, text);
    };
    report(check_conv_gradients({2, 4, 8, 8}, ConvGeometry{4, 3, 3, 1, 2}, 1), 1e-4);
    report(check_batchnorm_gradients({2, 4, 8, 8}, 2), 1e-4);
    report(check_relu_gradients({2, 4, 8, 8}, 3), 1e-6);
    report(check_maxpool_gradients({2, 4, 8, 8}, PoolGeometry{3, 3}, 4), 1e-4);
    report(check_linear_gradients(2, 32, 5, 5), 1e-6);
    report(check_network_gradients(3, 2, NetworkCheck::head, 6), 1e-4);
    report(check_network_gradients(3, 2, NetworkCheck::train_mode_bn, 7), 1e-4);
    report(check_network_gradients(3, 2, NetworkCheck::frozen_bn, 8), 1e-4);
}

void selfcheck_parameters(Checklist& list)
{
    const std::pair<std::size_t, std::size_t> expected[] = {{3, 30039}, {5, 44441}, {10, 80446}, {36, 267672}, {100, 728536}};
    for (auto [classes, count] : expected) {
        const auto got = count_parameters(build_voltavision(classes, 0)).trainable;
        list.item(got == count, fmt::format("parameters C={:<3} {:>7} (expected {})", classes, got, count));
    }
}

void selfcheck_checkpoint(Checklist& list)
{
    ModelGraph model = build_voltavision(5, 99);
    model.provenance = "selfcheck";
    model.class_names = {"a", "b", "c", "d", "e"};
    for (auto& node : model.layers()) {
        if (auto* bn = std::get_if<BatchNormLayer<float>>(&node)) {
            for (auto& v : bn->running_mean.data()) v = 0.25f;
            for (auto& v : bn->running_var.data()) v = 1.5f;
        }
    }
    const auto first = serialize_checkpoint(model);
    const ModelGraph loaded = deserialize_checkpoint(first);
    const auto second = serialize_checkpoint(loaded);
    bool same_values = loaded.class_names == model.class_names && loaded.provenance == model.provenance;
    const auto a = model.tensor_entries(), b = loaded.tensor_entries();
    for (std::size_t i = 0; same_values && i < a.size(); ++i) same_values = *a[i].tensor == *b[i].tensor;
    list.item(first == second && same_values,
              fmt::format("checkpoint round trip {} bytes, save -> load -> save byte-identical", first.size()));
}

void selfcheck_metrics(Checklist& list)
{
    ConfusionMatrix cm(3);
    const std::size_t cells[3][3] = {{8, 2, 0}, {1, 9, 0}, {0, 0, 10}};
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) cm.at(r, c) = cells[r][c];
    const Metrics m = compute_metrics(cm);
    list.item(std::abs(m.f1 - 0.8997) < 5e-5 && std::abs(m.accuracy - 0.9) < 1e-12,
              fmt::format("metrics worked example macro F1 {:.4f} (expected 0.8997), accuracy {:.4f}", m.f1, m.accuracy));

    Rng rng(2024);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.below(5);
        std::vector<std::size_t> truth, pred;
        for (std::size_t i = 0, n = 1 + rng.below(60); i < n; ++i) {
            truth.push_back(rng.below(k));
            pred.push_back(rng.below(k));
        }
        const Metrics got = compute_metrics(ConfusionMatrix::from_predictions(truth, pred, k));
        double p_sum = 0, r_sum = 0, f_sum = 0, correct = 0;
        for (std::size_t c = 0; c < k; ++c) {
            double tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < truth.size(); ++i) {
                tp += truth[i] == c && pred[i] == c;
                fp += truth[i] != c && pred[i] == c;
                fn += truth[i] == c && pred[i] != c;
            }
            const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0, r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
            p_sum += p;
            r_sum += r;
            f_sum += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
        }
        for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
        const double kk = static_cast<double>(k);
        worst = std::max({worst, std::abs(got.precision - p_sum / kk), std::abs(got.recall - r_sum / kk),
                          std::abs(got.f1 - f_sum / kk), std::abs(got.accuracy - correct / static_cast<double>(truth.size()))});
    }
    list.item(worst <= 1e-12, fmt::format("metrics vs per-sample tally on 100 random cases, max diff {:.1e}", worst));
}

int cmd_selfcheck(std::ostream& out)
{
    Checklist list(out);
    selfcheck_gradients(list);
    selfcheck_parameters(list);
    selfcheck_checkpoint(list);
    selfcheck_metrics(list);
    out << (list.failures() == 0 ? "selfcheck passed\n" : fmt::format("selfcheck failed: {} item(s)\n", list.failures()));
    return list.failures() == 0 ? exit_ok : exit_selfcheck;
}

// --- replay ----------------------------------------------------------------

int cmd_replay(const std::string& path, std::ostream& out, std::ostream& err)
{
    const RunManifest recorded = read_manifest(path);
    if (recorded.tool_version != kToolVersion) {
        err << fmt::format("warning: manifest written by {}, replaying with {}\n", recorded.tool_version, kToolVersion);
    }
    std::vector<HashedPath> inputs;
    for (const auto& in : recorded.inputs) inputs.push_back({in.path, hash_path(in.path)});
    if (const auto changed = hash_mismatches(recorded.inputs, inputs); !changed.empty()) {
        throw DataError("inputs changed since the run was recorded: " + changed.front());
    }
    out << "replaying: voltavision";
    for (const auto& a : recorded.argv) out << " " << a;
    out << "\n";
    if (const int code = run(recorded.argv, out, err); code != exit_ok) return code;

    std::vector<HashedPath> outputs;
    for (const auto& o : recorded.outputs) outputs.push_back({o.path, hash_path(o.path)});
    const auto differing = hash_mismatches(recorded.outputs, outputs);
    for (const auto& d : differing) err << "output differs from the recorded hash: " << d << "\n";
    if (!differing.empty()) return exit_config;
    out << fmt::format("replay reproduced {} output hash(es)\n", outputs.size());
    return exit_ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"voltavision: compact CNN transfer-learning toolkit", "voltavision"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    PretrainOptions pre;
    auto* pretrain = app.add_subcommand("pretrain", "train a source-task checkpoint (all layers)");
    pretrain->add_option("--data", pre.data, "image folder, or cifar10:/cifar100:/cifar: binary files")->required();
    pretrain->add_option("--classes", pre.classes, "expected class count after filtering");
    pretrain->add_option("--class-filter", pre.class_filter, "keep only these classes")->delimiter(',');
    pretrain->add_option("--name", pre.name, "dataset name for the provenance note");
    pretrain->add_option("--out", pre.out, "checkpoint path")->required();
    pre.train.lr = 1e-2;
    pre.train.add_to(pretrain);

    FinetuneOptions ft;
    auto* finetune = app.add_subcommand("finetune", "replace the head and fine-tune on a target folder");
    auto* ft_from = finetune->add_option("--from", ft.from, "pretrained checkpoint");
    finetune->add_flag("--scratch", ft.scratch, "start from random weights")->excludes(ft_from);
    finetune->add_option("--data", ft.data, "target image folder")->required();
    finetune->add_flag("--unfreeze", ft.unfreeze, "train every layer instead of the head only");
    finetune->add_option("--out", ft.out, "fine-tuned checkpoint path")->required();
    ft.train.add_to(finetune);

    CrossvalOptions cv;
    auto* crossval = app.add_subcommand("crossval", "stratified k-fold cross-validation of fine-tuning");
    auto* cv_from = crossval->add_option("--from", cv.from, "pretrained checkpoint");
    crossval->add_flag("--scratch", cv.scratch, "start every fold from random weights")->excludes(cv_from);
    crossval->add_option("--data", cv.data, "target image folder")->required();
    crossval->add_flag("--unfreeze", cv.unfreeze, "train every layer instead of the head only");
    crossval->add_option("--folds", cv.folds, "number of folds")->capture_default_str();
    crossval->add_option("--report", cv.report, "write the text report here");
    crossval->add_option("--folds-out", cv.folds_out, "write the fold assignment here");
    crossval->add_option("--label", cv.label, "free-text label echoed in the report");
    crossval->add_flag("--timing", cv.timing, "include wall-clock times in the report");
    cv.train.add_to(crossval);

    PredictOptions pr;
    auto* predict = app.add_subcommand("predict", "classify one image");
    predict->add_option("--model", pr.model, "checkpoint")->required();
    predict->add_option("--image", pr.image, "PNG or JPEG image")->required();
    predict->add_flag("--sorted", pr.sorted, "list classes by descending probability");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "describe a checkpoint");
    inspect->add_option("checkpoint", inspect_path, "checkpoint path")->required();

    auto* selfcheck = app.add_subcommand("selfcheck", "gradient, parameter-count, checkpoint and metrics checks");

    std::string replay_path;
    auto* replay = app.add_subcommand("replay", "re-run a recorded command and compare output hashes");
    replay->add_option("manifest", replay_path, "run manifest")->required();

    std::vector<std::string> storage{"voltavision"};
    storage.insert(storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& s : storage) argv.push_back(s.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*pretrain) return cmd_pretrain(pre, out);
        if (*finetune) return cmd_finetune(ft, out);
        if (*crossval) return cmd_crossval(cv, out);
        if (*predict) return cmd_predict(pr, out);
        if (*inspect) return cmd_inspect(inspect_path, out);
        if (*selfcheck) return cmd_selfcheck(out);
        if (*replay) return cmd_replay(replay_path, out, err);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }
    return exit_config;
}

}  // namespace volta::cli
