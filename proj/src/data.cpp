#include "volta/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <numeric>
#include <optional>

#include "volta/file_io.hpp"
#include "volta/image_io.hpp"
#include "volta/rng.hpp"

namespace volta {

namespace fs = std::filesystem;

namespace {

// Rng stream namespaces, so fold and batch shuffles never share a sequence.
constexpr std::uint64_t kFoldStream = 1ULL << 32;
constexpr std::uint64_t kBatchStream = 2ULL << 32;

bool has_image_extension(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> read_lines(const fs::path& p)
{
    std::vector<std::string> lines;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::string padded_index(std::size_t i, std::size_t count)
{
    const std::size_t width = std::to_string(count - 1).size();
    std::string s = std::to_string(i);
    return std::string(width - std::min(width, s.size()), '0') + s;
}

}  // namespace

std::vector<std::size_t> LabeledDataset::class_counts() const
{
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (const auto& s : samples) ++counts.at(s.label);
    return counts;
}

std::vector<std::size_t> LabeledDataset::labels() const
{
    std::vector<std::size_t> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.label);
    return out;
}

LabeledDataset load_image_folder(const fs::path& root)
{
    if (!fs::is_directory(root)) throw DataError("image folder " + root.string() + " does not exist");
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    std::sort(class_dirs.begin(), class_dirs.end());
    if (class_dirs.size() < 2) {
        throw DataError("image folder " + root.string() + " has " + std::to_string(class_dirs.size()) +
                        " class subdirectories; at least 2 are required");
    }

    LabeledDataset ds;
    ds.source = root.string();
    std::vector<std::pair<fs::path, std::size_t>> files;
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        ds.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> images;
        for (const auto& entry : fs::directory_iterator(class_dirs[c]))
            if (entry.is_regular_file() && has_image_extension(entry.path())) images.push_back(entry.path());
        std::sort(images.begin(), images.end());
        if (images.empty()) throw DataError("class '" + ds.class_names.back() + "' has no PNG/JPEG images");
        for (auto& p : images) files.emplace_back(std::move(p), c);
    }

    ds.samples.resize(files.size());
    std::vector<std::exception_ptr> errors(files.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(files.size()); ++i) {
        try {
            ds.samples[i] = {read_image(files[i].first), files[i].second};
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return ds;
}

std::size_t cifar_record_size(CifarVariant variant)
{
    return (variant == CifarVariant::cifar100 ? 2 : 1) + 3072;
}

LabeledDataset load_cifar_binary(std::span<const fs::path> files, CifarVariant variant)
{
    if (files.empty()) throw DataError("no CIFAR files given");
    const std::size_t record = cifar_record_size(variant);
    const std::size_t label_bytes = record - 3072;
    const std::size_t classes = variant == CifarVariant::cifar100 ? 100 : 10;

    LabeledDataset ds;
    ds.source = variant == CifarVariant::cifar100 ? "cifar100:" : "cifar10:";
    const fs::path meta =
        files[0].parent_path() / (variant == CifarVariant::cifar100 ? "fine_label_names.txt" : "batches.meta.txt");
    if (fs::exists(meta)) ds.class_names = read_lines(meta);
    if (ds.class_names.size() != classes) {
        ds.class_names.clear();
        for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back(padded_index(c, classes));
    }

    for (const auto& file : files) {
        ds.source += file.filename().string() + ";";
        const auto bytes = read_file_bytes(file);
        if (bytes.size() % record != 0) {
            throw DataError("format error: " + file.string() + " is " + std::to_string(bytes.size()) +
                            " bytes, not a multiple of the " + std::to_string(record) + "-byte record");
        }
        for (std::size_t off = 0; off < bytes.size(); off += record) {
            const std::size_t label = bytes[off + label_bytes - 1];
            if (label >= classes) {
                throw LabelError("format error: " + file.string() + " record " + std::to_string(off / record) +
                                 " has label " + std::to_string(label));
            }
            if (variant == CifarVariant::cifar100) ds.coarse_labels.push_back(bytes[off]);
            Tensor image({1, 3, 32, 32});
            const std::uint8_t* px = bytes.data() + off + label_bytes;
            for (std::size_t i = 0; i < 3072; ++i) image[i] = static_cast<float>(px[i]) / 255.0f;
            ds.samples.push_back({std::move(image), label});
        }
    }
    return ds;
}

std::vector<std::uint8_t> encode_cifar_records(const LabeledDataset& dataset, CifarVariant variant)
{
    std::vector<std::uint8_t> out;
    out.reserve(dataset.samples.size() * cifar_record_size(variant));
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        if (s.image.shape() != Shape4{1, 3, 32, 32}) throw ShapeError("CIFAR records hold 3x32x32 images");
        if (variant == CifarVariant::cifar100) out.push_back(i < dataset.coarse_labels.size() ? dataset.coarse_labels[i] : 0);
        out.push_back(static_cast<std::uint8_t>(s.label));
        for (float v : s.image.data()) out.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
    }
    return out;
}

LabeledDataset filter_classes(const LabeledDataset& dataset, std::span<const std::string> keep)
{
    std::vector<std::optional<std::size_t>> remap(dataset.class_names.size());
    for (const auto& name : keep) {
        const auto it = std::find(dataset.class_names.begin(), dataset.class_names.end(), name);
        if (it == dataset.class_names.end()) throw DataError("class filter names unknown class '" + name + "'");
        remap[static_cast<std::size_t>(it - dataset.class_names.begin())] = 0;
    }
    LabeledDataset out;
    out.source = dataset.source;
    for (std::size_t c = 0; c < remap.size(); ++c) {
        if (!remap[c]) continue;
        remap[c] = out.class_names.size();
        out.class_names.push_back(dataset.class_names[c]);
    }
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        const auto& s = dataset.samples[i];
        if (!remap[s.label]) continue;
        out.samples.push_back({s.image, *remap[s.label]});
        if (i < dataset.coarse_labels.size()) out.coarse_labels.push_back(dataset.coarse_labels[i]);
    }
    return out;
}

Tensor resize_bilinear(const Tensor& image, std::size_t out_h, std::size_t out_w)
{
    const Shape4 s = image.shape();
    if (s.count() == 0 || out_h == 0 || out_w == 0) throw DataError("cannot resize a zero-area image");
    if (s.h == out_h && s.w == out_w) return image;

    auto source_coord = [](std::size_t dst, std::size_t in, std::size_t out) {
        const double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        return std::clamp(src, 0.0, static_cast<double>(in - 1));
    };

    Tensor out({s.n, s.c, out_h, out_w});
    for (std::size_t y = 0; y < out_h; ++y) {
        const double sy = source_coord(y, s.h, out_h);
        const auto y0 = static_cast<std::size_t>(std::floor(sy));
        const std::size_t y1 = std::min(y0 + 1, s.h - 1);
        const double fy = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < out_w; ++x) {
            const double sx = source_coord(x, s.w, out_w);
            const auto x0 = static_cast<std::size_t>(std::floor(sx));
            const std::size_t x1 = std::min(x0 + 1, s.w - 1);
            const double fx = sx - static_cast<double>(x0);
            for (std::size_t n = 0; n < s.n; ++n)
                for (std::size_t c = 0; c < s.c; ++c) {
                    const double top = (1 - fx) * image.at(n, c, y0, x0) + fx * image.at(n, c, y0, x1);
                    const double bottom = (1 - fx) * image.at(n, c, y1, x0) + fx * image.at(n, c, y1, x1);
                    out.at(n, c, y, x) = static_cast<float>((1 - fy) * top + fy * bottom);
                }
        }
    }
    return out;
}

Tensor preprocess(const Tensor& image, const PreprocessConfig& config)
{
    if (!(config.std > 0.0f)) throw ConfigError("normalization std must be positive");
    if (image.shape().count() == 0) throw DataError("cannot preprocess a zero-area image");
    if (image.shape().c != 3) throw ShapeError("preprocess expects RGB input, got " + to_string(image.shape()));
    Tensor out = resize_bilinear(image, config.target_h, config.target_w);
    for (auto& v : out.data()) v = (v - config.mean) / config.std;
    return out;
}

PreparedSet prepare(const LabeledDataset& dataset, const PreprocessConfig& config)
{
    PreparedSet out;
    out.class_names = dataset.class_names;
    out.source = dataset.source;
    out.labels = dataset.labels();
    out.images = Tensor({dataset.samples.size(), 3, config.target_h, config.target_w});
    std::vector<std::exception_ptr> errors(dataset.samples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(dataset.samples.size()); ++i) {
        try {
            const Tensor t = preprocess(dataset.samples[i].image, config);
            std::copy(t.data().begin(), t.data().end(), out.images.sample(i).begin());
        } catch (...) {
            errors[i] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

std::vector<std::size_t> FoldPlan::training_indices(std::size_t fold) const
{
    std::vector<std::size_t> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
    std::sort(out.begin(), out.end());
    return out;
}

FoldPlan kfold_split(std::span<const std::size_t> labels, std::size_t class_count, std::size_t k, std::uint64_t seed,
                     std::span<const std::string> class_names)
{
    if (k < 2) throw ConfigError("k-fold cross-validation needs k >= 2, got " + std::to_string(k));
    std::vector<std::vector<std::size_t>> by_class(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= class_count) throw LabelError("sample " + std::to_string(i) + " has out-of-range label");
        by_class[labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < class_count; ++c) {
        if (by_class[c].size() < k) {
            const std::string name = c < class_names.size() ? class_names[c] : std::to_string(c);
            throw DataError("class '" + name + "' has " + std::to_string(by_class[c].size()) + " samples, fewer than " +
                            std::to_string(k) + " folds");
        }
    }

    FoldPlan plan{k, seed, std::vector<std::vector<std::size_t>>(k)};
    std::size_t position = 0;
    for (std::size_t c = 0; c < class_count; ++c) {
        auto members = by_class[c];
        Rng rng(seed, kFoldStream + c);
        rng.shuffle(members.begin(), members.end());
        for (std::size_t j = 0; j < members.size(); ++j) plan.folds[(position + j) % k].push_back(members[j]);
        position = (position + members.size()) % k;
    }
    for (auto& fold : plan.folds) std::sort(fold.begin(), fold.end());
    return plan;
}

std::string format_fold_plan(const FoldPlan& plan)
{
    std::string out = "# k=" + std::to_string(plan.k) + " seed=" + std::to_string(plan.seed) + "\n";
    for (std::size_t f = 0; f < plan.folds.size(); ++f) {
        out += "fold " + std::to_string(f) + ":";
        for (std::size_t i : plan.folds[f]) out += " " + std::to_string(i);
        out += "\n";
    }
    return out;
}

std::vector<std::vector<std::size_t>> iterate_batches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                      std::uint64_t seed, std::size_t epoch)
{
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    std::vector<std::size_t> order(indices.begin(), indices.end());
    Rng rng(seed, kBatchStream + epoch);
    rng.shuffle(order.begin(), order.end());

    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
        const std::size_t end = std::min(order.size(), begin + batch_size);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (batches.size() >= 2 && batches.back().size() < 2) {
        batches[batches.size() - 2].insert(batches[batches.size() - 2].end(), batches.back().begin(),
                                           batches.back().end());
        batches.pop_back();
    }
    return batches;
}

}  // namespace volta
