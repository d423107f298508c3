#include <doctest.h>

#include <png.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "synthetic.hpp"
#include "temp_dir.hpp"
#include "volta/data.hpp"
#include "volta/file_io.hpp"
#include "volta/image_io.hpp"

using namespace volta;
namespace fs = std::filesystem;

namespace {

std::vector<std::size_t> labels_with_counts(const std::vector<std::size_t>& counts)
{
    std::vector<std::size_t> labels;
    for (std::size_t c = 0; c < counts.size(); ++c) labels.insert(labels.end(), counts[c], c);
    return labels;
}

// Half-pixel bilinear sample of one channel, written out longhand.
double bilinear_at(const std::vector<std::vector<double>>& img, double sy, double sx)
{
    const double h = static_cast<double>(img.size()), w = static_cast<double>(img[0].size());
    sy = std::clamp(sy, 0.0, h - 1);
    sx = std::clamp(sx, 0.0, w - 1);
    const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
    const std::size_t y1 = std::min(y0 + 1, img.size() - 1), x1 = std::min(x0 + 1, img[0].size() - 1);
    const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
    return (1 - fy) * ((1 - fx) * img[y0][x0] + fx * img[y0][x1]) + fy * ((1 - fx) * img[y1][x0] + fx * img[y1][x1]);
}

void write_gray_png(const fs::path& path, std::size_t h, std::size_t w, std::uint8_t value)
{
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> px(h * w, value);
    fs::create_directories(path.parent_path());
    REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, px.data(), 0, nullptr) != 0);
}

Tensor solid(std::size_t h, std::size_t w, float r, float g, float b)
{
    Tensor t({1, 3, h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            t.at(0, 0, y, x) = r;
            t.at(0, 1, y, x) = g;
            t.at(0, 2, y, x) = b;
        }
    return t;
}

}  // namespace

TEST_CASE("stratified folds on the 102/116/110 layout")
{
    const auto labels = labels_with_counts({102, 116, 110});
    const auto plan = kfold_split(labels, 3, 5, 0);
    std::vector<std::size_t> sizes;
    for (const auto& f : plan.folds) sizes.push_back(f.size());
    CHECK(sizes == std::vector<std::size_t>{66, 66, 66, 65, 65});

    std::vector<std::size_t> seen;
    for (const auto& f : plan.folds) seen.insert(seen.end(), f.begin(), f.end());
    std::sort(seen.begin(), seen.end());
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    CHECK(seen == all);

    for (std::size_t c = 0; c < 3; ++c) {
        std::size_t lo = SIZE_MAX, hi = 0;
        for (const auto& f : plan.folds) {
            const auto n = static_cast<std::size_t>(std::count_if(f.begin(), f.end(), [&](std::size_t i) { return labels[i] == c; }));
            lo = std::min(lo, n);
            hi = std::max(hi, n);
        }
        CHECK(hi - lo <= 1);
    }

    const auto train = plan.training_indices(2);
    CHECK(train.size() == labels.size() - plan.folds[2].size());
    for (std::size_t i : plan.folds[2]) CHECK_FALSE(std::binary_search(train.begin(), train.end(), i));
}

TEST_CASE("fold plans are seeded")
{
    const auto labels = labels_with_counts({20, 17, 9});
    CHECK(kfold_split(labels, 3, 4, 7).folds == kfold_split(labels, 3, 4, 7).folds);
    CHECK(kfold_split(labels, 3, 4, 7).folds != kfold_split(labels, 3, 4, 8).folds);
    CHECK(format_fold_plan(kfold_split(labels, 3, 4, 7)) == format_fold_plan(kfold_split(labels, 3, 4, 7)));
}

TEST_CASE("fold plan errors")
{
    const auto labels = labels_with_counts({10, 10});
    CHECK_THROWS_AS(kfold_split(labels, 2, 1, 0), ConfigError);
    CHECK_THROWS_AS(kfold_split(labels, 2, 0, 0), ConfigError);
    const auto small = labels_with_counts({10, 3});
    const std::vector<std::string> names{"big", "tiny"};
    try {
        (void)kfold_split(small, 2, 5, 0, names);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("tiny") != std::string::npos);
    }
    const std::vector<std::size_t> bad{0, 1, 2};
    CHECK_THROWS_AS(kfold_split(bad, 2, 2, 0), LabelError);
}

TEST_CASE("batch iteration")
{
    std::vector<std::size_t> idx(66);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    auto sizes = [](const std::vector<std::vector<std::size_t>>& b) {
        std::vector<std::size_t> s;
        for (const auto& x : b) s.push_back(x.size());
        return s;
    };
    CHECK(sizes(iterate_batches(idx, 32, 0, 0)) == std::vector<std::size_t>{32, 32, 2});
    idx.pop_back();
    CHECK(sizes(iterate_batches(idx, 32, 0, 0)) == std::vector<std::size_t>{32, 33});

    const auto e0 = iterate_batches(idx, 32, 3, 0), e1 = iterate_batches(idx, 32, 3, 1);
    CHECK(e0 == iterate_batches(idx, 32, 3, 0));
    CHECK(e0 != e1);
    auto flat = [](const std::vector<std::vector<std::size_t>>& b) {
        std::vector<std::size_t> out;
        for (const auto& x : b) out.insert(out.end(), x.begin(), x.end());
        std::sort(out.begin(), out.end());
        return out;
    };
    CHECK(flat(e0) == idx);
    CHECK(flat(e1) == idx);
    CHECK_THROWS_AS(iterate_batches(idx, 0, 0, 0), ConfigError);
}

TEST_CASE("bilinear resize of a checkerboard")
{
    const std::vector<std::vector<double>> board{{0, 1}, {1, 0}};
    Tensor img({1, 3, 2, 2});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 2; ++y)
            for (std::size_t x = 0; x < 2; ++x) img.at(0, c, y, x) = static_cast<float>(board[y][x]);
    const Tensor out = resize_bilinear(img, 4, 4);
    REQUIRE(out.shape() == Shape4{1, 3, 4, 4});
    // frozen from bilinear_at with src = (dst + 0.5) / 2 - 0.5
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(0.0));
    CHECK(out.at(0, 0, 0, 3) == doctest::Approx(1.0));
    CHECK(out.at(0, 0, 3, 0) == doctest::Approx(1.0));
    CHECK(out.at(0, 0, 3, 3) == doctest::Approx(0.0));
    CHECK(out.at(0, 0, 0, 1) == doctest::Approx(0.25));
    CHECK(out.at(0, 0, 1, 1) == doctest::Approx(0.375));
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x) {
                const double want = bilinear_at(board, (static_cast<double>(y) + 0.5) / 2 - 0.5,
                                                (static_cast<double>(x) + 0.5) / 2 - 0.5);
                CHECK(out.at(0, c, y, x) == doctest::Approx(want).epsilon(1e-6));
            }
}

TEST_CASE("bilinear resize matches the longhand sampler on random images")
{
    Rng rng(9);
    for (const auto& [ih, iw, oh, ow] : std::vector<std::array<std::size_t, 4>>{{7, 5, 32, 32}, {64, 48, 32, 32}, {3, 9, 4, 2}}) {
        Tensor img({1, 3, ih, iw});
        for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
        const Tensor out = resize_bilinear(img, oh, ow);
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<std::vector<double>> plane(ih, std::vector<double>(iw));
            for (std::size_t y = 0; y < ih; ++y)
                for (std::size_t x = 0; x < iw; ++x) plane[y][x] = img.at(0, c, y, x);
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    const double sy = (static_cast<double>(y) + 0.5) * static_cast<double>(ih) / static_cast<double>(oh) - 0.5;
                    const double sx = (static_cast<double>(x) + 0.5) * static_cast<double>(iw) / static_cast<double>(ow) - 0.5;
                    CHECK(out.at(0, c, y, x) == doctest::Approx(bilinear_at(plane, sy, sx)).epsilon(1e-5));
                }
        }
    }
}

TEST_CASE("preprocessing")
{
    const Tensor grey = preprocess(solid(10, 13, 0.5f, 0.5f, 0.5f));
    REQUIRE(grey.shape() == Shape4{1, 3, 32, 32});
    for (float v : grey.data()) CHECK(v == doctest::Approx(0.0));

    Rng rng(2);
    Tensor img({1, 3, 32, 32});
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
    CHECK(resize_bilinear(img, 32, 32) == img);
    const Tensor p = preprocess(img);
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(p[i] >= -1.0f);
        CHECK(p[i] <= 1.0f);
        CHECK(p[i] == doctest::Approx(2.0 * img[i] - 1.0).epsilon(1e-6));
    }
    CHECK_THROWS_AS(preprocess(Tensor({1, 1, 4, 4})), ShapeError);
    CHECK_THROWS_AS(resize_bilinear(img, 0, 4), DataError);
}

TEST_CASE("CIFAR-10 records")
{
    test::TempDir dir;
    std::vector<std::uint8_t> bytes(2 * 3073, 255);
    bytes[0] = 7;
    bytes[3073] = 2;
    bytes[3073 + 1] = 128;
    write_file_bytes(dir.path() / "data_batch_1.bin", bytes);
    const std::vector<fs::path> files{dir.path() / "data_batch_1.bin"};
    const auto ds = load_cifar_binary(files, CifarVariant::cifar10);
    REQUIRE(ds.samples.size() == 2);
    CHECK(ds.samples[0].label == 7);
    for (float v : ds.samples[0].image.data()) CHECK(v == 1.0f);
    CHECK(ds.samples[1].label == 2);
    CHECK(ds.samples[1].image[0] == doctest::Approx(128.0 / 255.0));
    CHECK(ds.class_names.size() == 10);
    CHECK(ds.class_names[3] == "3");
    CHECK(encode_cifar_records(ds, CifarVariant::cifar10) == bytes);

    write_text_file(dir.path() / "batches.meta.txt",
                    "airplane\nautomobile\nbird\ncat\ndeer\ndog\nfrog\nhorse\nship\ntruck\n");
    CHECK(load_cifar_binary(files, CifarVariant::cifar10).class_names[7] == "horse");

    bytes.pop_back();
    write_file_bytes(dir.path() / "short.bin", bytes);
    const std::vector<fs::path> bad{dir.path() / "short.bin"};
    CHECK_THROWS_WITH_AS(load_cifar_binary(bad, CifarVariant::cifar10), doctest::Contains("format error"), DataError);
    bytes.push_back(0);
    bytes[0] = 10;
    write_file_bytes(dir.path() / "label.bin", bytes);
    const std::vector<fs::path> bad_label{dir.path() / "label.bin"};
    CHECK_THROWS_AS(load_cifar_binary(bad_label, CifarVariant::cifar10), LabelError);
}

TEST_CASE("CIFAR-100 records keep coarse labels")
{
    test::TempDir dir;
    std::vector<std::uint8_t> bytes(3074, 0);
    bytes[0] = 4;
    bytes[1] = 93;
    bytes[2] = 51;
    write_file_bytes(dir.path() / "train.bin", bytes);
    const std::vector<fs::path> files{dir.path() / "train.bin"};
    const auto ds = load_cifar_binary(files, CifarVariant::cifar100);
    REQUIRE(ds.samples.size() == 1);
    CHECK(ds.samples[0].label == 93);
    CHECK(ds.class_names[5] == "05");
    CHECK(ds.samples[0].image[0] == doctest::Approx(51.0 / 255.0));
    CHECK(encode_cifar_records(ds, CifarVariant::cifar100) == bytes);
}

TEST_CASE("image folders")
{
    test::TempDir dir;
    write_png(dir.path() / "b_class" / "z.png", solid(8, 9, 1, 0, 0));
    write_png(dir.path() / "b_class" / "a.png", solid(5, 6, 0, 1, 0));
    write_gray_png(dir.path() / "a_class" / "g.png", 4, 7, 51);
    write_text_file(dir.path() / "a_class" / "notes.txt", "ignored");

    const auto ds = load_image_folder(dir.path());
    CHECK(ds.class_names == std::vector<std::string>{"a_class", "b_class"});
    REQUIRE(ds.samples.size() == 3);
    CHECK(ds.class_counts() == std::vector<std::size_t>{1, 2});
    CHECK(ds.labels() == std::vector<std::size_t>{0, 1, 1});
    CHECK(ds.samples[0].image.shape() == Shape4{1, 3, 4, 7});
    for (float v : ds.samples[0].image.data()) CHECK(v == doctest::Approx(0.2));
    CHECK(ds.samples[1].image.at(0, 1, 0, 0) == 1.0f);
    CHECK(ds.samples[2].image.at(0, 0, 0, 0) == 1.0f);

    const auto again = load_image_folder(dir.path());
    for (std::size_t i = 0; i < 3; ++i) CHECK(again.samples[i].image == ds.samples[i].image);

    const std::vector<std::string> keep{"b_class"};
    const auto only_b = filter_classes(ds, keep);
    CHECK(only_b.class_names == keep);
    CHECK(only_b.labels() == std::vector<std::size_t>{0, 0});
    const std::vector<std::string> unknown{"c_class"};
    CHECK_THROWS_AS(filter_classes(ds, unknown), DataError);

    const auto prepared = prepare(ds);
    CHECK(prepared.images.shape() == Shape4{3, 3, 32, 32});
    CHECK(prepared.labels == ds.labels());
}

TEST_CASE("image folder errors")
{
    test::TempDir dir;
    CHECK_THROWS_AS(load_image_folder(dir.path() / "missing"), DataError);
    write_png(dir.path() / "only" / "a.png", solid(4, 4, 0, 0, 0));
    CHECK_THROWS_AS(load_image_folder(dir.path()), DataError);
    fs::create_directories(dir.path() / "empty");
    CHECK_THROWS_AS(load_image_folder(dir.path()), DataError);

    write_png(dir.path() / "empty" / "b.png", solid(4, 4, 1, 1, 1));
    write_text_file(dir.path() / "empty" / "broken.png", "not an image");
    try {
        (void)load_image_folder(dir.path());
        FAIL("expected DecodeError");
    } catch (const DecodeError& e) {
        CHECK(std::string(e.what()).find("broken.png") != std::string::npos);
    }
}

TEST_CASE("png round trip")
{
    test::TempDir dir;
    Rng rng(1);
    Tensor img({1, 3, 6, 5});
    for (auto& v : img.data()) v = static_cast<float>(rng.below(256)) / 255.0f;
    write_png(dir.path() / "x.png", img);
    const Tensor back = read_image(dir.path() / "x.png");
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == doctest::Approx(img[i]).epsilon(1e-6));
    CHECK_THROWS_AS(read_image(dir.path() / "nope.png"), IoError);
}

TEST_CASE("synthetic component folder has the target layout")
{
    test::TempDir dir;
    const std::vector<std::size_t> counts{3, 4, 2};
    synth::write_component_folder(dir.path(), synth::target_classes(), counts, 5);
    const auto ds = load_image_folder(dir.path());
    CHECK(ds.class_names == synth::target_classes());
    CHECK(ds.class_counts() == counts);
}
