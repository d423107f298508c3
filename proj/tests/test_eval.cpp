#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "oracles.hpp"
#include "synthetic.hpp"
#include "volta/checkpoint.hpp"
#include "volta/eval.hpp"

using namespace volta;

namespace {

ConfusionMatrix matrix(const std::vector<std::vector<std::size_t>>& cells)
{
    ConfusionMatrix cm(cells.size());
    for (std::size_t r = 0; r < cells.size(); ++r)
        for (std::size_t c = 0; c < cells.size(); ++c) cm.at(r, c) = cells[r][c];
    return cm;
}

void check_against_tally(const std::vector<std::vector<std::size_t>>& cells)
{
    std::vector<std::size_t> truth, pred;
    oracle::expand_confusion(cells, truth, pred);
    const auto want = oracle::tally_metrics(truth, pred, cells.size());
    const auto got = compute_metrics(matrix(cells));
    CHECK(std::abs(got.accuracy - want.accuracy) < 1e-12);
    CHECK(std::abs(got.precision - want.precision) < 1e-12);
    CHECK(std::abs(got.recall - want.recall) < 1e-12);
    CHECK(std::abs(got.f1 - want.f1) < 1e-12);
    for (std::size_t c = 0; c < cells.size(); ++c) CHECK(std::abs(got.per_class[c].f1 - want.class_f1[c]) < 1e-12);
}

}  // namespace

TEST_CASE("confusion matrix from predictions")
{
    const std::vector<std::size_t> truth{0, 1, 2, 2, 1}, pred{0, 2, 2, 2, 1};
    const auto cm = ConfusionMatrix::from_predictions(truth, pred, 3);
    CHECK(cm.total() == 5);
    CHECK(cm.at(1, 2) == 1);
    CHECK(cm.at(2, 2) == 2);
    const std::vector<std::size_t> short_pred{0};
    CHECK_THROWS_AS(ConfusionMatrix::from_predictions(truth, short_pred, 3), ShapeError);
    const std::vector<std::size_t> out_of_range{0, 1, 2, 3, 1};
    CHECK_THROWS_AS(ConfusionMatrix::from_predictions(truth, out_of_range, 3), LabelError);
    ConfusionMatrix sum = cm;
    sum += cm;
    CHECK(sum.total() == 10);
    CHECK_THROWS_AS(sum += ConfusionMatrix(2), ShapeError);
}

TEST_CASE("perfect predictions")
{
    const auto m = compute_metrics(matrix({{5, 0, 0}, {0, 3, 0}, {0, 0, 7}}));
    CHECK(m.accuracy == 1.0);
    CHECK(m.precision == 1.0);
    CHECK(m.recall == 1.0);
    CHECK(m.f1 == 1.0);
}

TEST_CASE("worked three-class example")
{
    const auto m = compute_metrics(matrix({{8, 2, 0}, {1, 9, 0}, {0, 0, 10}}));
    CHECK(m.accuracy == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(m.per_class[0].precision == doctest::Approx(8.0 / 9.0));
    CHECK(m.per_class[0].recall == doctest::Approx(0.8));
    CHECK(m.per_class[0].f1 == doctest::Approx(0.8421).epsilon(1e-4));
    CHECK(m.per_class[1].f1 == doctest::Approx(0.8571).epsilon(1e-4));
    CHECK(m.per_class[2].f1 == 1.0);
    CHECK(m.f1 == doctest::Approx(0.8997).epsilon(1e-4));
    check_against_tally({{8, 2, 0}, {1, 9, 0}, {0, 0, 10}});
}

TEST_CASE("never-predicted and absent classes count as zero")
{
    const auto m = compute_metrics(matrix({{4, 0, 0}, {2, 0, 0}, {0, 0, 0}}));
    CHECK(m.per_class[1].precision == 0.0);
    CHECK(m.per_class[1].recall == 0.0);
    CHECK(m.per_class[1].f1 == 0.0);
    CHECK(m.per_class[2].f1 == 0.0);
    check_against_tally({{4, 0, 0}, {2, 0, 0}, {0, 0, 0}});
    CHECK_THROWS_AS(compute_metrics(ConfusionMatrix(3)), DataError);
}

TEST_CASE("single prevalent class")
{
    const auto m = compute_metrics(matrix({{9, 0}, {1, 0}}));
    CHECK(m.accuracy == doctest::Approx(0.9));
    CHECK(m.per_class[0].f1 == doctest::Approx(2 * 0.9 / 1.9));
    CHECK(m.f1 == doctest::Approx(0.9 / 1.9));
}

TEST_CASE("macro metrics are invariant under relabeling")
{
    const std::vector<std::vector<std::size_t>> cells{{8, 2, 0}, {1, 9, 3}, {4, 0, 10}};
    const std::vector<std::size_t> perm{2, 0, 1};
    std::vector<std::vector<std::size_t>> moved(3, std::vector<std::size_t>(3));
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) moved[perm[r]][perm[c]] = cells[r][c];
    const auto a = compute_metrics(matrix(cells)), b = compute_metrics(matrix(moved));
    CHECK(a.accuracy == doctest::Approx(b.accuracy).epsilon(1e-12));
    CHECK(a.f1 == doctest::Approx(b.f1).epsilon(1e-12));
    CHECK(a.precision == doctest::Approx(b.precision).epsilon(1e-12));
}

TEST_CASE("random confusion matrices agree with per-sample counting")
{
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t k = 2 + rng.below(6);
        std::vector<std::vector<std::size_t>> cells(k, std::vector<std::size_t>(k));
        std::size_t total = 0;
        for (auto& row : cells)
            for (auto& v : row) total += (v = rng.uniform() < 0.3 ? 0 : rng.below(12));
        if (total == 0) cells[0][0] = 1;
        check_against_tally(cells);
    }
}

TEST_CASE("prediction argmax")
{
    ModelGraph m = build_voltavision(3, 0);
    const auto set = synth::separable_set(2, 3, 0);
    const auto pred = predict_classes(m, set.images);
    const auto logits = m.forward(set.images, Pass::infer);
    CHECK(pred == argmax_rows(logits));
    CHECK(pred.size() == 6);
}

TEST_CASE("model size formatting")
{
    CHECK(format_model_size(127000) == "127kb");
    CHECK(format_model_size(126600) == "127kb");
    CHECK(format_model_size(1080000) == "1.08Mb");
    CHECK(format_model_size(2914932) == "2.91Mb");
}

TEST_CASE("table formatting")
{
    TableRow row{"none (scratch)", "VoltaVision", compute_metrics(matrix({{8, 2, 0}, {1, 9, 0}, {0, 0, 10}})), 12.34,
                 120944};
    const std::vector<TableRow> rows{row};
    const std::string table = format_table(rows);
    CHECK(table.find("Accuracy") != std::string::npos);
    CHECK(table.find("90.00") != std::string::npos);
    CHECK(table.find("89.97") != std::string::npos);
    CHECK(table.find("12.3") != std::string::npos);
    CHECK(table.find("121kb") != std::string::npos);
}

TEST_CASE("cross-validation on a small separable set")
{
    const auto set = synth::separable_set(6, 3, 8);
    const auto plan = kfold_split(set.labels, 3, 3, 1, set.class_names);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 6;
    cfg.seed = 1;
    std::vector<std::size_t> seen_folds;
    const auto report = cross_validate(nullptr, set, plan, cfg, "tiny", [&](const FoldResult& f) { seen_folds.push_back(f.fold); });
    CHECK(seen_folds == std::vector<std::size_t>{0, 1, 2});
    REQUIRE(report.folds.size() == 3);
    std::size_t total = 0;
    double acc = 0;
    for (const auto& f : report.folds) {
        total += f.confusion.total();
        CHECK(f.confusion.total() == f.validation_count);
        CHECK(f.train_count + f.validation_count == 18);
        acc += f.metrics.accuracy;
    }
    CHECK(total == 18);
    CHECK(report.mean.accuracy == doctest::Approx(acc / 3));

    const auto again = cross_validate(nullptr, set, plan, cfg, "tiny");
    CHECK(format_report(report) == format_report(again));
    const std::string text = format_report(report);
    CHECK(text.find("[fold 2]") != std::string::npos);
    CHECK(text.find("pretrained = none (scratch)") != std::string::npos);
    CHECK(text.find("wall_seconds") == std::string::npos);
    CHECK(format_report(report, true).find("wall_seconds") != std::string::npos);
}

TEST_CASE("cross-validation from a pretrained model")
{
    const auto set = synth::separable_set(4, 3, 9);
    const auto plan = kfold_split(set.labels, 3, 2, 0);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    ModelGraph source = build_voltavision(5, 3);
    source.provenance = "synthetic source";
    const auto before = backbone_checksum(source);
    const auto report = cross_validate(&source, set, plan, cfg);
    CHECK(report.config.pretrained == "synthetic source");
    CHECK(backbone_checksum(source) == before);

    ArchitectureConfig other;
    other.conv_filters = {8, 20, 32};
    other.num_classes = 5;
    const ModelGraph odd = build_model(other, 0);
    try {
        (void)cross_validate(&odd, set, plan, cfg);
        FAIL("expected CheckpointError");
    } catch (const CheckpointError& e) {
        CHECK(e.kind() == CheckpointError::Kind::architecture_mismatch);
    }

    PreparedSet one_class = set;
    one_class.class_names.resize(1);
    CHECK_THROWS_AS(cross_validate(nullptr, one_class, plan, cfg), DataError);
}
