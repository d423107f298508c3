#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"
#include "volta/checkpoint.hpp"
#include "volta/file_io.hpp"
#include "volta/run_manifest.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome cli(const std::vector<std::string>& args)
{
    std::ostringstream out, err;
    const int code = volta::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string last_line(const std::string& text)
{
    auto end = text.find_last_not_of('\n');
    auto start = text.rfind('\n', end);
    return text.substr(start == std::string::npos ? 0 : start + 1, end - (start == std::string::npos ? 0 : start + 1) + 1);
}

int exe_status(const std::string& args)
{
    const int status = std::system((std::string(VOLTAVISION_EXE) + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

struct Workspace {
    test::TempDir dir;
    fs::path target, source;

    Workspace()
    {
        target = dir.path() / "target";
        source = dir.path() / "source";
        synth::write_component_folder(target, synth::target_classes(), {6, 6, 6}, 1, 24, 40);
        synth::write_component_folder(source, synth::source_classes(), {5, 5, 5, 5, 5}, 2, 24, 40);
    }
    std::string path(const std::string& name) const { return (dir.path() / name).string(); }
};

}  // namespace

TEST_CASE("exit codes of the executable")
{
    CHECK(exe_status("--version") == 0);
    CHECK(exe_status("--help") == 0);
    CHECK(exe_status("--no-such-flag") == 1);
    CHECK(exe_status("inspect /nonexistent/model.vvc") == 2);
}

TEST_CASE("argument validation")
{
    CHECK(cli({}).code == volta::cli::exit_config);
    CHECK(cli({"crossval", "--scratch", "--data", "/tmp", "--folds", "1"}).code == volta::cli::exit_config);
    const auto both = cli({"finetune", "--data", "/tmp", "--out", "/tmp/x"});
    CHECK(both.code == volta::cli::exit_config);
    CHECK(both.err.find("exactly one") != std::string::npos);
    CHECK(cli({"crossval", "--scratch", "--data", "/nonexistent", "--epochs", "0"}).code == volta::cli::exit_config);
}

TEST_CASE("pretrain, finetune, predict, inspect and replay")
{
    Workspace ws;
    const std::string source_ck = ws.path("source.vvc");

    SUBCASE("class-count mismatch is a config error")
    {
        const auto r = cli({"pretrain", "--data", ws.source.string(), "--classes", "4", "--out", source_ck});
        CHECK(r.code == volta::cli::exit_config);
        CHECK(r.err.find("class-count mismatch") != std::string::npos);
    }

    const auto pre = cli({"pretrain", "--data", ws.source.string(), "--class-filter",
                          "electric_relay,heat_sink,solenoid", "--classes", "3", "--name", "tiny source", "--epochs", "2",
                          "--batch-size", "5", "--out", source_ck});
    REQUIRE_MESSAGE(pre.code == 0, pre.err);
    const auto source = volta::load_checkpoint(source_ck);
    CHECK(source.config().num_classes == 3);
    CHECK(source.class_names == std::vector<std::string>{"electric_relay", "heat_sink", "solenoid"});
    CHECK(source.provenance == "tiny source; 3 classes; 2 epochs; seed 0");
    CHECK(fs::exists(volta::manifest_path_for(source_ck)));

    const std::string tuned = ws.path("tuned.vvc");
    const auto ft = cli({"finetune", "--from", source_ck, "--data", ws.target.string(), "--epochs", "2", "--batch-size",
                         "6", "--out", tuned});
    REQUIRE_MESSAGE(ft.code == 0, ft.err);
    CHECK(ft.out.find("(unchanged)") != std::string::npos);
    const auto tuned_model = volta::load_checkpoint(tuned);
    CHECK(volta::backbone_checksum(tuned_model) == volta::backbone_checksum(source));
    CHECK(tuned_model.class_names == synth::target_classes());

    const std::string scratch = ws.path("scratch.vvc");
    REQUIRE(cli({"finetune", "--scratch", "--data", ws.target.string(), "--epochs", "1", "--batch-size", "6", "--out",
                 scratch}).code == 0);
    CHECK(volta::load_checkpoint(scratch).provenance.empty());

    const std::string image = (ws.target / "transistor" / "0000.png").string();
    const auto pred = cli({"predict", "--model", tuned, "--image", image, "--sorted"});
    REQUIRE_MESSAGE(pred.code == 0, pred.err);
    const auto line = nlohmann::json::parse(last_line(pred.out));
    double sum = 0;
    for (const auto& p : line["probabilities"]) sum += p["p"].get<double>();
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(line["probabilities"][0]["class"] == line["class"]);
    for (std::size_t i = 1; i < line["probabilities"].size(); ++i)
        CHECK(line["probabilities"][i - 1]["p"].get<double>() >= line["probabilities"][i]["p"].get<double>());

    const std::string broken = ws.path("broken.png");
    volta::write_text_file(broken, "definitely not a png");
    const auto bad = cli({"predict", "--model", tuned, "--image", broken});
    CHECK(bad.code == volta::cli::exit_io);
    CHECK(bad.err.find("decode error") != std::string::npos);

    const auto info = cli({"inspect", tuned});
    REQUIRE(info.code == 0);
    CHECK(info.out.find("tiny source") != std::string::npos);
    CHECK(info.out.find("21603") != std::string::npos);

    const auto replay = cli({"replay", volta::manifest_path_for(tuned).string()});
    CHECK_MESSAGE(replay.code == 0, replay.err);
    CHECK(replay.out.find("reproduced 1 output hash") != std::string::npos);

    synth::write_component_folder(ws.dir.path() / "other", {"transistor"}, {1}, 99, 24, 40);
    fs::copy_file(ws.dir.path() / "other" / "transistor" / "0000.png", ws.target / "transistor" / "0000.png",
                  fs::copy_options::overwrite_existing);
    const auto changed = cli({"replay", volta::manifest_path_for(tuned).string()});
    CHECK(changed.code == volta::cli::exit_config);
}

TEST_CASE("crossval report and fold plan")
{
    Workspace ws;
    const std::string report = ws.path("report.txt"), folds = ws.path("folds.txt");
    const auto r = cli({"crossval", "--scratch", "--data", ws.target.string(), "--folds", "3", "--epochs", "2",
                        "--batch-size", "6", "--report", report, "--folds-out", folds});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto bytes = volta::read_file_bytes(report);
    const std::string text(bytes.begin(), bytes.end());
    CHECK(text.find("[fold 0]") != std::string::npos);
    CHECK(text.find("[fold 2]") != std::string::npos);
    CHECK(text.find("[mean]") != std::string::npos);
    const auto acc = text.find("accuracy = ");
    REQUIRE(acc != std::string::npos);
    const std::string value = text.substr(acc + 11, text.find('\n', acc) - acc - 11);
    CHECK(value.size() - value.find('.') == 3);
    CHECK(r.out.find("Accuracy") != std::string::npos);
    CHECK(fs::exists(folds));
    CHECK(fs::exists(volta::manifest_path_for(report)));

    const auto replay = cli({"replay", volta::manifest_path_for(report).string()});
    CHECK_MESSAGE(replay.code == 0, replay.err);
}

TEST_CASE("selfcheck passes")
{
    const auto r = cli({"selfcheck"});
    CHECK_MESSAGE(r.code == 0, r.out);
    CHECK(r.out.find("FAIL") == std::string::npos);
}
