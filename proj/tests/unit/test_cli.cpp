#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "commands.hpp"
#include "helpers.hpp"
#include "lesioncad/io.hpp"

using namespace lesioncad;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path write_conf(const fs::path& dir, const std::string& name, const std::string& text) {
    const auto p = dir / name;
    io::write_text_file(p, text);
    return p;
}

const std::string kFastPipeline = "classifier.epochs = 5\nclassifier.mc_passes = 5\n";

}  // namespace

TEST_CASE("gen writes one directory per study and is reproducible") {
    const auto dir = testing::temp_dir("cli_gen");
    const auto conf = write_conf(dir, "g.conf", "gen.n_hcc = 1\ngen.n_icc = 1\ngen.n_meta = 1\ngen.nx = 24\ngen.ny = 24\ngen.nz = 6\n");
    auto r = run({"gen", "--config", conf.string(), "--out", (dir / "a").string()});
    REQUIRE(r.code == cli::kOk);
    std::size_t studies = 0;
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        if (!e.is_directory()) continue;
        ++studies;
        std::size_t files = 0;
        for ([[maybe_unused]] const auto& f : fs::directory_iterator(e.path())) ++files;
        CHECK(files == 7);
    }
    CHECK(studies == 3);
    CHECK(fs::exists(dir / "a" / "genspec.conf"));

    r = run({"gen", "--config", conf.string(), "--out", (dir / "b").string(), "--threads", "3"});
    REQUIRE(r.code == cli::kOk);
    for (const auto& e : fs::directory_iterator(dir / "a")) {
        if (!e.is_directory()) continue;
        for (const auto& f : fs::directory_iterator(e.path()))
            CHECK(io::read_text_file(f.path()) == io::read_text_file(dir / "b" / e.path().filename() / f.path().filename()));
    }
}

TEST_CASE("validation failures exit with code 2") {
    const auto dir = testing::temp_dir("cli_errors");
    const auto bad = write_conf(dir, "bad.conf", "gen.noise_std = -0.5\n");
    auto r = run({"gen", "--config", bad.string(), "--out", (dir / "x").string()});
    CHECK(r.code == cli::kValidationFailure);
    CHECK(r.err.find("noise_std") != std::string::npos);

    r = run({"gen"});
    CHECK(r.code == cli::kValidationFailure);
    r = run({"frobnicate"});
    CHECK(r.code == cli::kValidationFailure);
    r = run({"gen", "--out", (dir / "y").string(), "--preset", "extreme"});
    CHECK(r.code == cli::kValidationFailure);

    r = run({"report", "--out", testing::temp_dir("cli_empty").string()});
    CHECK(r.code == cli::kRuntimeFailure);
    CHECK(r.err.find("metrics.json") != std::string::npos);

    r = run({"pipeline", "--data", (dir / "missing").string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kValidationFailure);

    // Three ICC studies cannot fill five folds.
    const auto small = write_conf(dir, "small.conf",
                                  "gen.n_hcc = 5\ngen.n_icc = 3\ngen.n_meta = 5\ngen.nx = 24\ngen.ny = 24\ngen.nz = 6\n");
    REQUIRE(run({"gen", "--config", small.string(), "--out", (dir / "small").string()}).code == cli::kOk);
    r = run({"pipeline", "--data", (dir / "small").string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kValidationFailure);
    CHECK(r.err.find("ICC") != std::string::npos);

    const auto bad_pipe = write_conf(dir, "p.conf", "classifier.mc_passes = 0\n");
    r = run({"pipeline", "--config", bad_pipe.string(), "--data", (dir / "small").string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kValidationFailure);
    CHECK(r.err.find("mc_passes") != std::string::npos);

    const auto readers = write_conf(dir, "r.csv", "study_id,reader_id,label,confidence\nstudy_0000,r1,HCC,6\n");
    r = run({"readers", "--data", (dir / "small").string(), "--readers", readers.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kValidationFailure);
    const auto ghost = write_conf(dir, "g.csv", "study_id,reader_id,label,confidence\nghost_7,r1,HCC,3\n");
    r = run({"readers", "--data", (dir / "small").string(), "--readers", ghost.string(), "--out", (dir / "o").string()});
    CHECK(r.code == cli::kValidationFailure);
    CHECK(r.err.find("ghost_7") != std::string::npos);
}

TEST_CASE("full command chain") {
    const auto dir = testing::temp_dir("cli_chain");
    const auto gconf = write_conf(dir, "g.conf",
                                  "gen.n_hcc = 5\ngen.n_icc = 5\ngen.n_meta = 5\ngen.nx = 40\ngen.ny = 40\ngen.nz = 8\n");
    const auto pconf = write_conf(dir, "p.conf", kFastPipeline);
    const auto data = (dir / "data").string();
    REQUIRE(run({"gen", "--config", gconf.string(), "--out", data, "--readers", "0.1,0.3"}).code == cli::kOk);
    CHECK(fs::exists(dir / "data" / "readers.csv"));

    const auto work = dir / "work";
    REQUIRE(run({"detect", "--data", data, "--out", work.string()}).code == cli::kOk);
    REQUIRE(fs::exists(work / "detections.csv"));
    REQUIRE(run({"fuse", "--data", data, "--detections", (work / "detections.csv").string(), "--out", work.string()})
                .code == cli::kOk);
    REQUIRE(fs::exists(work / "keyrois.csv"));
    REQUIRE(run({"classify", "--config", pconf.string(), "--data", data, "--keyrois", (work / "keyrois.csv").string(),
                 "--save-model", (work / "model.txt").string(), "--out", work.string()})
                .code == cli::kOk);
    CHECK(fs::exists(work / "predictions.csv"));
    CHECK(fs::exists(work / "model.txt"));
    REQUIRE(run({"classify", "--config", pconf.string(), "--data", data, "--keyrois", (work / "keyrois.csv").string(), "--model",
                 (work / "model.txt").string(), "--out", (dir / "again").string()})
                .code == cli::kOk);
    CHECK(io::read_text_file(work / "predictions.csv") == io::read_text_file(dir / "again" / "predictions.csv"));

    const auto out = (dir / "out").string();
    auto r = run({"pipeline", "--config", pconf.string(), "--data", data, "--out", out});
    REQUIRE(r.code == cli::kOk);
    const auto m = nlohmann::json::parse(io::read_text_file(dir / "out" / "metrics.json"));
    CHECK(m["folds"].size() == 5);
    CHECK(m["n_studies"] == 15);

    REQUIRE(run({"pipeline", "--config", pconf.string(), "--data", data, "--out", (dir / "replay").string(),
                 "--detections", (work / "detections.csv").string()})
                .code == cli::kOk);
    const auto mr = nlohmann::json::parse(io::read_text_file(dir / "replay" / "metrics.json"));
    CHECK(mr["summary"] == m["summary"]);

    r = run({"readers", "--data", data, "--readers", (dir / "data" / "readers.csv").string(), "--out", out});
    REQUIRE(r.code == cli::kOk);
    CHECK(fs::exists(dir / "out" / "readers.json"));
    CHECK(fs::exists(dir / "out" / "overlay.csv"));

    r = run({"report", "--out", out});
    REQUIRE(r.code == cli::kOk);
    CHECK(r.out.find("HCC") != std::string::npos);
    CHECK(r.out.find("reader_1") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "report.txt"));
}
