#include "doctest.h"

#include "fixtures.hpp"
#include "lgdist/dataset.hpp"
#include "lgdist/error.hpp"
#include "run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace lgdist;
using namespace lgdist::cli;
using nlohmann::json;

namespace {

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args, const std::filesystem::path& scratch) {
    const auto out = scratch / "stdout.txt";
    const auto err = scratch / "stderr.txt";
    const std::string cmd = std::string(LGDIST_BIN) + " " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text(out);
    r.err = read_text(err);
    return r;
}

std::size_t line_count(const std::filesystem::path& file) {
    std::ifstream in(file);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        n += line.empty() ? 0 : 1;
    }
    return n;
}

const std::string kSmallSynth =
    "--set synth.rows=8 synth.cols=8 synth.genes=24 synth.hsag_fraction=0.25 synth.length_scale=1.5 "
    "synth.train_slides=2 synth.val_slides=1 synth.test_slides=1 preprocess.hsag_count=6 preprocess.total_genes=16";

} // namespace

TEST_CASE("unknown subcommand exits 2 with usage") {
    const auto dir = testing::scratch_dir("cli_usage");
    const auto r = run("frobnicate", dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("Usage:") != std::string::npos);
    CHECK(r.err.find("train-diffusion") != std::string::npos);
}

TEST_CASE("unknown flag and missing required flag exit 2") {
    const auto dir = testing::scratch_dir("cli_flags");
    CHECK(run("synth --out x --no-such-flag", dir).code == 2);
    CHECK(run("train-ae --out x", dir).code == 2);
}

TEST_CASE("runtime failures print a machine-readable error record") {
    const auto dir = testing::scratch_dir("cli_error");
    const auto r = run("train-ae --dataset " + (dir / "missing").string() + " --out " + (dir / "o").string(), dir);
    CHECK(r.code == 1);
    const json e = json::parse(r.err);
    CHECK(e.at("error").at("kind") == "io");
    CHECK(e.at("error").at("message").get<std::string>().find("missing") != std::string::npos);
    CHECK_FALSE(std::filesystem::exists(dir / "o"));

    const auto bad = run("synth --set synth.no_such_key=1 --out " + (dir / "s").string(), dir);
    CHECK(bad.code == 1);
    CHECK(json::parse(bad.err).at("error").at("kind") == "invalid-argument");
}

TEST_CASE("default synth then preprocess yields a 1024-gene panel") {
    const auto dir = testing::scratch_dir("cli_default");
    const auto d = dir / "d";
    REQUIRE(run("synth --out " + d.string(), dir).code == 0);
    REQUIRE(run("preprocess --dataset " + d.string(), dir).code == 0);
    CHECK(line_count(d / "genes.csv") == 1024 + 1);
    const Dataset ds = load_dataset(d);
    CHECK(ds.require_panel().hsag_count() == 32);
    CHECK(ds.precompleted.size() == ds.slides.size());
}

TEST_CASE("outputs are deterministic and manifests reproduce them") {
    const auto dir = testing::scratch_dir("cli_rerun");
    const auto a = dir / "a";
    const auto b = dir / "b";
    REQUIRE(run("synth " + kSmallSynth + " --seed 5 --out " + a.string(), dir).code == 0);
    REQUIRE(run("synth " + kSmallSynth + " --seed 5 --out " + b.string(), dir).code == 0);
    const auto m = read_manifest(a / "manifest.json");
    CHECK(m.outputs == read_manifest(b / "manifest.json").outputs);
    CHECK(m.config.at("synth").at("seed") == 5);
    CHECK(m.outputs.count("genes.csv") == 1);
    CHECK(read_text(a / "manifest.json").find("timestamp") == std::string::npos);

    // Preprocessing into a new directory leaves the input untouched.
    const std::string before = input_digest(a);
    const auto p = dir / "p";
    REQUIRE(run("preprocess " + kSmallSynth + " --dataset " + a.string() + " --out " + p.string(), dir).code == 0);
    CHECK(input_digest(a) == before);
    CHECK(read_manifest(p / "manifest.json").inputs.at("dataset") == before);

    const auto r = run("rerun --verify --manifest " + (p / "manifest.json").string() + " --out " + (dir / "p2").string(), dir);
    CHECK(r.code == 0);
    CHECK(input_digest(p) == input_digest(dir / "p2"));

    // A tampered output is caught.
    write_text(p / "genes.csv", "index,name\n");
    const auto tampered = dir / "tampered";
    std::filesystem::copy(p, tampered);
    auto mj = json::parse(read_text(p / "manifest.json"));
    mj["arguments"]["dataset"] = (dir / "missing").string();
    write_text(tampered / "manifest.json", mj.dump());
    CHECK(run("rerun --manifest " + (tampered / "manifest.json").string() + " --out " + (dir / "t2").string(), dir).code == 1);
}

TEST_CASE("config precedence: defaults, file, --set, then flags") {
    const auto dir = testing::scratch_dir("cli_config");
    const auto file = dir / "c.json";
    write_text(file, R"({"seed": 4, "autoencoder": {"d": 16, "epochs": 7}, "evaluation": {"seeds": [3]}})");
    const RunConfig c = load_run_config(file.string(), {"autoencoder.epochs=9", "pipeline.latent=false", "evaluation.scope=all"});
    CHECK(c.seed == 4);
    CHECK(c.autoencoder.d == 16);
    CHECK(c.autoencoder.epochs == 9);
    CHECK(c.autoencoder.encoder_layers == AEConfig{}.encoder_layers);
    CHECK_FALSE(c.latent);
    CHECK(c.evaluation.seeds == std::vector<std::uint64_t>{3});
    CHECK(c.evaluation.scope == GeneScope::All);

    const RunConfig back = run_config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));

    json j = json::object();
    apply_override(j, "diffusion.sampler=ddpm");
    CHECK(j["diffusion"]["sampler"] == "ddpm");
    CHECK_THROWS_AS(apply_override(j, "diffusion.sampler"), Error);
    CHECK_THROWS_AS(apply_override(j, "diffusion..x=1"), Error);
    CHECK_THROWS_AS(run_config_from_json(json{{"bogus", json::object()}}), Error);
    CHECK_THROWS_AS(run_config_from_json(json{{"autoencoder", {{"d", "wide"}}}}), Error);
}
