#include "commands.hpp"

#include "lgdist/error.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>

namespace {

namespace fs = std::filesystem;
using lgdist::cli::Invocation;
using nlohmann::json;

/// Options shared by every pipeline subcommand.
struct CommonOptions {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool verbose = false;
};

std::string absolute(const std::string& path) {
    if (path.empty() || path == "dropout") {
        return path;
    }
    return fs::absolute(path).lexically_normal().string();
}

void add_common(CLI::App* cmd, CommonOptions& o, bool out_required = true) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--set", o.overrides, "Override a config field, e.g. --set autoencoder.epochs=5")->take_all();
    cmd->add_option("--seed", o.seed, "Run seed (overrides config seed)");
    auto* out = cmd->add_option("--out", o.out, "Output directory");
    if (out_required) {
        out->required();
    }
    cmd->add_flag("--verbose", o.verbose, "Per-epoch progress on stderr");
}

void print_error(std::string_view kind, const std::string& message) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent diffusion completion of spatial transcriptomics dropouts", "lgdist"};
    app.require_subcommand(1);
    app.set_version_flag("--version", lgdist::cli::kToolVersion);

    CommonOptions common;
    std::map<std::string, std::string> paths;
    std::vector<std::string> variants;
    std::vector<std::string> inputs;
    bool keep_cgs = false;
    bool verify = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with ground truth");
    add_common(synth, common);

    auto* preprocess = app.add_subcommand("preprocess", "Rank genes, select the panel and median-precomplete");
    add_common(preprocess, common, false);
    preprocess->add_option("--dataset", paths["dataset"], "Dataset directory")->required();

    auto* train_ae = app.add_subcommand("train-ae", "Train the neighborhood autoencoder");
    add_common(train_ae, common);
    train_ae->add_option("--dataset", paths["dataset"], "Preprocessed dataset directory")->required();

    auto* train_dit = app.add_subcommand("train-diffusion", "Train the latent diffusion transformer");
    add_common(train_dit, common);
    train_dit->add_option("--dataset", paths["dataset"], "Preprocessed dataset directory")->required();
    train_dit->add_option("--ae-ckpt", paths["ae_ckpt"], "Autoencoder checkpoint");

    auto add_model = [&](CLI::App* cmd) {
        add_common(cmd, common);
        cmd->add_option("--dataset", paths["dataset"], "Preprocessed dataset directory")->required();
        cmd->add_option("--ae-ckpt", paths["ae_ckpt"], "Autoencoder checkpoint");
        cmd->add_option("--dit-ckpt", paths["dit_ckpt"], "Diffusion checkpoint")->required();
    };
    auto* complete = app.add_subcommand("complete", "Fill dropout entries of the configured slides");
    add_model(complete);
    complete->add_option("--targets", paths["targets"], "CSV of slide,spot,gene or 'dropout'")->required();
    complete->add_flag("--keep-cgs", keep_cgs, "Also write context gene columns");

    auto* evaluate = app.add_subcommand("evaluate", "Score completion on simulated dropout against the median baseline");
    add_model(evaluate);
    auto* robustness = app.add_subcommand("robustness", "Sweep the simulated dropout fraction");
    add_model(robustness);

    auto* ablation = app.add_subcommand("ablation", "Compare trained variants on the same simulated dropout");
    add_common(ablation, common);
    ablation->add_option("--dataset", paths["dataset"], "Preprocessed dataset directory")->required();
    ablation->add_option("--variant", variants, "name=dit.ckpt[,ae.ckpt]")->required();

    auto* plot = app.add_subcommand("plot", "Render an SVG figure");
    add_common(plot, common);
    plot->add_option("--kind", paths["kind"], "expression-map, scatter or sweep-line")
        ->required()
        ->check(CLI::IsMember({"expression-map", "scatter", "sweep-line"}));
    plot->add_option("--input", inputs, "predictions.csv (scatter) or sweep CSV files (sweep-line)");
    plot->add_option("--dataset", paths["dataset"], "Dataset directory (expression-map)");
    plot->add_option("--completion", paths["completion"], "Output directory of `complete` (expression-map)");
    plot->add_option("--slide", paths["slide"], "Slide id (expression-map)");
    plot->add_option("--gene", paths["gene"], "Gene name (expression-map)");

    std::string manifest;
    auto* rerun = app.add_subcommand("rerun", "Repeat the run recorded in a manifest");
    rerun->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
    rerun->add_option("--out", common.out, "Output directory")->required();
    rerun->add_flag("--verify", verify, "Fail unless every output is byte-identical");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        CLI::App* cmd = app.get_subcommands().front();
        json summary;
        if (cmd == rerun) {
            summary = lgdist::cli::rerun(absolute(manifest), absolute(common.out), verify);
        } else {
            Invocation inv;
            inv.command = cmd->get_name();
            inv.verbose = common.verbose;
            inv.config = lgdist::cli::load_run_config(common.config, common.overrides);
            if (common.seed) {
                inv.config.seed = *common.seed;
                inv.config.synth.seed = *common.seed;
            }
            for (const auto& [key, value] : paths) {
                if (!value.empty()) {
                    inv.arguments[key] = key == "kind" || key == "slide" || key == "gene" ? value : absolute(value);
                }
            }
            if (cmd == preprocess && common.out.empty()) {
                common.out = paths["dataset"];
            }
            inv.arguments["out"] = absolute(common.out);
            if (cmd == complete) {
                inv.arguments["keep_cgs"] = keep_cgs;
            }
            if (cmd == plot) {
                json list = json::array();
                for (const auto& i : inputs) {
                    list.push_back(absolute(i));
                }
                inv.arguments["inputs"] = list;
                if (!inputs.empty()) {
                    inv.arguments["input"] = list.front();
                }
            }
            if (cmd == ablation) {
                json list = json::array();
                for (const auto& v : variants) {
                    const auto eq = v.find('=');
                    lgdist::require(eq != std::string::npos && eq > 0, lgdist::ErrorKind::InvalidArgument,
                                    "--variant must look like name=dit.ckpt[,ae.ckpt], got '" + v + "'");
                    const std::string files = v.substr(eq + 1);
                    const auto comma = files.find(',');
                    json item = {{"name", v.substr(0, eq)}, {"dit_ckpt", absolute(files.substr(0, comma))}};
                    if (comma != std::string::npos) {
                        item["ae_ckpt"] = absolute(files.substr(comma + 1));
                    }
                    list.push_back(item);
                }
                inv.arguments["variants"] = list;
            }
            summary = lgdist::cli::execute(inv);
        }
        std::cout << summary.dump() << '\n';
        return 0;
    } catch (const lgdist::Error& e) {
        print_error(lgdist::to_string(e.kind()), e.what());
    } catch (const nlohmann::json::exception& e) {
        print_error("Format", e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        print_error("Io", e.what());
    } catch (const std::exception& e) {
        print_error("Internal", e.what());
    }
    return 1;
}
