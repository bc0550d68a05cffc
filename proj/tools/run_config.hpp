#pragma once

#include "lgdist/autoencoder.hpp"
#include "lgdist/diffusion/dit.hpp"
#include "lgdist/evaluation.hpp"
#include "lgdist/preprocess.hpp"
#include "lgdist/synthetic.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace lgdist::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Every tunable of a run, one section per module. Precedence is defaults,
/// then the --config file, then --set overrides, then dedicated flags.
struct RunConfig {
    std::uint64_t seed = 0;
    SynthConfig synth;
    PreprocessOptions preprocess;
    AEConfig autoencoder;
    DiTConfig diffusion;
    /// Train on the full panel (false: HSAG columns only).
    bool context_genes = true;
    /// Diffuse autoencoder latents (false: raw expression rows).
    bool latent = true;
    EvaluationSpec evaluation;
    std::vector<double> sweep_fractions = default_sweep_fractions();
    /// Slides to complete: "test", "val", "train" or "all".
    std::string slides = "test";
};

nlohmann::json to_json(const RunConfig& c);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Applies "section.key=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& config, const std::string& assignment);

RunConfig load_run_config(const std::string& file, const std::vector<std::string>& overrides);

/// Reproducibility record written into every output directory.
struct Manifest {
    std::string command;
    nlohmann::json arguments = nlohmann::json::object();
    nlohmann::json config = nlohmann::json::object();
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    nlohmann::json extra = nlohmann::json::object();

    nlohmann::json to_json() const;
    static Manifest from_json(const nlohmann::json& j);
};

/// Digests every listed output file (relative to `out`) and writes
/// out/manifest.json.
void write_manifest(const std::filesystem::path& out, Manifest manifest, const std::vector<std::string>& files);
Manifest read_manifest(const std::filesystem::path& file);

/// Digest of a file or, for a directory, of its contents without manifest.json.
std::string input_digest(const std::filesystem::path& path);

} // namespace lgdist::cli
