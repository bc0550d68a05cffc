#include "run_config.hpp"

#include "lgdist/dataset.hpp"
#include "lgdist/digest.hpp"
#include "lgdist/error.hpp"

namespace lgdist::cli {

using nlohmann::json;

namespace {

json preprocess_to_json(const PreprocessOptions& p) {
    return {{"hsag_count", p.hsag_count}, {"total_genes", p.total_count}, {"log1p", p.log1p}};
}

PreprocessOptions preprocess_from_json(const json& j, PreprocessOptions p) {
    for (const auto& [key, value] : j.items()) {
        if (key == "hsag_count") p.hsag_count = value.get<std::size_t>();
        else if (key == "total_genes") p.total_count = value.get<std::size_t>();
        else if (key == "log1p") p.log1p = value.get<bool>();
        else fail(ErrorKind::InvalidArgument, "unknown preprocess config key '" + key + "'");
    }
    return p;
}

json evaluation_to_json(const RunConfig& c) {
    return {{"fraction", c.evaluation.fraction},
            {"seeds", c.evaluation.seeds},
            {"scope", to_string(c.evaluation.scope)},
            {"sweep_fractions", c.sweep_fractions},
            {"slides", c.slides}};
}

void evaluation_from_json(const json& j, RunConfig& c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "fraction") c.evaluation.fraction = value.get<double>();
        else if (key == "seeds") c.evaluation.seeds = value.get<std::vector<std::uint64_t>>();
        else if (key == "scope") c.evaluation.scope = parse_gene_scope(value.get<std::string>());
        else if (key == "sweep_fractions") c.sweep_fractions = value.get<std::vector<double>>();
        else if (key == "slides") c.slides = value.get<std::string>();
        else fail(ErrorKind::InvalidArgument, "unknown evaluation config key '" + key + "'");
    }
}

} // namespace

json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"synth", lgdist::to_json(c.synth)},
            {"preprocess", preprocess_to_json(c.preprocess)},
            {"autoencoder", lgdist::to_json(c.autoencoder)},
            {"diffusion", lgdist::to_json(c.diffusion)},
            {"pipeline", {{"context_genes", c.context_genes}, {"latent", c.latent}}},
            {"evaluation", evaluation_to_json(c)}};
}

RunConfig run_config_from_json(const json& j) {
    require(j.is_object(), ErrorKind::Format, "run config must be a JSON object");
    RunConfig c;
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "synth") c.synth = synth_config_from_json(value, c.synth);
            else if (key == "preprocess") c.preprocess = preprocess_from_json(value, c.preprocess);
            else if (key == "autoencoder") c.autoencoder = ae_config_from_json(value, c.autoencoder);
            else if (key == "diffusion") c.diffusion = dit_config_from_json(value, c.diffusion);
            else if (key == "pipeline") {
                for (const auto& [k, v] : value.items()) {
                    if (k == "context_genes") c.context_genes = v.get<bool>();
                    else if (k == "latent") c.latent = v.get<bool>();
                    else fail(ErrorKind::InvalidArgument, "unknown pipeline config key '" + k + "'");
                }
            } else if (key == "evaluation") evaluation_from_json(value, c);
            else fail(ErrorKind::InvalidArgument, "unknown config section '" + key + "'");
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("config value has the wrong type: ") + e.what());
    }
    return c;
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::InvalidArgument,
            "override must look like section.key=value, got '" + assignment + "'");
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    json* node = &config;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        require(!key.empty(), ErrorKind::InvalidArgument, "empty key in override '" + assignment + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) {
            (*node)[key] = json::object();
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

RunConfig load_run_config(const std::string& file, const std::vector<std::string>& overrides) {
    json j = json::object();
    if (!file.empty()) {
        j = json::parse(read_text(file), nullptr, false);
        require(!j.is_discarded(), ErrorKind::Format, "config file is not valid JSON: " + file);
    }
    for (const auto& o : overrides) {
        apply_override(j, o);
    }
    return run_config_from_json(j);
}

json Manifest::to_json() const {
    return {{"tool", "lgdist"},
            {"version", kToolVersion},
            {"format_version", 1},
            {"command", command},
            {"arguments", arguments},
            {"config", config},
            {"config_digest", sha256_hex(config.dump())},
            {"inputs", inputs},
            {"outputs", outputs},
            {"extra", extra}};
}

Manifest Manifest::from_json(const json& j) {
    Manifest m;
    try {
        m.command = j.at("command").get<std::string>();
        m.arguments = j.at("arguments");
        m.config = j.at("config");
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        m.extra = j.value("extra", json::object());
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("malformed manifest: ") + e.what());
    }
    return m;
}

void write_manifest(const std::filesystem::path& out, Manifest manifest, const std::vector<std::string>& files) {
    for (const auto& f : files) {
        manifest.outputs[f] = sha256_file(out / f);
    }
    write_text(out / "manifest.json", manifest.to_json().dump(2) + "\n");
}

Manifest read_manifest(const std::filesystem::path& file) {
    const json j = json::parse(read_text(file), nullptr, false);
    require(!j.is_discarded(), ErrorKind::Format, "manifest is not valid JSON: " + file.string());
    return Manifest::from_json(j);
}

std::string input_digest(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorKind::Io, "missing input: " + path.string());
    if (std::filesystem::is_directory(path)) {
        return sha256_directory(path, {"manifest.json"});
    }
    return sha256_file(path);
}

} // namespace lgdist::cli
