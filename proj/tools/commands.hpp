#pragma once

#include "run_config.hpp"

#include "json.hpp"

#include <string>

namespace lgdist::cli {

/// A fully resolved subcommand call: the same record is stored in the
/// manifest and replayed by `rerun`.
struct Invocation {
    std::string command;
    nlohmann::json arguments = nlohmann::json::object();
    RunConfig config;
    bool verbose = false;
};

/// Runs one subcommand and returns a one-line JSON summary.
nlohmann::json execute(const Invocation& inv);

/// Re-executes the invocation recorded in a manifest into `out`; with
/// `verify` every recorded output digest must match.
nlohmann::json rerun(const std::filesystem::path& manifest, const std::filesystem::path& out, bool verify);

} // namespace lgdist::cli
