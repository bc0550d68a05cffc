#pragma once

#include "lgdist/matrix.hpp"
#include "lgdist/nn/layers.hpp"
#include "lgdist/nn/optim.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace lgdist::nn {

inline constexpr int kCheckpointFormatVersion = 1;

/// File layout: 8-byte magic, little-endian u64 header length, JSON header
/// (format_version, kind, config, extras, tensor manifest with shapes and
/// byte offsets), then the tensors as little-endian 32-bit floats.
struct Checkpoint {
    std::string kind;
    nlohmann::json config;
    nlohmann::json extras = nlohmann::json::object();
    std::vector<std::pair<std::string, Matrix>> tensors;

    const Matrix& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

/// Appends parameters (and optionally optimizer moments) as tensors.
void export_parameters(const ParameterSet& params, Checkpoint& ckpt);
void export_optimizer(const ParameterSet& params, const AdamW& opt, Checkpoint& ckpt);
/// Overwrites parameter values from the checkpoint; shapes must match.
void import_parameters(const Checkpoint& ckpt, ParameterSet& params);
void import_optimizer(const Checkpoint& ckpt, const ParameterSet& params, AdamW& opt);

} // namespace lgdist::nn
