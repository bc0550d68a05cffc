#pragma once

#include "lgdist/data.hpp"
#include "lgdist/nn/checkpoint.hpp"
#include "lgdist/nn/layers.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lgdist {

struct AEConfig {
    std::size_t g = 0;
    std::size_t d = 128;
    int encoder_layers = 4;
    int encoder_heads = 1;
    double dropout = 0.1;
    double alpha = 0.7;
    double noise_prob = 0.5;
    double noise_std = 0.1;
    double lr = 1e-6;
    double weight_decay = 0.01;
    int epochs = 5000;
    std::size_t batch = 128;
    int hops = 1;
    /// Multiplier on the positional encoding added to the expression input.
    double pe_scale = 1.0;
    /// Exclude padded neighbor rows from attention keys and from the loss.
    bool mask_padding = true;
    /// "constant" or "cosine" (cosine decay after linear warmup).
    std::string lr_schedule = "constant";
    int warmup_steps = 0;

    void validate() const;
};

nlohmann::json to_json(const AEConfig& c);
AEConfig ae_config_from_json(const nlohmann::json& j, AEConfig base = {});

/// Learning rate at optimizer step `step` (0-based) of `total` steps.
double scheduled_lr(double base, const std::string& schedule, int warmup, std::uint64_t step, std::uint64_t total);

/// Transformer encoder over neighborhood tokens plus a row-wise MLP decoder.
class Autoencoder {
public:
    explicit Autoencoder(AEConfig config, std::uint64_t init_seed = 0);

    const AEConfig& config() const { return config_; }
    nn::ParameterSet& parameters() { return params_; }
    const nn::ParameterSet& parameters() const { return params_; }

    /// Expression plus scaled positional encoding of each row's coordinate.
    Matrix positional_input(const NeighborhoodBatch& batch) const;

    /// Encodes a prepared input (already including positional encoding).
    nn::Var encode_input(const nn::Var& input, const NeighborhoodBatch& batch, nn::ForwardContext& ctx) const;
    /// Eval-mode encode of a batch: (B * tokens) x d.
    Matrix encode(const NeighborhoodBatch& batch) const;
    Matrix encode(const Neighborhood& nbhd) const;

    /// Row-wise decoder d -> 4d -> g with tanh hidden activation.
    nn::Var decode(const nn::Var& latent) const;
    Matrix decode(const Matrix& latent) const;

    nn::Checkpoint to_checkpoint(const GenePanel& panel) const;
    static Autoencoder from_checkpoint(const nn::Checkpoint& ckpt);

private:
    AEConfig config_;
    nn::ParameterSet params_;
    nn::Linear embed_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm final_norm_;
    nn::Mlp decoder_;
};

struct ReconstructionLoss {
    nn::Var total;
    double l_hsag = 0.0;
    double l_cg = 0.0;
};

/// alpha * MSE(HSAG columns) + (1 - alpha) * MSE(CG columns), optionally over
/// a subset of rows. With no CG columns the CG term is dropped.
ReconstructionLoss weighted_reconstruction_loss(const Matrix& X, const nn::Var& X_hat, const GenePanel& panel, double alpha,
                                                std::span<const double> row_weights = {});

struct AEEpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double l_hsag = 0.0;
    double l_cg = 0.0;
};

struct AETrainResult {
    std::vector<AEEpochLog> log;
    int best_epoch = -1;
    double best_val = 0.0;
};

struct AETrainData {
    std::vector<const Slide*> train_slides;
    std::vector<const ExpressionMatrix*> train_values;
    std::vector<const Slide*> val_slides;
    std::vector<const ExpressionMatrix*> val_values;
};

/// Trains in place and leaves the model at its best-validation parameters
/// (last epoch when there is no validation data).
AETrainResult train_autoencoder(Autoencoder& model, const AETrainData& data, const GenePanel& panel, std::uint64_t seed,
                                const std::function<void(const AEEpochLog&)>& on_epoch = {});

/// Mean reconstruction loss of a model on a neighborhood set (eval mode).
ReconstructionLoss evaluate_reconstruction(const Autoencoder& model, const NeighborhoodSet& set, const GenePanel& panel);

std::string format_ae_log(const std::vector<AEEpochLog>& log);

} // namespace lgdist
