#pragma once

#include "lgdist/diffusion/schedule.hpp"
#include "lgdist/nn/checkpoint.hpp"
#include "lgdist/nn/layers.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lgdist {

struct DiTConfig {
    int layers = 12;
    int heads = 16;
    int width = 256;
    /// Row width of the diffused vectors (the latent width d).
    std::size_t d = 128;
    int hops = 1;
    int time_dim = 256;
    /// Add a fixed sine/cosine encoding of each slot's hex offset.
    bool positional = true;
    bool mask_padding = true;
    /// Keep the center's context genes visible to the condition encoder
    /// (its HSAG columns are still blanked).
    bool center_context = false;

    int T = 1500;
    double s = 0.008;
    double clip = 1e-5;
    int sampling_steps = 50;
    /// "ddim" (deterministic) or "ddpm" (ancestral over the same sub-sequence).
    std::string sampler = "ddim";
    /// Clamp predicted x0 to [-clip_x0, clip_x0] while sampling; 0 disables.
    double clip_x0 = 0.0;
    /// Draws averaged per completed spot at inference.
    int samples = 1;

    double lr = 1e-4;
    double weight_decay = 0.01;
    int epochs = 1500;
    std::size_t batch = 128;
    std::string lr_schedule = "constant";
    int warmup_steps = 0;
    int val_every = 1;

    std::size_t tokens() const;
    void validate() const;
    DiffusionSchedule schedule() const { return cosine_schedule(T, s, clip, sampling_steps); }
};

nlohmann::json to_json(const DiTConfig& c);
DiTConfig dit_config_from_json(const nlohmann::json& j, DiTConfig base = {});

/// Transformer denoiser over neighborhood tokens. Each token is the
/// concatenation of the noisy row and the condition row; the timestep
/// modulates every block through adaLN-Zero. Returns the noise estimate of
/// the center row of each sample.
class DiT {
public:
    explicit DiT(DiTConfig config, std::uint64_t init_seed = 0);

    const DiTConfig& config() const { return config_; }
    nn::ParameterSet& parameters() { return params_; }
    const nn::ParameterSet& parameters() const { return params_; }

    /// noisy, condition: (B * tokens) x d; t: B timesteps in [0, T];
    /// key_valid: B * tokens flags (may be empty). Output B x d.
    nn::Var forward(const nn::Var& noisy, const Matrix& condition, std::span<const int> t,
                    std::span<const std::uint8_t> key_valid) const;
    Matrix predict(const Matrix& noisy, const Matrix& condition, std::span<const int> t,
                   std::span<const std::uint8_t> key_valid) const;

    void save_into(nn::Checkpoint& ckpt) const;
    static DiT from_checkpoint(const nn::Checkpoint& ckpt);

private:
    DiTConfig config_;
    nn::ParameterSet params_;
    nn::Linear token_proj_;
    nn::Linear time_fc1_;
    nn::Linear time_fc2_;
    std::vector<nn::AdaLNBlock> blocks_;
    nn::Linear final_modulation_;
    nn::Linear head_;
    Matrix slot_encoding_;
};

} // namespace lgdist
