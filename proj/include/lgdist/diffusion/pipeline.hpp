#pragma once

#include "lgdist/autoencoder.hpp"
#include "lgdist/data.hpp"
#include "lgdist/diffusion/dit.hpp"
#include "lgdist/diffusion/schedule.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lgdist {

/// Maps expression neighborhoods to the rows the diffusion model works on
/// and back. The latent codec uses a trained autoencoder; the expression
/// codec diffuses raw expression rows directly.
class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual std::string kind() const = 0;
    /// Width of a diffused row.
    virtual std::size_t width() const = 0;
    virtual std::size_t genes() const = 0;
    /// Clean target row for each listed spot, computed from its full
    /// neighborhood in `values`.
    virtual Matrix encode_centers(const Slide& slide, const ExpressionMatrix& values,
                                  std::span<const std::size_t> spots) const = 0;
    /// Condition rows for stacked neighborhoods: the center's expression is
    /// blanked before encoding and the center rows of the result are zero.
    virtual Matrix encode_condition(const NeighborhoodBatch& batch) const = 0;
    /// Rows back to expression space (one output row per input row).
    virtual Matrix decode(const Matrix& rows) const = 0;
};

class AutoencoderCodec final : public LatentCodec {
public:
    /// The condition encoder sees the neighborhood with the first
    /// `center_blank` columns of the center row zeroed (all columns by default).
    explicit AutoencoderCodec(const Autoencoder& model, std::size_t center_blank = kBlankAll)
        : model_(model), center_blank_(center_blank) {}

    static constexpr std::size_t kBlankAll = static_cast<std::size_t>(-1);

    std::string kind() const override { return "autoencoder"; }
    std::size_t width() const override { return model_.config().d; }
    std::size_t genes() const override { return model_.config().g; }
    Matrix encode_centers(const Slide& slide, const ExpressionMatrix& values, std::span<const std::size_t> spots) const override;
    Matrix encode_condition(const NeighborhoodBatch& batch) const override;
    Matrix decode(const Matrix& rows) const override { return model_.decode(rows); }

private:
    const Autoencoder& model_;
    std::size_t center_blank_;
};

class ExpressionCodec final : public LatentCodec {
public:
    explicit ExpressionCodec(std::size_t genes) : genes_(genes) {}
    std::string kind() const override { return "expression"; }
    std::size_t width() const override { return genes_; }
    std::size_t genes() const override { return genes_; }
    Matrix encode_centers(const Slide& slide, const ExpressionMatrix& values, std::span<const std::size_t> spots) const override;
    Matrix encode_condition(const NeighborhoodBatch& batch) const override;
    Matrix decode(const Matrix& rows) const override { return rows; }

private:
    std::size_t genes_;
};

/// Slides with the expression matrices to read from (e.g. precompleted).
struct SlideSet {
    std::vector<const Slide*> slides;
    std::vector<const ExpressionMatrix*> values;

    std::size_t spot_count() const;
};

/// Diffusion training samples: clean center rows and condition tokens, both
/// multiplied by the latent scale.
struct LatentTrainingSet {
    Eigen::Index tokens = 0;
    Matrix x0;
    Matrix condition;
    std::vector<std::uint8_t> valid;

    std::size_t size() const { return static_cast<std::size_t>(x0.rows()); }
};

/// Unscaled samples for every spot of the set.
LatentTrainingSet prepare_latents(const LatentCodec& codec, const SlideSet& set, int hops);
void apply_latent_scale(LatentTrainingSet& set, double scale);
/// 1 / standard deviation of all entries.
double latent_scale_of(const Matrix& x0);

/// Mean over center-row elements of (eps - eps_hat)^2 for the listed samples.
nn::Var diffusion_loss(const DiT& model, const DiffusionSchedule& schedule, const LatentTrainingSet& data,
                       std::span<const std::size_t> samples, std::span<const int> t, const Matrix& eps);

struct DiffusionEpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct DiffusionTrainResult {
    std::vector<DiffusionEpochLog> log;
    int best_epoch = -1;
    double best_val = 0.0;
    double latent_scale = 1.0;
};

/// Trains in place on precomputed rows; the model is left at its best
/// validation parameters (or its final ones without validation data).
DiffusionTrainResult train_diffusion(DiT& model, const LatentCodec& codec, const SlideSet& train, const SlideSet& val,
                                     std::uint64_t seed, const std::function<void(const DiffusionEpochLog&)>& on_epoch = {});

/// Same, on prepared and already scaled samples.
DiffusionTrainResult train_diffusion(DiT& model, const LatentTrainingSet& train, const LatentTrainingSet* val,
                                     std::uint64_t seed, const std::function<void(const DiffusionEpochLog&)>& on_epoch = {});

std::string format_diffusion_log(const std::vector<DiffusionEpochLog>& log);

/// eps_hat = denoiser(x_t, t) for a B x d batch of center rows.
using Denoiser = std::function<Matrix(const Matrix& x_t, int t)>;

/// One deterministic update from t to t_prev (t_prev = 0 returns x0_hat).
Matrix ddim_step(const Matrix& x_t, const Matrix& eps_hat, int t, int t_prev, const DiffusionSchedule& schedule,
                 double clip_x0 = 0.0);

struct SamplerOptions {
    /// "ddim" or "ddpm".
    std::string kind = "ddim";
    double clip_x0 = 0.0;
    /// Independent draws averaged per completed spot.
    int samples = 1;
};

SamplerOptions sampler_options(const DiTConfig& config);

/// Runs the sampling sub-sequence from its last timestep down to 0.
/// `sample_keys` seed the per-sample noise of the ancestral sampler.
Matrix run_sampler(const Denoiser& denoiser, const DiffusionSchedule& schedule, Matrix x_init, const SamplerOptions& options,
                   std::span<const std::uint64_t> sample_keys = {});

/// Standard normal B x d start rows, one keyed stream per sample.
Matrix initial_noise(std::span<const std::uint64_t> sample_keys, Eigen::Index width);

/// Generates center rows (in scaled space) for stacked condition tokens. The
/// condition and validity inputs are read-only.
Matrix sample_center(const DiT& model, const DiffusionSchedule& schedule, const Matrix& condition,
                     std::span<const std::uint8_t> valid, std::span<const std::uint64_t> sample_keys,
                     const SamplerOptions& options);

struct TargetEntry {
    std::size_t spot = 0;
    std::size_t gene = 0;

    auto operator<=>(const TargetEntry&) const = default;
};

/// A trained denoiser with everything needed to sample from it.
struct DiffusionModel {
    DiT dit;
    DiffusionSchedule schedule;
    double latent_scale = 1.0;
    std::string codec = "autoencoder";
};

nn::Checkpoint diffusion_checkpoint(const DiffusionModel& model, const GenePanel& panel);
DiffusionModel diffusion_model_from_checkpoint(const nn::Checkpoint& ckpt);

struct CompletionOptions {
    std::uint64_t seed = 0;
    bool keep_cgs = false;
    std::size_t chunk = 128;
    SamplerOptions sampler;
};

struct CompletionResult {
    /// S x (HSAG count, or all genes with keep_cgs).
    ExpressionMatrix expression;
    std::vector<std::string> genes;
    std::vector<TargetEntry> filled;
    std::size_t sampled_spots = 0;
};

/// Fills `targets` of `slide` (restricted to panel genes). Neighbor context is
/// the median-precompleted slide with every target hidden; each spot with a
/// target gets one generated row, and only target entries change.
CompletionResult complete_slide(const Slide& slide, const GenePanel& panel, const LatentCodec& codec,
                                const DiffusionModel& model, std::span<const TargetEntry> targets,
                                const CompletionOptions& options);

/// Every entry with observed_mask = 0.
std::vector<TargetEntry> dropout_targets(const Slide& slide);

} // namespace lgdist
