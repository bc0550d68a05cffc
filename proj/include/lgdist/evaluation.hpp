#pragma once

#include "lgdist/data.hpp"
#include "lgdist/diffusion/pipeline.hpp"
#include "lgdist/matrix.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lgdist {

enum class GeneScope { HsagOnly, All };

GeneScope parse_gene_scope(const std::string& text);
std::string to_string(GeneScope scope);

/// Observed entries hidden to simulate dropout, sorted by (spot, gene).
struct SimulationMask {
    std::vector<TargetEntry> entries;
    double fraction = 0.0;
    std::uint64_t seed = 0;
};

/// Uniformly hides floor(fraction * #observed entries in scope) observed
/// entries. HSAG scope covers columns [0, hsag_count).
SimulationMask simulate_dropout(const Slide& slide, std::size_t hsag_count, double fraction, std::uint64_t seed,
                                GeneScope scope = GeneScope::HsagOnly);

/// The slide with the mask entries marked unobserved and zeroed.
Slide apply_simulation(const Slide& slide, const SimulationMask& mask);

double masked_mse(const ExpressionMatrix& truth, const ExpressionMatrix& predicted, std::span<const TargetEntry> entries);
/// Pearson correlation over the masked entries; throws DegenerateInput when
/// either side has zero variance.
double masked_pcc(const ExpressionMatrix& truth, const ExpressionMatrix& predicted, std::span<const TargetEntry> entries);

struct GeneMetrics {
    std::size_t gene = 0;
    std::size_t n = 0;
    double mse = 0.0;
    /// NaN when undefined (fewer than two entries or zero variance).
    double pcc = 0.0;
};

struct MetricsReport {
    double mse = 0.0;
    /// NaN when undefined.
    double pcc = 0.0;
    std::size_t n_evaluated = 0;
    std::vector<GeneMetrics> per_gene;
};

MetricsReport score_entries(const ExpressionMatrix& truth, const ExpressionMatrix& predicted,
                            std::span<const TargetEntry> entries);

/// Produces predictions for a slide whose targets are hidden. The returned
/// matrix must cover every target column.
using Completer = std::function<ExpressionMatrix(const Slide& hidden, std::span<const TargetEntry> targets, std::uint64_t seed)>;

/// Median pre-completion of the hidden slide.
Completer median_completer();
/// Diffusion completion with all genes kept.
Completer diffusion_completer(const GenePanel& panel, const LatentCodec& codec, const DiffusionModel& model,
                              std::optional<SamplerOptions> sampler = std::nullopt);
/// Runs `inner` on the slide restricted to `columns` (inner's panel order)
/// and writes its predictions back at the target entries.
Completer restrict_completer(Completer inner, std::vector<std::size_t> columns);

struct EvaluationSpec {
    double fraction = 0.3;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    GeneScope scope = GeneScope::HsagOnly;
};

/// One (seed) evaluation over several slides: per-slide metrics averaged.
struct SeedResult {
    std::uint64_t seed = 0;
    double mse = 0.0;
    double pcc = 0.0;
    double gene_pcc = 0.0;
    std::size_t n_evaluated = 0;
};

/// One scored entry, kept for the first evaluation seed.
struct ScoredEntry {
    std::size_t slide = 0;
    TargetEntry entry;
    double truth = 0.0;
    double predicted = 0.0;
};

struct EvaluationResult {
    std::vector<SeedResult> seeds;
    std::vector<ScoredEntry> first_seed_entries;
    double mean_mse = 0.0;
    double std_mse = 0.0;
    double mean_pcc = 0.0;
    double mean_gene_pcc = 0.0;
};

/// Simulates dropout on each slide with each seed, completes and scores.
/// Truth is the slide's own expression at the (observed) hidden entries.
EvaluationResult evaluate_completer(std::span<const Slide* const> slides, std::size_t hsag_count, const Completer& completer,
                                    const EvaluationSpec& spec);

struct SweepRow {
    double fraction = 0.0;
    double mean_mse = 0.0;
    double std_mse = 0.0;
    std::vector<double> seed_mse;
};

std::vector<double> default_sweep_fractions();

/// One row per fraction; cells (fraction, seed) run in parallel.
std::vector<SweepRow> robustness_sweep(std::span<const Slide* const> slides, std::size_t hsag_count,
                                       const std::vector<double>& fractions, const Completer& completer,
                                       const std::vector<std::uint64_t>& seeds, GeneScope scope = GeneScope::HsagOnly);

std::string format_sweep_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

struct AblationVariant {
    std::string name;
    Completer completer;
};

struct AblationRow {
    std::string variant;
    double mean_mse = 0.0;
    double std_mse = 0.0;
    std::vector<double> seed_mse;
};

/// Runs the same simulated-dropout evaluation for every variant.
std::vector<AblationRow> ablation_run(std::span<const Slide* const> slides, std::size_t hsag_count,
                                      const std::vector<AblationVariant>& variants, const EvaluationSpec& spec);

std::string format_ablation_csv(const std::vector<AblationRow>& rows);

/// Sample standard deviation (0 for fewer than two values).
double sample_std(std::span<const double> values);

} // namespace lgdist
