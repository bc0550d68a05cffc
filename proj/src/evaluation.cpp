#include "lgdist/evaluation.hpp"

#include "lgdist/dataset.hpp"
#include "lgdist/error.hpp"
#include "lgdist/parallel.hpp"
#include "lgdist/preprocess.hpp"
#include "lgdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace lgdist {

GeneScope parse_gene_scope(const std::string& text) {
    if (text == "hsag") return GeneScope::HsagOnly;
    if (text == "all") return GeneScope::All;
    fail(ErrorKind::InvalidArgument, "gene scope must be 'hsag' or 'all', got '" + text + "'");
}

std::string to_string(GeneScope scope) { return scope == GeneScope::HsagOnly ? "hsag" : "all"; }

SimulationMask simulate_dropout(const Slide& slide, std::size_t hsag_count, double fraction, std::uint64_t seed,
                                GeneScope scope) {
    require(fraction > 0.0 && fraction < 1.0, ErrorKind::InvalidArgument,
            "dropout fraction must lie in (0, 1), got " + format_double(fraction));
    const std::size_t genes = scope == GeneScope::HsagOnly ? std::min(hsag_count, slide.gene_count()) : slide.gene_count();
    std::vector<TargetEntry> candidates;
    for (std::size_t s = 0; s < slide.spot_count(); ++s) {
        for (std::size_t g = 0; g < genes; ++g) {
            if (slide.observed(s, g)) {
                candidates.push_back({s, g});
            }
        }
    }
    const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(candidates.size())));
    require(count > 0, ErrorKind::DegenerateInput,
            "dropout fraction " + format_double(fraction) + " selects no entries of slide '" + slide.id() + "'");
    CounterRng rng(derive_key(seed, 0x53494d));
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
    }
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
    return {std::move(candidates), fraction, seed};
}

Slide apply_simulation(const Slide& slide, const SimulationMask& mask) {
    ExpressionMatrix x = slide.expression();
    MaskMatrix m = slide.observed_mask();
    for (const auto& e : mask.entries) {
        const auto s = static_cast<Eigen::Index>(e.spot);
        const auto g = static_cast<Eigen::Index>(e.gene);
        x(s, g) = 0.0f;
        m(s, g) = 0;
    }
    return Slide(slide.id(), slide.coords(), std::move(x), std::move(m));
}

namespace {

void check_entries(const ExpressionMatrix& truth, const ExpressionMatrix& predicted, std::span<const TargetEntry> entries) {
    require(!entries.empty(), ErrorKind::InvalidArgument, "metrics need at least one masked entry");
    for (const auto& e : entries) {
        require(static_cast<Eigen::Index>(e.spot) < std::min(truth.rows(), predicted.rows()) &&
                    static_cast<Eigen::Index>(e.gene) < std::min(truth.cols(), predicted.cols()),
                ErrorKind::OutOfRange, "masked entry outside the scored matrices");
    }
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) {
        return std::nan("");
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mean_ignoring_nan(std::span<const double> values) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const double v : values) {
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    }
    return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

} // namespace

double masked_mse(const ExpressionMatrix& truth, const ExpressionMatrix& predicted, std::span<const TargetEntry> entries) {
    check_entries(truth, predicted, entries);
    double sum = 0.0;
    for (const auto& e : entries) {
        const double d = static_cast<double>(predicted(e.spot, e.gene)) - static_cast<double>(truth(e.spot, e.gene));
        sum += d * d;
    }
    return sum / static_cast<double>(entries.size());
}

double masked_pcc(const ExpressionMatrix& truth, const ExpressionMatrix& predicted, std::span<const TargetEntry> entries) {
    check_entries(truth, predicted, entries);
    std::vector<double> a;
    std::vector<double> b;
    for (const auto& e : entries) {
        a.push_back(truth(e.spot, e.gene));
        b.push_back(predicted(e.spot, e.gene));
    }
    const double r = pearson(a, b);
    require(!std::isnan(r), ErrorKind::DegenerateInput, "PCC is undefined: masked values have zero variance");
    return r;
}

MetricsReport score_entries(const ExpressionMatrix& truth, const ExpressionMatrix& predicted,
                            std::span<const TargetEntry> entries) {
    MetricsReport out;
    out.mse = masked_mse(truth, predicted, entries);
    out.n_evaluated = entries.size();
    std::vector<double> a;
    std::vector<double> b;
    std::map<std::size_t, std::pair<std::vector<double>, std::vector<double>>> by_gene;
    for (const auto& e : entries) {
        const double t = truth(e.spot, e.gene);
        const double p = predicted(e.spot, e.gene);
        a.push_back(t);
        b.push_back(p);
        by_gene[e.gene].first.push_back(t);
        by_gene[e.gene].second.push_back(p);
    }
    out.pcc = pearson(a, b);
    for (const auto& [gene, values] : by_gene) {
        GeneMetrics g;
        g.gene = gene;
        g.n = values.first.size();
        double sum = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) {
            sum += (values.second[i] - values.first[i]) * (values.second[i] - values.first[i]);
        }
        g.mse = sum / static_cast<double>(g.n);
        g.pcc = g.n < 2 ? std::nan("") : pearson(values.first, values.second);
        out.per_gene.push_back(g);
    }
    return out;
}

Completer median_completer() {
    return [](const Slide& hidden, std::span<const TargetEntry>, std::uint64_t) {
        return median_precomplete(hidden).expression();
    };
}

Completer diffusion_completer(const GenePanel& panel, const LatentCodec& codec, const DiffusionModel& model,
                              std::optional<SamplerOptions> sampler_override) {
    const SamplerOptions sampler = sampler_override.value_or(sampler_options(model.dit.config()));
    return [&panel, &codec, &model, sampler](const Slide& hidden, std::span<const TargetEntry> targets, std::uint64_t seed) {
        CompletionOptions options;
        options.seed = seed;
        options.keep_cgs = true;
        options.sampler = sampler;
        return complete_slide(hidden, panel, codec, model, targets, options).expression;
    };
}

Completer restrict_completer(Completer inner, std::vector<std::size_t> columns) {
    return [inner = std::move(inner), columns = std::move(columns)](const Slide& hidden, std::span<const TargetEntry> targets,
                                                                      std::uint64_t seed) {
        std::vector<std::ptrdiff_t> position(hidden.gene_count(), -1);
        for (std::size_t j = 0; j < columns.size(); ++j) {
            require(columns[j] < hidden.gene_count(), ErrorKind::OutOfRange, "restricted column outside the slide");
            position[columns[j]] = static_cast<std::ptrdiff_t>(j);
        }
        std::vector<TargetEntry> mapped;
        mapped.reserve(targets.size());
        for (const auto& e : targets) {
            require(position[e.gene] >= 0, ErrorKind::OutOfRange,
                    "target gene column " + std::to_string(e.gene) + " is not covered by the restricted completer");
            mapped.push_back({e.spot, static_cast<std::size_t>(position[e.gene])});
        }
        const ExpressionMatrix predicted = inner(hidden.select_genes(columns), mapped, seed);
        ExpressionMatrix out = hidden.expression();
        for (std::size_t k = 0; k < targets.size(); ++k) {
            out(static_cast<Eigen::Index>(targets[k].spot), static_cast<Eigen::Index>(targets[k].gene)) =
                predicted(static_cast<Eigen::Index>(mapped[k].spot), static_cast<Eigen::Index>(mapped[k].gene));
        }
        return out;
    };
}

double sample_std(std::span<const double> values) {
    if (values.size() < 2) {
        return 0.0;
    }
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    double ss = 0.0;
    for (const double v : values) {
        ss += (v - mean) * (v - mean);
    }
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

namespace {

SeedResult evaluate_seed(std::span<const Slide* const> slides, std::size_t hsag_count, const Completer& completer,
                         double fraction, std::uint64_t seed, GeneScope scope, std::vector<ScoredEntry>* keep = nullptr) {
    require(!slides.empty(), ErrorKind::InvalidArgument, "evaluation needs at least one slide");
    SeedResult out;
    out.seed = seed;
    std::vector<double> mse;
    std::vector<double> pcc;
    std::vector<double> gene_pcc;
    for (std::size_t i = 0; i < slides.size(); ++i) {
        const Slide& slide = *slides[i];
        const auto mask = simulate_dropout(slide, hsag_count, fraction, derive_key(seed, 0x534c, i), scope);
        const Slide hidden = apply_simulation(slide, mask);
        const ExpressionMatrix predicted = completer(hidden, mask.entries, derive_key(seed, 0x434f4d, i));
        const auto report = score_entries(slide.expression(), predicted, mask.entries);
        if (keep) {
            for (const auto& e : mask.entries) {
                keep->push_back({i, e, slide.expression()(e.spot, e.gene), predicted(e.spot, e.gene)});
            }
        }
        mse.push_back(report.mse);
        pcc.push_back(report.pcc);
        std::vector<double> genes;
        for (const auto& g : report.per_gene) {
            genes.push_back(g.pcc);
        }
        gene_pcc.push_back(mean_ignoring_nan(genes));
        out.n_evaluated += report.n_evaluated;
    }
    out.mse = std::accumulate(mse.begin(), mse.end(), 0.0) / static_cast<double>(mse.size());
    out.pcc = mean_ignoring_nan(pcc);
    out.gene_pcc = mean_ignoring_nan(gene_pcc);
    return out;
}

} // namespace

EvaluationResult evaluate_completer(std::span<const Slide* const> slides, std::size_t hsag_count, const Completer& completer,
                                    const EvaluationSpec& spec) {
    require(!spec.seeds.empty(), ErrorKind::InvalidArgument, "evaluation needs at least one seed");
    EvaluationResult out;
    out.seeds.resize(spec.seeds.size());
    parallel_for(spec.seeds.size(), [&](std::size_t k) {
        out.seeds[k] = evaluate_seed(slides, hsag_count, completer, spec.fraction, spec.seeds[k], spec.scope,
                                     k == 0 ? &out.first_seed_entries : nullptr);
    });
    std::vector<double> mse;
    std::vector<double> pcc;
    std::vector<double> gene_pcc;
    for (const auto& s : out.seeds) {
        mse.push_back(s.mse);
        pcc.push_back(s.pcc);
        gene_pcc.push_back(s.gene_pcc);
    }
    out.mean_mse = std::accumulate(mse.begin(), mse.end(), 0.0) / static_cast<double>(mse.size());
    out.std_mse = sample_std(mse);
    out.mean_pcc = mean_ignoring_nan(pcc);
    out.mean_gene_pcc = mean_ignoring_nan(gene_pcc);
    return out;
}

std::vector<double> default_sweep_fractions() { return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}; }

std::vector<SweepRow> robustness_sweep(std::span<const Slide* const> slides, std::size_t hsag_count,
                                       const std::vector<double>& fractions, const Completer& completer,
                                       const std::vector<std::uint64_t>& seeds, GeneScope scope) {
    require(!fractions.empty() && !seeds.empty(), ErrorKind::InvalidArgument, "sweep needs fractions and seeds");
    const std::size_t cells = fractions.size() * seeds.size();
    std::vector<double> mse(cells);
    parallel_for(cells, [&](std::size_t c) {
        const std::size_t f = c / seeds.size();
        const std::size_t k = c % seeds.size();
        mse[c] = evaluate_seed(slides, hsag_count, completer, fractions[f], seeds[k], scope).mse;
    });
    std::vector<SweepRow> rows;
    for (std::size_t f = 0; f < fractions.size(); ++f) {
        SweepRow row;
        row.fraction = fractions[f];
        row.seed_mse.assign(mse.begin() + static_cast<std::ptrdiff_t>(f * seeds.size()),
                            mse.begin() + static_cast<std::ptrdiff_t>((f + 1) * seeds.size()));
        row.mean_mse = std::accumulate(row.seed_mse.begin(), row.seed_mse.end(), 0.0) / static_cast<double>(seeds.size());
        row.std_mse = sample_std(row.seed_mse);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "fraction,mean_mse,std_mse,seed_mse\n";
    for (const auto& r : rows) {
        out << format_double(r.fraction) << ',' << format_double(r.mean_mse) << ',' << format_double(r.std_mse) << ',';
        for (std::size_t i = 0; i < r.seed_mse.size(); ++i) {
            out << (i ? ";" : "") << format_double(r.seed_mse[i]);
        }
        out << '\n';
    }
    return out.str();
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line.rfind("fraction,mean_mse,std_mse", 0) == 0, ErrorKind::Format,
            "sweep table must start with a 'fraction,mean_mse,std_mse' header");
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        require(cells.size() >= 3, ErrorKind::Format, "sweep row needs fraction, mean_mse and std_mse: '" + line + "'");
        SweepRow r;
        r.fraction = parse_double(cells[0]);
        r.mean_mse = parse_double(cells[1]);
        r.std_mse = parse_double(cells[2]);
        if (cells.size() > 3) {
            std::stringstream seeds(cells[3]);
            while (std::getline(seeds, cell, ';')) {
                r.seed_mse.push_back(parse_double(cell));
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<AblationRow> ablation_run(std::span<const Slide* const> slides, std::size_t hsag_count,
                                      const std::vector<AblationVariant>& variants, const EvaluationSpec& spec) {
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        require(static_cast<bool>(v.completer), ErrorKind::InvalidArgument, "variant '" + v.name + "' has no model");
        const auto result = evaluate_completer(slides, hsag_count, v.completer, spec);
        AblationRow row{v.name, result.mean_mse, result.std_mse, {}};
        for (const auto& s : result.seeds) {
            row.seed_mse.push_back(s.mse);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "variant,mean_mse,std_mse,seed_mse\n";
    for (const auto& r : rows) {
        out << r.variant << ',' << format_double(r.mean_mse) << ',' << format_double(r.std_mse) << ',';
        for (std::size_t i = 0; i < r.seed_mse.size(); ++i) {
            out << (i ? ";" : "") << format_double(r.seed_mse[i]);
        }
        out << '\n';
    }
    return out.str();
}

} // namespace lgdist
