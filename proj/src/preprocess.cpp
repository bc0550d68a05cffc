#include "lgdist/preprocess.hpp"

#include "lgdist/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lgdist {

namespace {

double median_of(std::vector<double>& v) {
    const std::size_t n = v.size();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) {
        return *mid;
    }
    const double upper = *mid;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

} // namespace

Adjacency hex_adjacency(const Slide& slide) {
    Adjacency adj;
    adj.nodes = slide.spot_count();
    for (std::size_t i = 0; i < slide.spot_count(); ++i) {
        for (const auto& c : hex_neighbors(slide.coords()[i], 1)) {
            if (const auto j = slide.find(c); j && *j > i) {
                adj.edges.emplace_back(i, *j);
            }
        }
    }
    return adj;
}

double morans_i(std::span<const double> values, const Adjacency& adjacency) {
    require(values.size() == adjacency.nodes, ErrorKind::ShapeMismatch, "value count differs from adjacency size");
    require(values.size() >= 2, ErrorKind::InvalidArgument, "Moran's I needs at least two spots");
    require(!adjacency.edges.empty(), ErrorKind::InvalidArgument, "Moran's I needs at least one adjacency edge");
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (const double v : values) {
        require(std::isfinite(v), ErrorKind::NonFinite, "Moran's I input contains a non-finite value");
        mean += v;
    }
    mean /= n;
    double denom = 0.0;
    for (const double v : values) {
        denom += (v - mean) * (v - mean);
    }
    require(denom > 0.0, ErrorKind::DegenerateInput, "Moran's I is undefined for zero-variance values");
    double cross = 0.0;
    for (const auto& [i, j] : adjacency.edges) {
        cross += (values[i] - mean) * (values[j] - mean);
    }
    return (n / adjacency.weight_sum()) * (2.0 * cross) / denom;
}

std::vector<double> slide_morans_i(const Slide& slide, const Adjacency& adjacency) {
    std::vector<double> out(slide.gene_count());
    std::vector<double> column(slide.spot_count());
    for (std::size_t g = 0; g < slide.gene_count(); ++g) {
        for (std::size_t s = 0; s < slide.spot_count(); ++s) {
            column[s] = slide.expression()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(g));
        }
        try {
            out[g] = morans_i(column, adjacency);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::DegenerateInput) {
                throw;
            }
            out[g] = -std::numeric_limits<double>::infinity();
        }
    }
    return out;
}

PanelSelection build_gene_panel(std::span<const Slide* const> slides, const std::vector<std::string>& candidate_genes,
                                std::size_t hsag_count, std::size_t total_count) {
    require(!slides.empty(), ErrorKind::InvalidArgument, "gene panel needs at least one training slide");
    require(hsag_count <= total_count, ErrorKind::InvalidArgument, "hsag_count exceeds total_count");
    const std::size_t G = candidate_genes.size();
    std::vector<double> mean_i(G, 0.0);
    for (const Slide* s : slides) {
        require(s->gene_count() == G, ErrorKind::ShapeMismatch,
                "slide '" + s->id() + "' gene count differs from the candidate list");
        const auto per = slide_morans_i(*s, hex_adjacency(*s));
        for (std::size_t g = 0; g < G; ++g) {
            mean_i[g] += per[g];
        }
    }
    for (auto& v : mean_i) {
        v /= static_cast<double>(slides.size());
    }

    std::vector<std::size_t> order(G);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (mean_i[a] != mean_i[b]) {
            return mean_i[a] > mean_i[b];
        }
        return candidate_genes[a] < candidate_genes[b];
    });
    const auto valid = static_cast<std::size_t>(
        std::count_if(mean_i.begin(), mean_i.end(), [](double v) { return std::isfinite(v); }));
    require(valid >= total_count, ErrorKind::PoolTooSmall,
            "only " + std::to_string(valid) + " genes have a computable Moran's I, need " + std::to_string(total_count));

    PanelSelection sel;
    sel.columns.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(total_count));
    std::vector<std::string> names;
    std::vector<double> scores;
    for (const auto c : sel.columns) {
        names.push_back(candidate_genes[c]);
        scores.push_back(mean_i[c]);
    }
    sel.panel = GenePanel(std::move(names), std::move(scores), hsag_count);
    return sel;
}

Slide median_precomplete(const Slide& slide, MedianFillRule rule) {
    const std::size_t S = slide.spot_count();
    const std::size_t G = slide.gene_count();
    const auto& x = slide.expression();
    const auto& mask = slide.observed_mask();

    std::vector<std::vector<std::size_t>> ring1(S);
    std::vector<std::vector<std::size_t>> ring2(S);
    for (std::size_t s = 0; s < S; ++s) {
        const auto nb = hex_neighbors(slide.coords()[s], 2);
        for (std::size_t k = 0; k < nb.size(); ++k) {
            if (const auto j = slide.find(nb[k])) {
                (k < 6 ? ring1[s] : ring2[s]).push_back(*j);
            }
        }
    }

    std::vector<double> slide_median(G, 0.0);
    std::vector<double> pool;
    for (std::size_t g = 0; g < G; ++g) {
        pool.clear();
        for (std::size_t s = 0; s < S; ++s) {
            if (mask(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(g))) {
                pool.push_back(x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(g)));
            }
        }
        if (!pool.empty()) {
            slide_median[g] = median_of(pool);
        }
    }

    ExpressionMatrix out = x;
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t g = 0; g < G; ++g) {
            const auto gi = static_cast<Eigen::Index>(g);
            if (mask(static_cast<Eigen::Index>(s), gi)) {
                continue;
            }
            pool.clear();
            for (const auto j : ring1[s]) {
                if (mask(static_cast<Eigen::Index>(j), gi)) {
                    pool.push_back(x(static_cast<Eigen::Index>(j), gi));
                }
            }
            double fill;
            if (pool.size() >= rule.min_count) {
                fill = median_of(pool);
            } else {
                for (const auto j : ring2[s]) {
                    if (mask(static_cast<Eigen::Index>(j), gi)) {
                        pool.push_back(x(static_cast<Eigen::Index>(j), gi));
                    }
                }
                fill = pool.size() >= rule.min_count ? median_of(pool) : slide_median[g];
            }
            out(static_cast<Eigen::Index>(s), gi) = static_cast<float>(fill);
        }
    }
    return slide.with_expression(std::move(out));
}

ExpressionMatrix log1p_transform(const ExpressionMatrix& counts) {
    ExpressionMatrix out(counts.rows(), counts.cols());
    for (Eigen::Index k = 0; k < counts.size(); ++k) {
        const float v = counts.data()[k];
        require(v >= 0.0f, ErrorKind::InvalidArgument, "log1p transform expects non-negative counts");
        out.data()[k] = static_cast<float>(std::log1p(static_cast<double>(v)));
    }
    return out;
}

Dataset preprocess_dataset(const Dataset& raw, const PreprocessOptions& options) {
    std::vector<Slide> source = raw.slides;
    std::map<std::string, ExpressionMatrix> truth = raw.ground_truth;
    if (options.log1p) {
        for (auto& s : source) {
            s = s.with_expression(log1p_transform(s.expression()));
        }
        for (auto& [id, m] : truth) {
            m = log1p_transform(m);
        }
    }

    std::vector<const Slide*> train;
    for (const auto& id : raw.splits.train) {
        train.push_back(&source[raw.slide_index(id)]);
    }
    const auto sel = build_gene_panel(train, raw.genes, options.hsag_count, options.total_count);

    Dataset out;
    out.name = raw.name;
    out.genes = sel.panel.names();
    out.panel = sel.panel;
    out.splits = raw.splits;
    for (const auto& s : source) {
        Slide restricted = s.select_genes(sel.columns);
        out.precompleted.emplace(s.id(), median_precomplete(restricted).expression());
        if (const auto it = truth.find(s.id()); it != truth.end()) {
            ExpressionMatrix t(it->second.rows(), static_cast<Eigen::Index>(sel.columns.size()));
            for (std::size_t j = 0; j < sel.columns.size(); ++j) {
                t.col(static_cast<Eigen::Index>(j)) = it->second.col(static_cast<Eigen::Index>(sel.columns[j]));
            }
            out.ground_truth.emplace(s.id(), std::move(t));
        }
        out.slides.push_back(std::move(restricted));
    }
    return out;
}

} // namespace lgdist
