#pragma once

#include "lgdist/data.hpp"
#include "lgdist/dataset.hpp"

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace lgdist {

/// Undirected edge list of a binary symmetric spatial weight matrix. Each
/// unordered pair appears once with i < j.
struct Adjacency {
    std::size_t nodes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;

    /// W = sum_ij w_ij over the symmetric matrix, i.e. twice the edge count.
    double weight_sum() const { return 2.0 * static_cast<double>(edges.size()); }
};

/// 1-hop hex adjacency of a slide's spots.
Adjacency hex_adjacency(const Slide& slide);

/// Moran's I with binary symmetric weights.
/// Throws DegenerateInput for zero variance and InvalidArgument when the
/// graph has no edges or fewer than two nodes.
double morans_i(std::span<const double> values, const Adjacency& adjacency);

/// Per-gene Moran's I of one slide; zero-variance genes get -infinity.
std::vector<double> slide_morans_i(const Slide& slide, const Adjacency& adjacency);

struct PanelSelection {
    GenePanel panel;
    /// Source column of each panel gene, in panel order.
    std::vector<std::size_t> columns;
};

/// Ranks genes by their mean Moran's I over `slides` (descending, ties by
/// name) and keeps the top `total_count`, flagging the first `hsag_count`.
PanelSelection build_gene_panel(std::span<const Slide* const> slides, const std::vector<std::string>& candidate_genes,
                                std::size_t hsag_count, std::size_t total_count);

struct MedianFillRule {
    std::size_t min_count = 3;
};

/// Fills every unobserved entry with the median of observed values among the
/// 1-hop neighbors, else among 1- and 2-hop neighbors, else across the slide,
/// else 0. Only originally observed values are used as sources.
Slide median_precomplete(const Slide& slide, MedianFillRule rule = {});

/// log(1 + x) applied to every entry; rejects negative inputs.
ExpressionMatrix log1p_transform(const ExpressionMatrix& counts);

struct PreprocessOptions {
    std::size_t hsag_count = 32;
    std::size_t total_count = 1024;
    bool log1p = false;
};

/// Ranks genes on the training slides, restricts every slide (and any
/// ground truth) to the panel and attaches median-precompleted expression.
Dataset preprocess_dataset(const Dataset& raw, const PreprocessOptions& options);

} // namespace lgdist
