#pragma once

#include "lgdist/data.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lgdist {

inline constexpr int kDatasetFormatVersion = 1;

struct SplitSpec {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;

    /// Checks disjointness and that the union equals `slide_ids`.
    void validate(const std::vector<std::string>& slide_ids) const;
};

/// A dataset directory in memory. `genes` names the expression columns.
/// When the gene list has been ranked (Moran's I known and sorted) `panel`
/// describes it; a raw import carries no panel yet.
struct Dataset {
    std::string name;
    std::vector<std::string> genes;
    std::optional<GenePanel> panel;
    std::vector<Slide> slides;
    SplitSpec splits;
    /// Median-completed expression per slide id, if preprocessing ran.
    std::map<std::string, ExpressionMatrix> precompleted;
    /// Dropout-free values per slide id, present for synthetic datasets.
    std::map<std::string, ExpressionMatrix> ground_truth;

    const Slide& slide(const std::string& id) const;
    std::size_t slide_index(const std::string& id) const;
    std::vector<const Slide*> split(const std::vector<std::string>& ids) const;
    const GenePanel& require_panel() const;
    /// The precompleted slide, failing if preprocessing has not run.
    Slide precompleted_slide(const std::string& id) const;
};

Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Raw little-endian float / byte payload helpers shared with other artifacts.
ExpressionMatrix read_f32_matrix(const std::filesystem::path& file, std::size_t rows, std::size_t cols);
void write_f32_matrix(const std::filesystem::path& file, const ExpressionMatrix& m);
MaskMatrix read_u8_matrix(const std::filesystem::path& file, std::size_t rows, std::size_t cols);
void write_u8_matrix(const std::filesystem::path& file, const MaskMatrix& m);

std::string read_text(const std::filesystem::path& file);
void write_text(const std::filesystem::path& file, const std::string& text);

/// Shortest text that parses back to the same double; -inf and nan spelled out.
std::string format_double(double v);
double parse_double(const std::string& text);

} // namespace lgdist
