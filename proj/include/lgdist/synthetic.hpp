#pragma once

#include "lgdist/data.hpp"
#include "lgdist/dataset.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>

namespace lgdist {

struct SynthConfig {
    int rows = 20;
    int cols = 20;
    std::size_t genes = 1024;
    double hsag_fraction = 0.03125;
    /// Kernel length (hex hops) of the spatially associated fields.
    double length_scale = 5.0;
    /// Kernel length of the independent part of the context genes.
    double cg_length_scale = 1.0;
    double cg_correlation = 0.8;
    double dropout_fraction = 0.1;
    double mean_level = 0.0;
    std::uint64_t seed = 0;
    int train_slides = 30;
    int val_slides = 2;
    int test_slides = 3;

    std::size_t designed_hsag_count() const;
    void validate() const;
};

nlohmann::json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig base = {});

struct SyntheticSlide {
    /// Observed slide: dropout entries are zero with observed_mask = 0.
    Slide slide;
    /// Dropout-free values.
    ExpressionMatrix ground_truth;
    /// Designed gene order (spatially associated fields first).
    std::vector<std::string> genes;
};

/// One slide with index `slide_index` of the dataset defined by `config`.
/// The context-gene mixture weights depend only on the seed, so every slide
/// of a dataset shares gene semantics.
SyntheticSlide generate_slide(const SynthConfig& config, int slide_index);

/// A single ranked slide and its panel (genes reordered by Moran's I).
std::pair<Slide, GenePanel> generate(const SynthConfig& config);

/// Full dataset with splits, ranked panel and ground truth.
Dataset generate_dataset(const SynthConfig& config);

} // namespace lgdist
