#include "lgdist/synthetic.hpp"

#include "lgdist/error.hpp"
#include "lgdist/preprocess.hpp"
#include "lgdist/rng.hpp"

#include <cmath>
#include <cstdio>

namespace lgdist {

using nlohmann::json;

namespace {

std::vector<SpotCoord> lattice(int rows, int cols) {
    std::vector<SpotCoord> out;
    out.reserve(static_cast<std::size_t>(rows * cols));
    for (int r = 0; r < rows; ++r) {
        for (int k = 0; k < cols; ++k) {
            out.push_back({r, 2 * k + (r % 2)});
        }
    }
    return out;
}

// Row i holds K(d_ij) / sqrt(sum_j K(d_ij)^2) so every smoothed spot has unit
// variance when the noise is standard normal.
Matrix smoothing_kernel(const std::vector<SpotCoord>& coords, double length) {
    const auto S = static_cast<Eigen::Index>(coords.size());
    Matrix K(S, S);
    for (Eigen::Index i = 0; i < S; ++i) {
        for (Eigen::Index j = 0; j < S; ++j) {
            const double d = hex_distance(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
            K(i, j) = std::exp(-d * d / (2.0 * length * length));
        }
        K.row(i) /= K.row(i).norm();
    }
    return K;
}

Eigen::VectorXd white_noise(Eigen::Index n, std::uint64_t key) {
    CounterRng rng(key);
    Eigen::VectorXd v(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        v(k) = rng.normal();
    }
    return v;
}

std::string gene_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "gene_%04zu", i);
    return buf;
}

} // namespace

std::size_t SynthConfig::designed_hsag_count() const {
    return static_cast<std::size_t>(std::llround(hsag_fraction * static_cast<double>(genes)));
}

void SynthConfig::validate() const {
    require(rows > 0 && cols > 0, ErrorKind::InvalidArgument, "lattice dimensions must be positive");
    require(genes > 0, ErrorKind::InvalidArgument, "gene count must be positive");
    require(length_scale > 0.0 && cg_length_scale > 0.0, ErrorKind::InvalidArgument, "length scales must be positive");
    require(cg_correlation >= 0.0 && cg_correlation <= 1.0, ErrorKind::InvalidArgument, "cg_correlation must lie in [0, 1]");
    require(dropout_fraction >= 0.0 && dropout_fraction < 1.0, ErrorKind::InvalidArgument,
            "dropout_fraction must lie in [0, 1)");
    require(hsag_fraction > 0.0 && hsag_fraction <= 1.0 && designed_hsag_count() >= 1, ErrorKind::InvalidArgument,
            "hsag_fraction must select at least one gene");
    require(train_slides >= 1 && val_slides >= 0 && test_slides >= 0, ErrorKind::InvalidArgument,
            "need at least one training slide");
    const double extent = std::min(rows, 2 * cols);
    require(extent >= 2.0 * std::max(length_scale, cg_length_scale), ErrorKind::InvalidArgument,
            "lattice too small for the correlation length: " + std::to_string(rows) + "x" + std::to_string(cols) +
                " cannot hold a field with length " + std::to_string(std::max(length_scale, cg_length_scale)));
}

json to_json(const SynthConfig& c) {
    return {{"rows", c.rows},
            {"cols", c.cols},
            {"genes", c.genes},
            {"hsag_fraction", c.hsag_fraction},
            {"length_scale", c.length_scale},
            {"cg_length_scale", c.cg_length_scale},
            {"cg_correlation", c.cg_correlation},
            {"dropout_fraction", c.dropout_fraction},
            {"mean_level", c.mean_level},
            {"seed", c.seed},
            {"train_slides", c.train_slides},
            {"val_slides", c.val_slides},
            {"test_slides", c.test_slides}};
}

SynthConfig synth_config_from_json(const json& j, SynthConfig c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "rows") c.rows = value.get<int>();
        else if (key == "cols") c.cols = value.get<int>();
        else if (key == "genes") c.genes = value.get<std::size_t>();
        else if (key == "hsag_fraction") c.hsag_fraction = value.get<double>();
        else if (key == "length_scale") c.length_scale = value.get<double>();
        else if (key == "cg_length_scale") c.cg_length_scale = value.get<double>();
        else if (key == "cg_correlation") c.cg_correlation = value.get<double>();
        else if (key == "dropout_fraction") c.dropout_fraction = value.get<double>();
        else if (key == "mean_level") c.mean_level = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "train_slides") c.train_slides = value.get<int>();
        else if (key == "val_slides") c.val_slides = value.get<int>();
        else if (key == "test_slides") c.test_slides = value.get<int>();
        else fail(ErrorKind::InvalidArgument, "unknown synth config key '" + key + "'");
    }
    return c;
}

SyntheticSlide generate_slide(const SynthConfig& config, int slide_index) {
    config.validate();
    const auto coords = lattice(config.rows, config.cols);
    const auto S = static_cast<Eigen::Index>(coords.size());
    const std::size_t H = config.designed_hsag_count();
    const std::size_t G = config.genes;
    const auto slide_key = derive_key(config.seed, 0x534c, static_cast<std::uint64_t>(slide_index));

    const Matrix K = smoothing_kernel(coords, config.length_scale);
    const Matrix Kcg = smoothing_kernel(coords, config.cg_length_scale);

    Matrix fields(S, static_cast<Eigen::Index>(G));
    for (std::size_t h = 0; h < H; ++h) {
        fields.col(static_cast<Eigen::Index>(h)) = K * white_noise(S, derive_key(slide_key, 1, h));
    }
    // Mixture weights are shared by all slides of the dataset.
    CounterRng mix(derive_key(config.seed, 0x4d4958));
    for (std::size_t c = H; c < G; ++c) {
        Eigen::VectorXd a(static_cast<Eigen::Index>(H));
        for (auto& v : a) {
            v = mix.normal();
        }
        a /= a.norm();
        const Eigen::VectorXd shared = fields.leftCols(static_cast<Eigen::Index>(H)) * a;
        const Eigen::VectorXd own = Kcg * white_noise(S, derive_key(slide_key, 2, c));
        fields.col(static_cast<Eigen::Index>(c)) = config.cg_correlation * shared + (1.0 - config.cg_correlation) * own;
    }

    SyntheticSlide out;
    out.ground_truth = (fields.array() + config.mean_level).matrix().cast<float>();
    ExpressionMatrix observed = out.ground_truth;
    MaskMatrix mask = MaskMatrix::Ones(S, static_cast<Eigen::Index>(G));
    if (config.dropout_fraction > 0.0) {
        CounterRng drop(derive_key(slide_key, 3));
        for (Eigen::Index k = 0; k < mask.size(); ++k) {
            if (drop.uniform() < config.dropout_fraction) {
                mask.data()[k] = 0;
                observed.data()[k] = 0.0f;
            }
        }
    }
    char id[32];
    std::snprintf(id, sizeof(id), "slide_%03d", slide_index);
    out.slide = Slide(id, coords, std::move(observed), std::move(mask));
    for (std::size_t i = 0; i < G; ++i) {
        out.genes.push_back(gene_name(i));
    }
    return out;
}

std::pair<Slide, GenePanel> generate(const SynthConfig& config) {
    const auto s = generate_slide(config, 0);
    const Slide* slides[] = {&s.slide};
    const auto sel = build_gene_panel(slides, s.genes, config.designed_hsag_count(), config.genes);
    return {s.slide.select_genes(sel.columns), sel.panel};
}

Dataset generate_dataset(const SynthConfig& config) {
    config.validate();
    const int total = config.train_slides + config.val_slides + config.test_slides;
    std::vector<SyntheticSlide> raw;
    Dataset ds;
    ds.name = "synthetic";
    for (int i = 0; i < total; ++i) {
        raw.push_back(generate_slide(config, i));
        const std::string& id = raw.back().slide.id();
        (i < config.train_slides ? ds.splits.train : i < config.train_slides + config.val_slides ? ds.splits.val : ds.splits.test)
            .push_back(id);
    }
    std::vector<const Slide*> train;
    for (int i = 0; i < config.train_slides; ++i) {
        train.push_back(&raw[static_cast<std::size_t>(i)].slide);
    }
    const auto sel = build_gene_panel(train, raw.front().genes, config.designed_hsag_count(), config.genes);
    ds.genes = sel.panel.names();
    ds.panel = sel.panel;
    for (auto& r : raw) {
        ExpressionMatrix truth(r.ground_truth.rows(), static_cast<Eigen::Index>(sel.columns.size()));
        for (std::size_t j = 0; j < sel.columns.size(); ++j) {
            truth.col(static_cast<Eigen::Index>(j)) = r.ground_truth.col(static_cast<Eigen::Index>(sel.columns[j]));
        }
        ds.ground_truth.emplace(r.slide.id(), std::move(truth));
        ds.slides.push_back(r.slide.select_genes(sel.columns));
    }
    return ds;
}

} // namespace lgdist
