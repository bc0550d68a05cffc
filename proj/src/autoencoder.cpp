#include "lgdist/autoencoder.hpp"

#include "lgdist/error.hpp"
#include "lgdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace lgdist {

using nlohmann::json;

void AEConfig::validate() const {
    require(g > 0 && g % 4 == 0, ErrorKind::InvalidArgument,
            "AE gene count g must be a positive multiple of 4 (positional encoding), got " + std::to_string(g));
    require(d > 0, ErrorKind::InvalidArgument, "AE latent width d must be positive");
    require(encoder_layers > 0 && encoder_heads > 0 && d % static_cast<std::size_t>(encoder_heads) == 0,
            ErrorKind::InvalidArgument, "AE encoder layers/heads must be positive and heads must divide d");
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument, "alpha must lie in [0, 1]");
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::InvalidArgument, "dropout must lie in [0, 1)");
    require(noise_prob >= 0.0 && noise_prob <= 1.0 && noise_std >= 0.0, ErrorKind::InvalidArgument,
            "noise_prob must lie in [0, 1] and noise_std must be non-negative");
    require(lr > 0.0 && epochs > 0 && batch > 0, ErrorKind::InvalidArgument, "lr, epochs and batch must be positive");
    require(hops >= 0 && hops <= 2, ErrorKind::InvalidArgument, "hops must be 0, 1 or 2");
    require(lr_schedule == "constant" || lr_schedule == "cosine", ErrorKind::InvalidArgument,
            "lr_schedule must be 'constant' or 'cosine'");
}

json to_json(const AEConfig& c) {
    return {{"g", c.g},
            {"d", c.d},
            {"encoder_layers", c.encoder_layers},
            {"encoder_heads", c.encoder_heads},
            {"dropout", c.dropout},
            {"alpha", c.alpha},
            {"noise_prob", c.noise_prob},
            {"noise_std", c.noise_std},
            {"lr", c.lr},
            {"weight_decay", c.weight_decay},
            {"epochs", c.epochs},
            {"batch", c.batch},
            {"hops", c.hops},
            {"pe_scale", c.pe_scale},
            {"mask_padding", c.mask_padding},
            {"lr_schedule", c.lr_schedule},
            {"warmup_steps", c.warmup_steps}};
}

AEConfig ae_config_from_json(const json& j, AEConfig c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "g") c.g = value.get<std::size_t>();
        else if (key == "d") c.d = value.get<std::size_t>();
        else if (key == "encoder_layers") c.encoder_layers = value.get<int>();
        else if (key == "encoder_heads") c.encoder_heads = value.get<int>();
        else if (key == "dropout") c.dropout = value.get<double>();
        else if (key == "alpha") c.alpha = value.get<double>();
        else if (key == "noise_prob") c.noise_prob = value.get<double>();
        else if (key == "noise_std") c.noise_std = value.get<double>();
        else if (key == "lr") c.lr = value.get<double>();
        else if (key == "weight_decay") c.weight_decay = value.get<double>();
        else if (key == "epochs") c.epochs = value.get<int>();
        else if (key == "batch") c.batch = value.get<std::size_t>();
        else if (key == "hops") c.hops = value.get<int>();
        else if (key == "pe_scale") c.pe_scale = value.get<double>();
        else if (key == "mask_padding") c.mask_padding = value.get<bool>();
        else if (key == "lr_schedule") c.lr_schedule = value.get<std::string>();
        else if (key == "warmup_steps") c.warmup_steps = value.get<int>();
        else fail(ErrorKind::InvalidArgument, "unknown autoencoder config key '" + key + "'");
    }
    return c;
}

double scheduled_lr(double base, const std::string& schedule, int warmup, std::uint64_t step, std::uint64_t total) {
    if (warmup > 0 && step < static_cast<std::uint64_t>(warmup)) {
        return base * static_cast<double>(step + 1) / static_cast<double>(warmup);
    }
    if (schedule == "cosine" && total > static_cast<std::uint64_t>(std::max(warmup, 0))) {
        const double span = static_cast<double>(total - static_cast<std::uint64_t>(std::max(warmup, 0)));
        const double progress = static_cast<double>(step - static_cast<std::uint64_t>(std::max(warmup, 0))) / span;
        return base * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
    }
    return base;
}

Autoencoder::Autoencoder(AEConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    const auto g = static_cast<Eigen::Index>(config_.g);
    const auto d = static_cast<Eigen::Index>(config_.d);
    embed_ = nn::Linear(params_, "encoder.embed", g, d, derive_key(init_seed, 1));
    for (int l = 0; l < config_.encoder_layers; ++l) {
        blocks_.emplace_back(params_, "encoder.block" + std::to_string(l), d, config_.encoder_heads, nn::Activation::Tanh,
                             derive_key(init_seed, 2, static_cast<std::uint64_t>(l)));
    }
    final_norm_ = nn::LayerNorm(params_, "encoder.norm", d);
    decoder_ = nn::Mlp(params_, "decoder", d, 4 * d, g, nn::Activation::Tanh, derive_key(init_seed, 3));
}

Matrix Autoencoder::positional_input(const NeighborhoodBatch& batch) const {
    require(batch.X.cols() == static_cast<Eigen::Index>(config_.g), ErrorKind::ShapeMismatch,
            "neighborhood has " + std::to_string(batch.X.cols()) + " genes but the autoencoder expects " +
                std::to_string(config_.g));
    Matrix input = batch.X;
    if (config_.pe_scale != 0.0) {
        for (Eigen::Index r = 0; r < input.rows(); ++r) {
            const auto c = batch.coords[static_cast<std::size_t>(r)];
            input.row(r) += config_.pe_scale * nn::sincos_2d_positional_encoding(c.row, c.col, input.cols());
        }
    }
    return input;
}

nn::Var Autoencoder::encode_input(const nn::Var& input, const NeighborhoodBatch& batch, nn::ForwardContext& ctx) const {
    const auto tokens = static_cast<Eigen::Index>(batch.tokens);
    const std::span<const std::uint8_t> mask =
        config_.mask_padding ? std::span<const std::uint8_t>(batch.valid) : std::span<const std::uint8_t>{};
    nn::Var h = embed_(input);
    for (const auto& block : blocks_) {
        h = block(h, tokens, mask, ctx);
    }
    return final_norm_(h);
}

Matrix Autoencoder::encode(const NeighborhoodBatch& batch) const {
    nn::NoGradGuard guard;
    nn::ForwardContext ctx;
    return encode_input(nn::constant(positional_input(batch)), batch, ctx).value();
}

Matrix Autoencoder::encode(const Neighborhood& nbhd) const {
    const Neighborhood items[] = {nbhd};
    return encode(stack_neighborhoods(items));
}

nn::Var Autoencoder::decode(const nn::Var& latent) const {
    require(latent.cols() == static_cast<Eigen::Index>(config_.d), ErrorKind::ShapeMismatch,
            "latent width " + std::to_string(latent.cols()) + " differs from d = " + std::to_string(config_.d));
    return decoder_(latent);
}

Matrix Autoencoder::decode(const Matrix& latent) const {
    nn::NoGradGuard guard;
    return decode(nn::constant(latent)).value();
}

nn::Checkpoint Autoencoder::to_checkpoint(const GenePanel& panel) const {
    nn::Checkpoint ck;
    ck.kind = "autoencoder";
    ck.config = to_json(config_);
    ck.extras["genes"] = panel.names();
    ck.extras["hsag_count"] = panel.hsag_count();
    nn::export_parameters(params_, ck);
    return ck;
}

Autoencoder Autoencoder::from_checkpoint(const nn::Checkpoint& ckpt) {
    require(ckpt.kind == "autoencoder", ErrorKind::Checkpoint, "expected an autoencoder checkpoint, found '" + ckpt.kind + "'");
    Autoencoder model(ae_config_from_json(ckpt.config));
    nn::import_parameters(ckpt, model.params_);
    return model;
}

ReconstructionLoss weighted_reconstruction_loss(const Matrix& X, const nn::Var& X_hat, const GenePanel& panel, double alpha,
                                                std::span<const double> row_weights) {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument, "alpha must lie in [0, 1], got " + std::to_string(alpha));
    require(X.rows() == X_hat.rows() && X.cols() == X_hat.cols(), ErrorKind::ShapeMismatch,
            "reconstruction shape differs from the input");
    require(static_cast<std::size_t>(X.cols()) == panel.size(), ErrorKind::ShapeMismatch,
            "reconstruction width differs from the gene panel");
    const nn::Var diff = nn::sub(X_hat, nn::constant(X));
    std::vector<double> hsag(panel.size(), 0.0);
    std::vector<double> cg(panel.size(), 0.0);
    for (std::size_t j = 0; j < panel.size(); ++j) {
        (panel.is_hsag(j) ? hsag : cg)[j] = 1.0;
    }
    ReconstructionLoss out;
    const nn::Var l_hsag = nn::weighted_mean_square(diff, row_weights, hsag);
    out.l_hsag = l_hsag.scalar();
    if (panel.cg_count() == 0) {
        out.total = l_hsag;
        return out;
    }
    const nn::Var l_cg = nn::weighted_mean_square(diff, row_weights, cg);
    out.l_cg = l_cg.scalar();
    out.total = nn::add(nn::scale(l_hsag, alpha), nn::scale(l_cg, 1.0 - alpha));
    return out;
}

namespace {

std::vector<double> row_weights_for(const NeighborhoodBatch& batch, bool mask_padding) {
    if (!mask_padding) {
        return {};
    }
    return {batch.valid.begin(), batch.valid.end()};
}

} // namespace

ReconstructionLoss evaluate_reconstruction(const Autoencoder& model, const NeighborhoodSet& set, const GenePanel& panel) {
    nn::NoGradGuard guard;
    const std::size_t chunk = 512;
    double total = 0.0;
    double hs = 0.0;
    double cg = 0.0;
    double weight = 0.0;
    for (std::size_t start = 0; start < set.size(); start += chunk) {
        std::vector<std::size_t> idx(std::min(chunk, set.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const auto batch = set.gather(idx);
        const auto rows = row_weights_for(batch, model.config().mask_padding);
        const double w = rows.empty() ? static_cast<double>(batch.X.rows()) : std::accumulate(rows.begin(), rows.end(), 0.0);
        const Matrix recon = model.decode(model.encode(batch));
        const auto loss = weighted_reconstruction_loss(batch.X, nn::constant(recon), panel, model.config().alpha, rows);
        total += w * loss.total.scalar();
        hs += w * loss.l_hsag;
        cg += w * loss.l_cg;
        weight += w;
    }
    ReconstructionLoss out;
    out.total = nn::constant(Matrix::Constant(1, 1, total / weight));
    out.l_hsag = hs / weight;
    out.l_cg = cg / weight;
    return out;
}

AETrainResult train_autoencoder(Autoencoder& model, const AETrainData& data, const GenePanel& panel, std::uint64_t seed,
                                const std::function<void(const AEEpochLog&)>& on_epoch) {
    const AEConfig& cfg = model.config();
    require(panel.size() == cfg.g, ErrorKind::ShapeMismatch, "gene panel size differs from the autoencoder's g");
    const NeighborhoodSet train = collect_neighborhoods(data.train_slides, data.train_values, cfg.hops);
    require(train.size() > 0, ErrorKind::InvalidArgument, "autoencoder training needs at least one neighborhood");
    const bool has_val = !data.val_slides.empty();
    const NeighborhoodSet val = has_val ? collect_neighborhoods(data.val_slides, data.val_values, cfg.hops) : NeighborhoodSet{};

    nn::ParameterSet& params = model.parameters();
    nn::AdamW opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    const std::size_t N = train.size();
    const std::size_t steps_per_epoch = (N + cfg.batch - 1) / cfg.batch;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg.epochs) * steps_per_epoch;
    const auto T = static_cast<Eigen::Index>(train.batch.tokens);

    AETrainResult result;
    std::vector<Matrix> best;
    std::vector<std::size_t> order(N);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        CounterRng shuffle(derive_key(seed, 0x5348, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = N; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle.below(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t b = 0; b < steps_per_epoch; ++b) {
            const std::span<const std::size_t> idx(order.data() + b * cfg.batch, std::min(cfg.batch, N - b * cfg.batch));
            const auto batch = train.gather(idx);
            Matrix input = model.positional_input(batch);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                CounterRng noise(derive_key(seed, 0x4e, static_cast<std::uint64_t>(epoch), idx[i]));
                if (noise.uniform() < cfg.noise_prob) {
                    auto rows = input.middleRows(static_cast<Eigen::Index>(i) * T, T);
                    for (Eigen::Index k = 0; k < rows.size(); ++k) {
                        rows.data()[k] += cfg.noise_std * noise.normal();
                    }
                }
            }
            nn::ForwardContext ctx{true, cfg.dropout, derive_key(seed, 0x44, static_cast<std::uint64_t>(epoch), b), 0};
            const nn::Var latent = model.encode_input(nn::constant(std::move(input)), batch, ctx);
            const auto rows = row_weights_for(batch, cfg.mask_padding);
            const auto loss = weighted_reconstruction_loss(batch.X, model.decode(latent), panel, cfg.alpha, rows);
            const double value = loss.total.scalar();
            require(std::isfinite(value), ErrorKind::NonFinite,
                    "non-finite autoencoder loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
            params.zero_grad();
            nn::backward(loss.total);
            opt.set_lr(scheduled_lr(cfg.lr, cfg.lr_schedule, cfg.warmup_steps, opt.steps(), total_steps));
            opt.step();
            epoch_loss += value * static_cast<double>(idx.size());
        }

        AEEpochLog entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_loss / static_cast<double>(N);
        if (has_val) {
            const auto v = evaluate_reconstruction(model, val, panel);
            entry.val_loss = v.total.scalar();
            entry.l_hsag = v.l_hsag;
            entry.l_cg = v.l_cg;
        } else {
            entry.val_loss = std::nan("");
        }
        result.log.push_back(entry);
        if (has_val && (result.best_epoch < 0 || entry.val_loss < result.best_val)) {
            result.best_epoch = epoch;
            result.best_val = entry.val_loss;
            best.clear();
            for (const auto& p : params.items()) {
                best.push_back(p.var.value());
            }
        }
        if (on_epoch) {
            on_epoch(entry);
        }
    }
    if (!best.empty()) {
        for (std::size_t i = 0; i < best.size(); ++i) {
            params.items()[i].var.mutable_value() = best[i];
        }
    } else {
        result.best_epoch = cfg.epochs - 1;
        result.best_val = std::nan("");
    }
    return result;
}

std::string format_ae_log(const std::vector<AEEpochLog>& log) {
    std::ostringstream out;
    out.precision(10);
    out << "epoch,train_loss,val_loss,l_hsag,l_cg\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.l_hsag << ',' << e.l_cg << '\n';
    }
    return out.str();
}

} // namespace lgdist
