#include "lgdist/diffusion/dit.hpp"

#include "lgdist/error.hpp"
#include "lgdist/hex.hpp"
#include "lgdist/rng.hpp"

namespace lgdist {

using nlohmann::json;

std::size_t DiTConfig::tokens() const { return neighbor_count(hops) + 1; }

void DiTConfig::validate() const {
    require(layers >= 0 && heads > 0 && width > 0 && width % heads == 0, ErrorKind::InvalidArgument,
            "DiT heads must divide width (" + std::to_string(heads) + " vs " + std::to_string(width) + ")");
    require(!positional || width % 4 == 0, ErrorKind::InvalidArgument, "DiT width must be a multiple of 4 for positions");
    require(d > 0 && time_dim > 0 && time_dim % 2 == 0, ErrorKind::InvalidArgument, "invalid DiT d or time_dim");
    neighbor_count(hops);
    require(sampler == "ddim" || sampler == "ddpm", ErrorKind::InvalidArgument, "sampler must be 'ddim' or 'ddpm'");
    require(lr > 0.0 && epochs > 0 && batch > 0 && val_every > 0, ErrorKind::InvalidArgument,
            "lr, epochs, batch and val_every must be positive");
    require(lr_schedule == "constant" || lr_schedule == "cosine", ErrorKind::InvalidArgument,
            "lr_schedule must be 'constant' or 'cosine'");
    require(clip_x0 >= 0.0, ErrorKind::InvalidArgument, "clip_x0 must be non-negative");
    require(samples >= 1, ErrorKind::InvalidArgument, "samples must be at least 1");
    require(sampling_steps >= 1 && sampling_steps <= T, ErrorKind::InvalidArgument, "sampling_steps must lie in [1, T]");
}

json to_json(const DiTConfig& c) {
    return {{"layers", c.layers},       {"heads", c.heads},
            {"width", c.width},         {"d", c.d},
            {"hops", c.hops},           {"time_dim", c.time_dim},
            {"positional", c.positional}, {"mask_padding", c.mask_padding},
            {"center_context", c.center_context},
            {"T", c.T},                 {"s", c.s},
            {"clip", c.clip},           {"sampling_steps", c.sampling_steps},
            {"sampler", c.sampler},     {"clip_x0", c.clip_x0},
            {"samples", c.samples},
            {"lr", c.lr},               {"weight_decay", c.weight_decay},
            {"epochs", c.epochs},       {"batch", c.batch},
            {"lr_schedule", c.lr_schedule}, {"warmup_steps", c.warmup_steps},
            {"val_every", c.val_every}};
}

DiTConfig dit_config_from_json(const json& j, DiTConfig c) {
    for (const auto& [key, value] : j.items()) {
        if (key == "layers") c.layers = value.get<int>();
        else if (key == "heads") c.heads = value.get<int>();
        else if (key == "width") c.width = value.get<int>();
        else if (key == "d") c.d = value.get<std::size_t>();
        else if (key == "hops") c.hops = value.get<int>();
        else if (key == "time_dim") c.time_dim = value.get<int>();
        else if (key == "positional") c.positional = value.get<bool>();
        else if (key == "mask_padding") c.mask_padding = value.get<bool>();
        else if (key == "center_context") c.center_context = value.get<bool>();
        else if (key == "T") c.T = value.get<int>();
        else if (key == "s") c.s = value.get<double>();
        else if (key == "clip") c.clip = value.get<double>();
        else if (key == "sampling_steps") c.sampling_steps = value.get<int>();
        else if (key == "sampler") c.sampler = value.get<std::string>();
        else if (key == "samples") c.samples = value.get<int>();
        else if (key == "clip_x0") c.clip_x0 = value.get<double>();
        else if (key == "lr") c.lr = value.get<double>();
        else if (key == "weight_decay") c.weight_decay = value.get<double>();
        else if (key == "epochs") c.epochs = value.get<int>();
        else if (key == "batch") c.batch = value.get<std::size_t>();
        else if (key == "lr_schedule") c.lr_schedule = value.get<std::string>();
        else if (key == "warmup_steps") c.warmup_steps = value.get<int>();
        else if (key == "val_every") c.val_every = value.get<int>();
        else fail(ErrorKind::InvalidArgument, "unknown diffusion config key '" + key + "'");
    }
    return c;
}

DiT::DiT(DiTConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    const Eigen::Index w = config_.width;
    const auto d = static_cast<Eigen::Index>(config_.d);
    token_proj_ = nn::Linear(params_, "dit.token_proj", 2 * d, w, derive_key(init_seed, 1));
    time_fc1_ = nn::Linear(params_, "dit.time.fc1", config_.time_dim, w, derive_key(init_seed, 2));
    time_fc2_ = nn::Linear(params_, "dit.time.fc2", w, w, derive_key(init_seed, 3));
    for (int l = 0; l < config_.layers; ++l) {
        blocks_.emplace_back(params_, "dit.block" + std::to_string(l), w, config_.heads,
                             derive_key(init_seed, 4, static_cast<std::uint64_t>(l)));
    }
    final_modulation_ = nn::Linear(params_, "dit.final.adaln", w, 2 * w, derive_key(init_seed, 5), true);
    head_ = nn::Linear(params_, "dit.final.head", w, d, derive_key(init_seed, 6), true);

    const auto T = static_cast<Eigen::Index>(config_.tokens());
    slot_encoding_ = Matrix::Zero(T, w);
    if (config_.positional && config_.hops > 0) {
        const SpotCoord origin{0, 0};
        const auto offsets = hex_neighbors(origin, config_.hops);
        slot_encoding_.row(0) = nn::sincos_2d_positional_encoding(0, 0, w);
        for (std::size_t k = 0; k < offsets.size(); ++k) {
            slot_encoding_.row(static_cast<Eigen::Index>(k + 1)) =
                nn::sincos_2d_positional_encoding(offsets[k].row, offsets[k].col, w);
        }
    }
}

nn::Var DiT::forward(const nn::Var& noisy, const Matrix& condition, std::span<const int> t,
                     std::span<const std::uint8_t> key_valid) const {
    const auto T = static_cast<Eigen::Index>(config_.tokens());
    const auto d = static_cast<Eigen::Index>(config_.d);
    const auto B = static_cast<Eigen::Index>(t.size());
    require(noisy.rows() == B * T && noisy.cols() == d, ErrorKind::ShapeMismatch,
            "DiT input must be (batch * " + std::to_string(T) + ") x " + std::to_string(d));
    require(condition.rows() == noisy.rows() && condition.cols() == d, ErrorKind::ShapeMismatch,
            "DiT condition shape differs from the noisy input");
    Matrix freq(B, config_.time_dim);
    for (Eigen::Index b = 0; b < B; ++b) {
        require(t[static_cast<std::size_t>(b)] >= 0 && t[static_cast<std::size_t>(b)] <= config_.T, ErrorKind::OutOfRange,
                "DiT timestep out of range");
        freq.row(b) = nn::timestep_frequency_embedding(t[static_cast<std::size_t>(b)], config_.time_dim);
    }
    const nn::Var c = time_fc2_(nn::silu(time_fc1_(nn::constant(std::move(freq)))));

    nn::Var h = token_proj_(nn::concat_cols(noisy, nn::constant(condition)));
    if (config_.positional && config_.hops > 0) {
        Matrix pos(B * T, config_.width);
        for (Eigen::Index b = 0; b < B; ++b) {
            pos.middleRows(b * T, T) = slot_encoding_;
        }
        h = nn::add(h, nn::constant(std::move(pos)));
    }
    const std::span<const std::uint8_t> mask = config_.mask_padding ? key_valid : std::span<const std::uint8_t>{};
    nn::ForwardContext ctx;
    for (const auto& block : blocks_) {
        h = block(h, c, T, mask, ctx);
    }
    const nn::Var center = nn::strided_rows(h, T);
    const nn::Var mod = final_modulation_(nn::silu(c));
    const nn::Var shifted = nn::modulate(nn::layer_norm(center, 1e-6), nn::slice_cols(mod, 0, config_.width),
                                         nn::slice_cols(mod, config_.width, config_.width), 1);
    return head_(shifted);
}

Matrix DiT::predict(const Matrix& noisy, const Matrix& condition, std::span<const int> t,
                    std::span<const std::uint8_t> key_valid) const {
    nn::NoGradGuard guard;
    return forward(nn::constant(noisy), condition, t, key_valid).value();
}

void DiT::save_into(nn::Checkpoint& ckpt) const {
    ckpt.kind = "dit";
    ckpt.config = to_json(config_);
    nn::export_parameters(params_, ckpt);
}

DiT DiT::from_checkpoint(const nn::Checkpoint& ckpt) {
    require(ckpt.kind == "dit", ErrorKind::Checkpoint, "expected a diffusion checkpoint, found '" + ckpt.kind + "'");
    DiT model(dit_config_from_json(ckpt.config));
    nn::import_parameters(ckpt, model.params_);
    return model;
}

} // namespace lgdist
