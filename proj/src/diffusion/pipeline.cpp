#include "lgdist/diffusion/pipeline.hpp"

#include "lgdist/error.hpp"
#include "lgdist/nn/optim.hpp"
#include "lgdist/parallel.hpp"
#include "lgdist/preprocess.hpp"
#include "lgdist/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace lgdist {

namespace {

constexpr std::size_t kEncodeChunk = 512;

NeighborhoodBatch neighborhoods_for(const Slide& slide, const ExpressionMatrix& values, std::span<const std::size_t> spots,
                                    int hops) {
    std::vector<Neighborhood> items;
    items.reserve(spots.size());
    for (const auto s : spots) {
        items.push_back(build_neighborhood(slide, values, s, hops));
    }
    return stack_neighborhoods(items);
}

void zero_center_rows(Matrix& m, Eigen::Index tokens) {
    for (Eigen::Index r = 0; r < m.rows(); r += tokens) {
        m.row(r).setZero();
    }
}

Matrix with_centers(const Matrix& condition, const Matrix& centers, Eigen::Index tokens) {
    Matrix out = condition;
    for (Eigen::Index b = 0; b < centers.rows(); ++b) {
        out.row(b * tokens) = centers.row(b);
    }
    return out;
}

} // namespace

Matrix AutoencoderCodec::encode_centers(const Slide& slide, const ExpressionMatrix& values,
                                        std::span<const std::size_t> spots) const {
    const auto batch = neighborhoods_for(slide, values, spots, model_.config().hops);
    const Matrix latent = model_.encode(batch);
    const auto T = static_cast<Eigen::Index>(batch.tokens);
    Matrix out(static_cast<Eigen::Index>(spots.size()), latent.cols());
    for (Eigen::Index b = 0; b < out.rows(); ++b) {
        out.row(b) = latent.row(b * T);
    }
    return out;
}

Matrix AutoencoderCodec::encode_condition(const NeighborhoodBatch& batch) const {
    const auto T = static_cast<Eigen::Index>(batch.tokens);
    if (T == 1) {
        return Matrix::Zero(batch.X.rows(), static_cast<Eigen::Index>(width()));
    }
    NeighborhoodBatch blank = batch;
    const auto cols = static_cast<Eigen::Index>(std::min<std::size_t>(center_blank_, genes()));
    for (Eigen::Index r = 0; r < blank.X.rows(); r += T) {
        blank.X.row(r).head(cols).setZero();
    }
    Matrix latent = model_.encode(blank);
    zero_center_rows(latent, T);
    return latent;
}

Matrix ExpressionCodec::encode_centers(const Slide& slide, const ExpressionMatrix& values,
                                       std::span<const std::size_t> spots) const {
    require(static_cast<std::size_t>(values.cols()) == genes_, ErrorKind::ShapeMismatch, "expression width mismatch");
    (void)slide;
    Matrix out(static_cast<Eigen::Index>(spots.size()), values.cols());
    for (std::size_t i = 0; i < spots.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = values.row(static_cast<Eigen::Index>(spots[i])).cast<double>();
    }
    return out;
}

Matrix ExpressionCodec::encode_condition(const NeighborhoodBatch& batch) const {
    require(static_cast<std::size_t>(batch.X.cols()) == genes_, ErrorKind::ShapeMismatch, "expression width mismatch");
    Matrix out = batch.X;
    zero_center_rows(out, static_cast<Eigen::Index>(batch.tokens));
    return out;
}

std::size_t SlideSet::spot_count() const {
    std::size_t n = 0;
    for (const auto* s : slides) {
        n += s->spot_count();
    }
    return n;
}

LatentTrainingSet prepare_latents(const LatentCodec& codec, const SlideSet& set, int hops) {
    require(set.slides.size() == set.values.size(), ErrorKind::ShapeMismatch, "one value matrix is needed per slide");
    LatentTrainingSet out;
    out.tokens = static_cast<Eigen::Index>(neighbor_count(hops) + 1);
    const auto d = static_cast<Eigen::Index>(codec.width());
    const auto N = static_cast<Eigen::Index>(set.spot_count());
    out.x0.resize(N, d);
    out.condition.resize(N * out.tokens, d);
    out.valid.reserve(static_cast<std::size_t>(N * out.tokens));
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < set.slides.size(); ++i) {
        const Slide& slide = *set.slides[i];
        const ExpressionMatrix& values = *set.values[i];
        for (std::size_t start = 0; start < slide.spot_count(); start += kEncodeChunk) {
            std::vector<std::size_t> spots(std::min(kEncodeChunk, slide.spot_count() - start));
            std::iota(spots.begin(), spots.end(), start);
            const auto n = static_cast<Eigen::Index>(spots.size());
            out.x0.middleRows(row, n) = codec.encode_centers(slide, values, spots);
            const auto batch = neighborhoods_for(slide, values, spots, hops);
            out.condition.middleRows(row * out.tokens, n * out.tokens) = codec.encode_condition(batch);
            out.valid.insert(out.valid.end(), batch.valid.begin(), batch.valid.end());
            row += n;
        }
    }
    return out;
}

void apply_latent_scale(LatentTrainingSet& set, double scale) {
    set.x0 *= scale;
    set.condition *= scale;
}

double latent_scale_of(const Matrix& x0) {
    require(x0.size() > 1, ErrorKind::DegenerateInput, "latent scale needs at least two values");
    const double mean = x0.mean();
    const double var = (x0.array() - mean).square().sum() / static_cast<double>(x0.size());
    require(var > 0.0, ErrorKind::DegenerateInput, "latent rows have zero variance");
    return 1.0 / std::sqrt(var);
}

nn::Var diffusion_loss(const DiT& model, const DiffusionSchedule& schedule, const LatentTrainingSet& data,
                       std::span<const std::size_t> samples, std::span<const int> t, const Matrix& eps) {
    const Eigen::Index T = data.tokens;
    const auto B = static_cast<Eigen::Index>(samples.size());
    Matrix x0(B, data.x0.cols());
    Matrix condition(B * T, data.x0.cols());
    std::vector<std::uint8_t> valid;
    valid.reserve(static_cast<std::size_t>(B * T));
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto s = static_cast<Eigen::Index>(samples[static_cast<std::size_t>(b)]);
        x0.row(b) = data.x0.row(s);
        condition.middleRows(b * T, T) = data.condition.middleRows(s * T, T);
        valid.insert(valid.end(), data.valid.begin() + s * T, data.valid.begin() + (s + 1) * T);
    }
    const Matrix noisy = masked_forward(with_centers(condition, x0, T), T, t, eps, schedule);
    const nn::Var eps_hat = model.forward(nn::constant(noisy), condition, t, valid);
    return nn::weighted_mean_square(nn::sub(eps_hat, nn::constant(eps)), {}, {});
}

namespace {

void draw_noise(std::uint64_t key, const DiffusionSchedule& schedule, Eigen::Index width, int& t, Eigen::Ref<RowVector> eps) {
    CounterRng rng(key);
    t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(schedule.T)));
    for (Eigen::Index k = 0; k < width; ++k) {
        eps(k) = rng.normal();
    }
}

double validation_loss(const DiT& model, const DiffusionSchedule& schedule, const LatentTrainingSet& val, std::uint64_t seed) {
    nn::NoGradGuard guard;
    double total = 0.0;
    const auto d = val.x0.cols();
    for (std::size_t start = 0; start < val.size(); start += kEncodeChunk) {
        std::vector<std::size_t> idx(std::min(kEncodeChunk, val.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        std::vector<int> t(idx.size());
        Matrix eps(static_cast<Eigen::Index>(idx.size()), d);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            draw_noise(derive_key(seed, 0x56414c, idx[i]), schedule, d, t[i], eps.row(static_cast<Eigen::Index>(i)));
        }
        total += diffusion_loss(model, schedule, val, idx, t, eps).scalar() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(val.size());
}

} // namespace

DiffusionTrainResult train_diffusion(DiT& model, const LatentCodec& codec, const SlideSet& train, const SlideSet& val,
                                     std::uint64_t seed, const std::function<void(const DiffusionEpochLog&)>& on_epoch) {
    require(model.config().d == codec.width(), ErrorKind::ShapeMismatch,
            "DiT row width " + std::to_string(model.config().d) + " differs from the codec width " +
                std::to_string(codec.width()));
    LatentTrainingSet train_rows = prepare_latents(codec, train, model.config().hops);
    const double scale = latent_scale_of(train_rows.x0);
    apply_latent_scale(train_rows, scale);
    std::optional<LatentTrainingSet> val_rows;
    if (!val.slides.empty()) {
        val_rows = prepare_latents(codec, val, model.config().hops);
        apply_latent_scale(*val_rows, scale);
    }
    auto result = train_diffusion(model, train_rows, val_rows ? &*val_rows : nullptr, seed, on_epoch);
    result.latent_scale = scale;
    return result;
}

DiffusionTrainResult train_diffusion(DiT& model, const LatentTrainingSet& train, const LatentTrainingSet* val,
                                     std::uint64_t seed, const std::function<void(const DiffusionEpochLog&)>& on_epoch) {
    const DiTConfig& cfg = model.config();
    require(train.size() > 0, ErrorKind::InvalidArgument, "diffusion training needs at least one sample");
    require(train.tokens == static_cast<Eigen::Index>(cfg.tokens()), ErrorKind::ShapeMismatch,
            "training rows were prepared for a different neighborhood size");
    const DiffusionSchedule schedule = cfg.schedule();
    nn::ParameterSet& params = model.parameters();
    nn::AdamW opt(params, {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    const std::size_t N = train.size();
    const std::size_t steps_per_epoch = (N + cfg.batch - 1) / cfg.batch;
    const std::uint64_t total_steps = static_cast<std::uint64_t>(cfg.epochs) * steps_per_epoch;
    const auto d = train.x0.cols();

    DiffusionTrainResult result;
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
            std::vector<int> t(idx.size());
            Matrix eps(static_cast<Eigen::Index>(idx.size()), d);
            for (std::size_t i = 0; i < idx.size(); ++i) {
                draw_noise(derive_key(seed, 0x54, static_cast<std::uint64_t>(epoch), idx[i]), schedule, d, t[i],
                           eps.row(static_cast<Eigen::Index>(i)));
            }
            const nn::Var loss = diffusion_loss(model, schedule, train, idx, t, eps);
            const double value = loss.scalar();
            require(std::isfinite(value), ErrorKind::NonFinite,
                    "non-finite diffusion loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
            params.zero_grad();
            nn::backward(loss);
            opt.set_lr(scheduled_lr(cfg.lr, cfg.lr_schedule, cfg.warmup_steps, opt.steps(), total_steps));
            opt.step();
            epoch_loss += value * static_cast<double>(idx.size());
        }
        DiffusionEpochLog entry{epoch, epoch_loss / static_cast<double>(N), std::nan("")};
        const bool last = epoch + 1 == cfg.epochs;
        if (val && val->size() > 0 && ((epoch + 1) % cfg.val_every == 0 || last)) {
            entry.val_loss = validation_loss(model, schedule, *val, seed);
            if (result.best_epoch < 0 || entry.val_loss < result.best_val) {
                result.best_epoch = epoch;
                result.best_val = entry.val_loss;
                best.clear();
                for (const auto& p : params.items()) {
                    best.push_back(p.var.value());
                }
            }
        }
        result.log.push_back(entry);
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

std::string format_diffusion_log(const std::vector<DiffusionEpochLog>& log) {
    std::ostringstream out;
    out.precision(10);
    out << "epoch,train_loss,val_loss\n";
    for (const auto& e : log) {
        out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << '\n';
    }
    return out.str();
}

Matrix ddim_step(const Matrix& x_t, const Matrix& eps_hat, int t, int t_prev, const DiffusionSchedule& schedule,
                 double clip_x0) {
    require(t >= 1 && t <= schedule.T && t_prev >= 0 && t_prev < t, ErrorKind::OutOfRange, "invalid DDIM step");
    const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
    const double ab_prev = schedule.alpha_bar[static_cast<std::size_t>(t_prev)];
    Matrix x0 = (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
    if (clip_x0 > 0.0) {
        x0 = x0.cwiseMax(-clip_x0).cwiseMin(clip_x0);
    }
    if (t_prev == 0) {
        return x0;
    }
    return std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps_hat;
}

Matrix initial_noise(std::span<const std::uint64_t> sample_keys, Eigen::Index width) {
    Matrix x(static_cast<Eigen::Index>(sample_keys.size()), width);
    for (std::size_t b = 0; b < sample_keys.size(); ++b) {
        CounterRng rng(derive_key(sample_keys[b], 0x494e4954));
        for (Eigen::Index k = 0; k < width; ++k) {
            x(static_cast<Eigen::Index>(b), k) = rng.normal();
        }
    }
    return x;
}

Matrix run_sampler(const Denoiser& denoiser, const DiffusionSchedule& schedule, Matrix x, const SamplerOptions& options,
                   std::span<const std::uint64_t> sample_keys) {
    require(options.kind == "ddim" || options.kind == "ddpm", ErrorKind::InvalidArgument, "sampler must be 'ddim' or 'ddpm'");
    require(options.kind == "ddim" || sample_keys.size() == static_cast<std::size_t>(x.rows()), ErrorKind::InvalidArgument,
            "the ancestral sampler needs one key per sample");
    const auto& ts = schedule.sampling_timesteps;
    require(!ts.empty(), ErrorKind::InvalidArgument, "schedule has no sampling timesteps");
    for (std::size_t i = ts.size(); i-- > 0;) {
        const int t = ts[i];
        const int t_prev = i > 0 ? ts[i - 1] : 0;
        const Matrix eps = denoiser(x, t);
        require(eps.rows() == x.rows() && eps.cols() == x.cols(), ErrorKind::ShapeMismatch, "denoiser output shape mismatch");
        if (options.kind == "ddim" || t_prev == 0) {
            x = ddim_step(x, eps, t, t_prev, schedule, options.clip_x0);
            continue;
        }
        const double ab = schedule.alpha_bar[static_cast<std::size_t>(t)];
        const double ab_prev = schedule.alpha_bar[static_cast<std::size_t>(t_prev)];
        const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
        Matrix x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        if (options.clip_x0 > 0.0) {
            x0 = x0.cwiseMax(-options.clip_x0).cwiseMin(options.clip_x0);
        }
        const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
        Matrix next = std::sqrt(ab_prev) * x0 + dir * eps;
        for (Eigen::Index b = 0; b < x.rows(); ++b) {
            CounterRng rng(derive_key(sample_keys[static_cast<std::size_t>(b)], 0x5354, i));
            for (Eigen::Index k = 0; k < x.cols(); ++k) {
                next(b, k) += sigma * rng.normal();
            }
        }
        x = std::move(next);
    }
    return x;
}

Matrix sample_center(const DiT& model, const DiffusionSchedule& schedule, const Matrix& condition,
                     std::span<const std::uint8_t> valid, std::span<const std::uint64_t> sample_keys,
                     const SamplerOptions& options) {
    const auto T = static_cast<Eigen::Index>(model.config().tokens());
    const auto B = static_cast<Eigen::Index>(sample_keys.size());
    require(condition.rows() == B * T && condition.cols() == static_cast<Eigen::Index>(model.config().d),
            ErrorKind::ShapeMismatch, "condition shape does not match the sample count");
    require(schedule.T == model.config().T, ErrorKind::Checkpoint, "schedule length differs from the model's T");
    const Denoiser denoiser = [&](const Matrix& x_t, int t) {
        const std::vector<int> ts(static_cast<std::size_t>(B), t);
        return model.predict(with_centers(condition, x_t, T), condition, ts, valid);
    };
    return run_sampler(denoiser, schedule, initial_noise(sample_keys, condition.cols()), options, sample_keys);
}

nn::Checkpoint diffusion_checkpoint(const DiffusionModel& model, const GenePanel& panel) {
    nn::Checkpoint ck;
    model.dit.save_into(ck);
    ck.extras["latent_scale"] = model.latent_scale;
    ck.extras["codec"] = model.codec;
    ck.extras["schedule_digest"] = model.schedule.digest();
    ck.extras["genes"] = panel.names();
    ck.extras["hsag_count"] = panel.hsag_count();
    return ck;
}

DiffusionModel diffusion_model_from_checkpoint(const nn::Checkpoint& ckpt) {
    DiffusionModel m{DiT::from_checkpoint(ckpt), {}, 1.0, "autoencoder"};
    m.schedule = m.dit.config().schedule();
    m.latent_scale = ckpt.extras.at("latent_scale").get<double>();
    m.codec = ckpt.extras.at("codec").get<std::string>();
    require(ckpt.extras.value("schedule_digest", std::string{}) == m.schedule.digest(), ErrorKind::Checkpoint,
            "checkpoint schedule digest does not match its configuration");
    return m;
}

std::vector<TargetEntry> dropout_targets(const Slide& slide) {
    std::vector<TargetEntry> out;
    for (std::size_t s = 0; s < slide.spot_count(); ++s) {
        for (std::size_t g = 0; g < slide.gene_count(); ++g) {
            if (!slide.observed(s, g)) {
                out.push_back({s, g});
            }
        }
    }
    return out;
}

SamplerOptions sampler_options(const DiTConfig& config) {
    return {config.sampler, config.clip_x0, config.samples};
}

CompletionResult complete_slide(const Slide& slide, const GenePanel& panel, const LatentCodec& codec,
                                const DiffusionModel& model, std::span<const TargetEntry> targets,
                                const CompletionOptions& options) {
    require(slide.gene_count() == panel.size(), ErrorKind::ShapeMismatch,
            "slide '" + slide.id() + "' is not restricted to the gene panel");
    require(codec.genes() == panel.size(), ErrorKind::ShapeMismatch, "codec gene count differs from the panel");
    require(model.dit.config().d == codec.width(), ErrorKind::Checkpoint, "diffusion model and codec widths differ");
    require(options.sampler.samples >= 1, ErrorKind::InvalidArgument, "samples per spot must be at least 1");
    for (const auto& e : targets) {
        require(e.spot < slide.spot_count(), ErrorKind::OutOfRange,
                "target spot " + std::to_string(e.spot) + " out of range for slide '" + slide.id() + "'");
        require(e.gene < panel.size(), ErrorKind::OutOfRange, "target gene " + std::to_string(e.gene) + " is not in the panel");
    }
    const std::set<TargetEntry> unique(targets.begin(), targets.end());

    CompletionResult result;
    result.filled.assign(unique.begin(), unique.end());
    ExpressionMatrix out = slide.expression();
    if (!unique.empty()) {
        MaskMatrix hidden = slide.observed_mask();
        std::vector<std::size_t> spots;
        for (const auto& e : unique) {
            hidden(static_cast<Eigen::Index>(e.spot), static_cast<Eigen::Index>(e.gene)) = 0;
            if (spots.empty() || spots.back() != e.spot) {
                spots.push_back(e.spot);
            }
        }
        const ExpressionMatrix context = median_precomplete(slide.with_mask(hidden)).expression();
        const int hops = model.dit.config().hops;
        const std::size_t chunks = (spots.size() + options.chunk - 1) / options.chunk;
        std::vector<Matrix> generated(chunks);
        parallel_for(chunks, [&](std::size_t c) {
            const std::span<const std::size_t> part(spots.data() + c * options.chunk,
                                                    std::min(options.chunk, spots.size() - c * options.chunk));
            const auto batch = neighborhoods_for(slide, context, part, hops);
            const Matrix condition = codec.encode_condition(batch) * model.latent_scale;
            Matrix sum;
            for (int k = 0; k < options.sampler.samples; ++k) {
                std::vector<std::uint64_t> keys;
                for (const auto s : part) {
                    keys.push_back(k == 0 ? derive_key(options.seed, 0x535054, s)
                                          : derive_key(options.seed, 0x535054, s, static_cast<std::uint64_t>(k)));
                }
                const Matrix z = sample_center(model.dit, model.schedule, condition, batch.valid, keys, options.sampler);
                const Matrix x = codec.decode(z / model.latent_scale);
                sum = k == 0 ? x : Matrix(sum + x);
            }
            generated[c] = sum / options.sampler.samples;
        });
        std::size_t row = 0;
        std::size_t spot_row = 0;
        for (const auto& e : unique) {
            while (spots[spot_row] != e.spot) {
                ++spot_row;
            }
            row = spot_row;
            const Matrix& g = generated[row / options.chunk];
            out(static_cast<Eigen::Index>(e.spot), static_cast<Eigen::Index>(e.gene)) =
                static_cast<float>(g(static_cast<Eigen::Index>(row % options.chunk), static_cast<Eigen::Index>(e.gene)));
        }
        result.sampled_spots = spots.size();
    }
    const std::size_t keep = options.keep_cgs ? panel.size() : panel.hsag_count();
    result.expression = out.leftCols(static_cast<Eigen::Index>(keep));
    result.genes.assign(panel.names().begin(), panel.names().begin() + static_cast<std::ptrdiff_t>(keep));
    return result;
}

} // namespace lgdist
