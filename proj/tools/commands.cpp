#include "commands.hpp"

#include "lgdist/dataset.hpp"
#include "lgdist/diffusion/pipeline.hpp"
#include "lgdist/digest.hpp"
#include "lgdist/error.hpp"
#include "lgdist/nn/checkpoint.hpp"
#include "lgdist/plot.hpp"
#include "lgdist/rng.hpp"

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

namespace lgdist::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string path_arg(const Invocation& inv, const std::string& key) {
    require(inv.arguments.contains(key) && inv.arguments.at(key).is_string() &&
                !inv.arguments.at(key).get<std::string>().empty(),
            ErrorKind::InvalidArgument, "missing required argument --" + key);
    return inv.arguments.at(key).get<std::string>();
}

std::string optional_arg(const Invocation& inv, const std::string& key) {
    return inv.arguments.contains(key) && inv.arguments.at(key).is_string() ? inv.arguments.at(key).get<std::string>() : "";
}

fs::path existing(const std::string& path) {
    require(fs::exists(path), ErrorKind::Io, "missing input: " + path);
    return path;
}

fs::path output_dir(const Invocation& inv) {
    const fs::path out = path_arg(inv, "out");
    fs::create_directories(out);
    return out;
}

Manifest start_manifest(const Invocation& inv) {
    Manifest m;
    m.command = inv.command;
    m.arguments = inv.arguments;
    m.config = to_json(inv.config);
    return m;
}

std::vector<std::string> files_under(const fs::path& dir) {
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) {
            const auto rel = fs::relative(e.path(), dir).generic_string();
            if (rel != "manifest.json") {
                out.push_back(rel);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<const Slide*> pick_slides(const Dataset& ds, const std::string& which) {
    if (which == "all") {
        std::vector<const Slide*> out;
        for (const auto& s : ds.slides) {
            out.push_back(&s);
        }
        return out;
    }
    if (which == "train") return ds.split(ds.splits.train);
    if (which == "val") return ds.split(ds.splits.val);
    if (which == "test") return ds.split(ds.splits.test);
    fail(ErrorKind::InvalidArgument, "slides must be train, val, test or all, got '" + which + "'");
}

/// The genes a model was trained on, located in a dataset.
struct ModelPanel {
    GenePanel panel;
    std::vector<std::size_t> columns;
};

ModelPanel panel_for_genes(const Dataset& ds, const std::vector<std::string>& genes, std::size_t hsag_count) {
    const GenePanel& full = ds.require_panel();
    ModelPanel out;
    std::vector<double> scores;
    for (const auto& g : genes) {
        const auto col = full.column_of(g);
        require(col.has_value(), ErrorKind::Checkpoint, "model gene '" + g + "' is not in the dataset panel");
        out.columns.push_back(*col);
        scores.push_back(full.morans_i()[*col]);
    }
    out.panel = GenePanel(genes, scores, hsag_count);
    return out;
}

ModelPanel training_panel(const Dataset& ds, bool context_genes) {
    const GenePanel& full = ds.require_panel();
    const GenePanel p = context_genes ? full : full.hsag_only();
    return panel_for_genes(ds, p.names(), p.hsag_count());
}

ModelPanel checkpoint_panel(const Dataset& ds, const nn::Checkpoint& ck) {
    return panel_for_genes(ds, ck.extras.at("genes").get<std::vector<std::string>>(),
                           ck.extras.at("hsag_count").get<std::size_t>());
}

ExpressionMatrix select_columns(const ExpressionMatrix& m, const std::vector<std::size_t>& cols) {
    ExpressionMatrix out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        out.col(static_cast<Eigen::Index>(j)) = m.col(static_cast<Eigen::Index>(cols[j]));
    }
    return out;
}

/// Training inputs restricted to a model panel: slides for coordinates and
/// precompleted values for expression.
struct SplitValues {
    std::vector<const Slide*> slides;
    std::vector<ExpressionMatrix> values;

    std::vector<const ExpressionMatrix*> pointers() const {
        std::vector<const ExpressionMatrix*> out;
        for (const auto& v : values) {
            out.push_back(&v);
        }
        return out;
    }
};

SplitValues split_values(const Dataset& ds, const std::vector<std::string>& ids, const ModelPanel& mp) {
    SplitValues out;
    out.slides = ds.split(ids);
    for (const auto& id : ids) {
        const auto it = ds.precompleted.find(id);
        require(it != ds.precompleted.end(), ErrorKind::InvalidArgument,
                "slide '" + id + "' has no precompleted expression; run `lgdist preprocess` first");
        out.values.push_back(select_columns(it->second, mp.columns));
    }
    return out;
}

std::size_t center_blank(const DiTConfig& c, const GenePanel& panel) {
    return c.center_context ? panel.hsag_count() : AutoencoderCodec::kBlankAll;
}

/// A loaded diffusion model with its codec and the autoencoder backing it.
struct LoadedModel {
    nn::Checkpoint dit_ckpt;
    std::unique_ptr<DiffusionModel> model;
    std::unique_ptr<Autoencoder> ae;
    std::unique_ptr<LatentCodec> codec;
    ModelPanel panel;
    std::map<std::string, std::string> digests;
};

LoadedModel load_model(const Invocation& inv, const Dataset& ds) {
    LoadedModel lm;
    const fs::path dit_path = existing(path_arg(inv, "dit_ckpt"));
    lm.dit_ckpt = nn::load_checkpoint(dit_path);
    lm.model = std::make_unique<DiffusionModel>(diffusion_model_from_checkpoint(lm.dit_ckpt));
    lm.digests["dit_ckpt"] = sha256_file(dit_path);
    lm.panel = checkpoint_panel(ds, lm.dit_ckpt);
    if (lm.model->codec == "autoencoder") {
        const std::string ae_arg = optional_arg(inv, "ae_ckpt");
        require(!ae_arg.empty(), ErrorKind::Checkpoint, "this diffusion model needs --ae-ckpt");
        const fs::path ae_path = existing(ae_arg);
        lm.digests["ae_ckpt"] = sha256_file(ae_path);
        require(lm.dit_ckpt.extras.value("ae_digest", std::string{}) == lm.digests["ae_ckpt"], ErrorKind::Checkpoint,
                "autoencoder checkpoint " + ae_path.string() + " is not the one this diffusion model was trained on");
        lm.ae = std::make_unique<Autoencoder>(Autoencoder::from_checkpoint(nn::load_checkpoint(ae_path)));
        lm.codec = std::make_unique<AutoencoderCodec>(*lm.ae, center_blank(lm.model->dit.config(), lm.panel.panel));
    } else {
        lm.codec = std::make_unique<ExpressionCodec>(lm.panel.panel.size());
    }
    return lm;
}

void log_line(const Invocation& inv, const std::string& text) {
    if (inv.verbose) {
        std::cerr << text << '\n';
    }
}

json cmd_synth(const Invocation& inv) {
    const Dataset ds = generate_dataset(inv.config.synth);
    const fs::path out = output_dir(inv);
    save_dataset(ds, out);
    Manifest m = start_manifest(inv);
    write_manifest(out, m, files_under(out));
    return {{"slides", ds.slides.size()}, {"genes", ds.genes.size()}};
}

json cmd_preprocess(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset raw = load_dataset(dataset);
    const Dataset done = preprocess_dataset(raw, inv.config.preprocess);
    const fs::path out = output_dir(inv);
    save_dataset(done, out);
    write_manifest(out, m, files_under(out));
    return {{"genes", done.genes.size()}, {"hsag_count", done.panel->hsag_count()}};
}

json cmd_train_ae(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset ds = load_dataset(dataset);
    const ModelPanel mp = training_panel(ds, inv.config.context_genes);
    const SplitValues train = split_values(ds, ds.splits.train, mp);
    const SplitValues val = split_values(ds, ds.splits.val, mp);

    AEConfig cfg = inv.config.autoencoder;
    cfg.g = mp.panel.size();
    Autoencoder model(cfg, derive_key(inv.config.seed, 0x4145));
    const AETrainData data{train.slides, train.pointers(), val.slides, val.pointers()};
    const auto result = train_autoencoder(model, data, mp.panel, inv.config.seed, [&](const AEEpochLog& e) {
        log_line(inv, "ae epoch " + std::to_string(e.epoch) + " train " + format_double(e.train_loss) + " val " +
                          format_double(e.val_loss));
    });
    const fs::path out = output_dir(inv);
    nn::save_checkpoint(out / "ae.ckpt", model.to_checkpoint(mp.panel));
    write_text(out / "ae_trainlog.csv", format_ae_log(result.log));
    m.extra["best_epoch"] = result.best_epoch;
    write_manifest(out, m, {"ae.ckpt", "ae_trainlog.csv"});
    return {{"best_epoch", result.best_epoch}, {"best_val", result.best_val}};
}

json cmd_train_diffusion(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset ds = load_dataset(dataset);

    std::optional<Autoencoder> ae;
    ModelPanel mp;
    std::unique_ptr<LatentCodec> codec;
    std::string ae_digest;
    if (inv.config.latent) {
        const std::string ae_arg = optional_arg(inv, "ae_ckpt");
        require(!ae_arg.empty(), ErrorKind::Checkpoint, "latent diffusion needs --ae-ckpt (or pipeline.latent=false)");
        const fs::path ae_path = existing(ae_arg);
        ae_digest = sha256_file(ae_path);
        m.inputs["ae_ckpt"] = ae_digest;
        const auto ck = nn::load_checkpoint(ae_path);
        ae.emplace(Autoencoder::from_checkpoint(ck));
        mp = checkpoint_panel(ds, ck);
        codec = std::make_unique<AutoencoderCodec>(*ae, center_blank(inv.config.diffusion, mp.panel));
    } else {
        mp = training_panel(ds, inv.config.context_genes);
        codec = std::make_unique<ExpressionCodec>(mp.panel.size());
    }
    const SplitValues train = split_values(ds, ds.splits.train, mp);
    const SplitValues val = split_values(ds, ds.splits.val, mp);

    DiTConfig cfg = inv.config.diffusion;
    cfg.d = codec->width();
    DiT dit(cfg, derive_key(inv.config.seed, 0x444954));
    const auto result = train_diffusion(dit, *codec, SlideSet{train.slides, train.pointers()},
                                        SlideSet{val.slides, val.pointers()}, inv.config.seed, [&](const DiffusionEpochLog& e) {
                                            log_line(inv, "diffusion epoch " + std::to_string(e.epoch) + " train " +
                                                              format_double(e.train_loss) + " val " +
                                                              format_double(e.val_loss));
                                        });
    DiffusionModel model{std::move(dit), cfg.schedule(), result.latent_scale, codec->kind()};
    auto ck = diffusion_checkpoint(model, mp.panel);
    if (!ae_digest.empty()) {
        ck.extras["ae_digest"] = ae_digest;
    }
    const fs::path out = output_dir(inv);
    nn::save_checkpoint(out / "dit.ckpt", ck);
    write_text(out / "dit_trainlog.csv", format_diffusion_log(result.log));
    m.extra["best_epoch"] = result.best_epoch;
    m.extra["latent_scale"] = result.latent_scale;
    m.extra["schedule_digest"] = model.schedule.digest();
    write_manifest(out, m, {"dit.ckpt", "dit_trainlog.csv"});
    return {{"best_epoch", result.best_epoch}, {"best_val", result.best_val}, {"latent_scale", result.latent_scale}};
}

/// Targets per slide id from a CSV with header slide,spot,gene.
std::map<std::string, std::vector<TargetEntry>> read_targets(const fs::path& file, const ModelPanel& mp) {
    std::istringstream in(read_text(file));
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && line == "slide,spot,gene", ErrorKind::Format,
            "targets file must start with the header 'slide,spot,gene'");
    std::map<std::string, std::vector<TargetEntry>> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        const auto a = line.find(',');
        const auto b = line.find(',', a == std::string::npos ? a : a + 1);
        require(a != std::string::npos && b != std::string::npos, ErrorKind::Format,
                "targets row " + std::to_string(row) + " needs three fields");
        const std::string gene = line.substr(b + 1);
        const auto col = mp.panel.column_of(gene);
        require(col.has_value(), ErrorKind::OutOfRange, "target gene '" + gene + "' is not in the model panel");
        std::size_t spot = 0;
        try {
            spot = std::stoul(line.substr(a + 1, b - a - 1));
        } catch (const std::exception&) {
            fail(ErrorKind::Format, "targets row " + std::to_string(row) + " has a non-numeric spot");
        }
        out[line.substr(0, a)].push_back({spot, *col});
    }
    return out;
}

json cmd_complete(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset ds = load_dataset(dataset);
    const LoadedModel lm = load_model(inv, ds);
    for (const auto& [k, v] : lm.digests) {
        m.inputs[k] = v;
    }
    const std::string targets_arg = path_arg(inv, "targets");
    std::map<std::string, std::vector<TargetEntry>> from_file;
    const bool dropout = targets_arg == "dropout";
    if (!dropout) {
        m.inputs["targets"] = input_digest(existing(targets_arg));
        from_file = read_targets(targets_arg, lm.panel);
    }
    const bool keep_cgs = inv.arguments.value("keep_cgs", false);
    const SamplerOptions sampler = sampler_options(lm.model->dit.config());

    const fs::path out = output_dir(inv);
    fs::create_directories(out / "completed");
    json report = {{"schedule_digest", lm.model->schedule.digest()},
                   {"checkpoints", lm.digests},
                   {"seed", inv.config.seed},
                   {"keep_cgs", keep_cgs},
                   {"slides", json::object()}};
    std::vector<std::string> files;
    std::size_t total = 0;
    std::vector<std::string> out_genes;
    for (const Slide* s : pick_slides(ds, inv.config.slides)) {
        const Slide restricted = s->select_genes(lm.panel.columns);
        const auto targets = dropout ? dropout_targets(restricted) : from_file[s->id()];
        CompletionOptions options;
        options.seed = derive_key(inv.config.seed, 0x434d50, ds.slide_index(s->id()));
        options.keep_cgs = keep_cgs;
        options.sampler = sampler;
        const auto result = complete_slide(restricted, lm.panel.panel, *lm.codec, *lm.model, targets, options);
        const std::string file = "completed/" + s->id() + ".f32";
        write_f32_matrix(out / file, result.expression);
        files.push_back(file);
        json filled = json::array();
        for (const auto& e : result.filled) {
            filled.push_back({e.spot, lm.panel.panel.names()[e.gene]});
        }
        report["slides"][s->id()] = {{"seed", options.seed},
                                     {"spots", restricted.spot_count()},
                                     {"sampled_spots", result.sampled_spots},
                                     {"filled", filled}};
        total += result.filled.size();
        out_genes = result.genes;
    }
    std::string genes_csv = "index,name\n";
    for (std::size_t i = 0; i < out_genes.size(); ++i) {
        genes_csv += std::to_string(i) + "," + out_genes[i] + "\n";
    }
    write_text(out / "completed/genes.csv", genes_csv);
    write_text(out / "completion_manifest.json", report.dump(2) + "\n");
    files.insert(files.begin(), {"completed/genes.csv", "completion_manifest.json"});
    write_manifest(out, m, files);
    return {{"filled", total}, {"slides", report["slides"].size()}};
}

json evaluation_json(const EvaluationResult& r) {
    json seeds = json::array();
    for (const auto& s : r.seeds) {
        seeds.push_back({{"seed", s.seed}, {"mse", s.mse}, {"pcc", s.pcc}, {"gene_pcc", s.gene_pcc}, {"n", s.n_evaluated}});
    }
    return {{"mse", r.mean_mse}, {"mse_std", r.std_mse}, {"pcc", r.mean_pcc}, {"gene_pcc", r.mean_gene_pcc}, {"seeds", seeds}};
}

/// Evaluation slides restricted to the model panel.
struct EvalSlides {
    std::vector<Slide> owned;
    std::vector<const Slide*> pointers;
};

EvalSlides eval_slides(const Dataset& ds, const Invocation& inv, const ModelPanel& mp) {
    EvalSlides out;
    for (const Slide* s : pick_slides(ds, inv.config.slides)) {
        out.owned.push_back(s->select_genes(mp.columns));
    }
    for (const auto& s : out.owned) {
        out.pointers.push_back(&s);
    }
    return out;
}

json cmd_evaluate(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset ds = load_dataset(dataset);
    const LoadedModel lm = load_model(inv, ds);
    for (const auto& [k, v] : lm.digests) {
        m.inputs[k] = v;
    }
    const EvalSlides slides = eval_slides(ds, inv, lm.panel);
    const SamplerOptions sampler = sampler_options(lm.model->dit.config());
    const auto model = evaluate_completer(slides.pointers, lm.panel.panel.hsag_count(),
                                          diffusion_completer(lm.panel.panel, *lm.codec, *lm.model, sampler),
                                          inv.config.evaluation);
    const auto baseline =
        evaluate_completer(slides.pointers, lm.panel.panel.hsag_count(), median_completer(), inv.config.evaluation);
    const json metrics = {{"fraction", inv.config.evaluation.fraction},
                          {"scope", to_string(inv.config.evaluation.scope)},
                          {"slides", inv.config.slides},
                          {"model", evaluation_json(model)},
                          {"median_baseline", evaluation_json(baseline)},
                          {"mse_reduction", 1.0 - model.mean_mse / baseline.mean_mse}};
    const fs::path out = output_dir(inv);
    write_text(out / "metrics.json", metrics.dump(2) + "\n");
    std::string csv = "slide,spot,gene,truth,predicted,median\n";
    std::vector<double> truth;
    std::vector<double> predicted;
    for (std::size_t i = 0; i < model.first_seed_entries.size(); ++i) {
        const auto& e = model.first_seed_entries[i];
        const auto& b = baseline.first_seed_entries[i];
        csv += slides.owned[e.slide].id() + "," + std::to_string(e.entry.spot) + "," +
               lm.panel.panel.names()[e.entry.gene] + "," + format_double(e.truth) + "," + format_double(e.predicted) + "," +
               format_double(b.predicted) + "\n";
        truth.push_back(e.truth);
        predicted.push_back(e.predicted);
    }
    write_text(out / "predictions.csv", csv);
    write_text(out / "scatter.svg", svg_scatter(truth, predicted, "completed vs truth"));
    write_manifest(out, m, {"metrics.json", "predictions.csv", "scatter.svg"});
    return {{"model_mse", model.mean_mse}, {"median_mse", baseline.mean_mse}, {"mse_reduction", metrics["mse_reduction"]}};
}

json cmd_robustness(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset ds = load_dataset(dataset);
    const LoadedModel lm = load_model(inv, ds);
    for (const auto& [k, v] : lm.digests) {
        m.inputs[k] = v;
    }
    const EvalSlides slides = eval_slides(ds, inv, lm.panel);
    const SamplerOptions sampler = sampler_options(lm.model->dit.config());
    const auto& cfg = inv.config;
    const auto model = robustness_sweep(slides.pointers, lm.panel.panel.hsag_count(), cfg.sweep_fractions,
                                        diffusion_completer(lm.panel.panel, *lm.codec, *lm.model, sampler),
                                        cfg.evaluation.seeds, cfg.evaluation.scope);
    const auto baseline = robustness_sweep(slides.pointers, lm.panel.panel.hsag_count(), cfg.sweep_fractions,
                                           median_completer(), cfg.evaluation.seeds, cfg.evaluation.scope);
    const fs::path out = output_dir(inv);
    write_text(out / "sweep.csv", format_sweep_csv(model));
    write_text(out / "sweep_baseline.csv", format_sweep_csv(baseline));
    write_text(out / "sweep.svg", svg_sweep_lines({{"diffusion", model}, {"median", baseline}}, "MSE by masked fraction"));
    write_manifest(out, m, {"sweep.csv", "sweep_baseline.csv", "sweep.svg"});
    return {{"fractions", model.size()},
            {"model_increase", model.back().mean_mse - model.front().mean_mse},
            {"median_increase", baseline.back().mean_mse - baseline.front().mean_mse}};
}

json cmd_ablation(const Invocation& inv) {
    const fs::path dataset = existing(path_arg(inv, "dataset"));
    Manifest m = start_manifest(inv);
    m.inputs["dataset"] = input_digest(dataset);
    const Dataset ds = load_dataset(dataset);
    const auto& specs = inv.arguments.at("variants");
    require(specs.is_array() && !specs.empty(), ErrorKind::InvalidArgument, "ablation needs at least one --variant");

    // Every variant is scored on the dataset's HSAG entries; each model sees
    // only its own panel columns.
    const auto slides = pick_slides(ds, inv.config.slides);
    std::vector<LoadedModel> models;
    std::vector<AblationVariant> variants;
    models.reserve(specs.size());
    for (const auto& v : specs) {
        Invocation sub = inv;
        sub.arguments = {{"dit_ckpt", v.at("dit_ckpt")}, {"ae_ckpt", v.value("ae_ckpt", "")}};
        models.push_back(load_model(sub, ds));
        const LoadedModel& lm = models.back();
        for (const auto& [k, d] : lm.digests) {
            m.inputs[v.at("name").get<std::string>() + "." + k] = d;
        }
        variants.push_back({v.at("name").get<std::string>(),
                            restrict_completer(diffusion_completer(lm.panel.panel, *lm.codec, *lm.model), lm.panel.columns)});
    }
    variants.push_back({"median", median_completer()});
    const auto rows = ablation_run(slides, ds.require_panel().hsag_count(), variants, inv.config.evaluation);
    const fs::path out = output_dir(inv);
    write_text(out / "ablation.csv", format_ablation_csv(rows));
    write_manifest(out, m, {"ablation.csv"});
    json summary = json::object();
    for (const auto& r : rows) {
        summary[r.variant] = r.mean_mse;
    }
    return summary;
}

json cmd_plot(const Invocation& inv) {
    const std::string kind = path_arg(inv, "kind");
    Manifest m = start_manifest(inv);
    std::string svg;
    if (kind == "scatter") {
        const fs::path input = existing(path_arg(inv, "input"));
        m.inputs["input"] = input_digest(input);
        std::istringstream in(read_text(input));
        std::string line;
        std::getline(in, line);
        std::vector<std::string> header;
        {
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) header.push_back(cell);
        }
        const auto t_col = std::find(header.begin(), header.end(), "truth") - header.begin();
        const auto p_col = std::find(header.begin(), header.end(), "predicted") - header.begin();
        require(t_col < static_cast<long>(header.size()) && p_col < static_cast<long>(header.size()), ErrorKind::Format,
                "scatter input needs 'truth' and 'predicted' columns");
        std::vector<double> truth;
        std::vector<double> predicted;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            require(cells.size() == header.size(), ErrorKind::Format, "ragged row in " + input.string());
            truth.push_back(parse_double(cells[static_cast<std::size_t>(t_col)]));
            predicted.push_back(parse_double(cells[static_cast<std::size_t>(p_col)]));
        }
        svg = svg_scatter(truth, predicted, "completed vs truth");
    } else if (kind == "sweep-line") {
        const auto& inputs = inv.arguments.at("inputs");
        require(inputs.is_array() && !inputs.empty(), ErrorKind::InvalidArgument, "sweep-line needs --input");
        std::vector<SweepSeries> series;
        for (const auto& i : inputs) {
            const fs::path p = existing(i.get<std::string>());
            m.inputs[p.filename().string()] = input_digest(p);
            series.push_back({p.stem().string(), parse_sweep_csv(read_text(p))});
        }
        svg = svg_sweep_lines(series, "MSE by masked fraction");
    } else if (kind == "expression-map") {
        const fs::path dataset = existing(path_arg(inv, "dataset"));
        const fs::path completion = existing(path_arg(inv, "completion"));
        m.inputs["dataset"] = input_digest(dataset);
        m.inputs["completion"] = input_digest(completion);
        const Dataset ds = load_dataset(dataset);
        const Slide& slide = ds.slide(path_arg(inv, "slide"));
        const std::string gene = path_arg(inv, "gene");
        const auto col = ds.require_panel().column_of(gene);
        require(col.has_value(), ErrorKind::OutOfRange, "gene '" + gene + "' is not in the dataset panel");
        // Completed columns are listed in completed/genes.csv.
        std::istringstream gin(read_text(completion / "completed/genes.csv"));
        std::string line;
        std::getline(gin, line);
        std::vector<std::string> names;
        while (std::getline(gin, line)) {
            if (!line.empty()) names.push_back(line.substr(line.find(',') + 1));
        }
        const auto it = std::find(names.begin(), names.end(), gene);
        require(it != names.end(), ErrorKind::Format, "gene '" + gene + "' was not written by the completion run");
        const fs::path file = completion / "completed" / (slide.id() + ".f32");
        const ExpressionMatrix done = read_f32_matrix(existing(file.string()), slide.spot_count(), names.size());
        const auto c = static_cast<Eigen::Index>(*col);
        const auto k = static_cast<Eigen::Index>(it - names.begin());
        MapPanel truth{"ground truth", {}};
        MapPanel masked{"observed", {}};
        MapPanel completed{"completed", {}};
        const auto gt = ds.ground_truth.find(slide.id());
        for (std::size_t s = 0; s < slide.spot_count(); ++s) {
            const auto r = static_cast<Eigen::Index>(s);
            truth.values.push_back(gt != ds.ground_truth.end() ? std::optional<double>(gt->second(r, c))
                                                               : std::optional<double>(slide.expression()(r, c)));
            masked.values.push_back(slide.observed(s, *col) ? std::optional<double>(slide.expression()(r, c)) : std::nullopt);
            completed.values.push_back(done(r, k));
        }
        svg = svg_expression_maps(slide.coords(), {truth, masked, completed}, slide.id() + " / " + gene);
    } else {
        fail(ErrorKind::InvalidArgument, "plot kind must be expression-map, scatter or sweep-line, got '" + kind + "'");
    }
    const std::string name = kind + ".svg";
    const fs::path out = output_dir(inv);
    write_text(out / name, svg);
    write_manifest(out, m, {name});
    return {{"file", (out / name).string()}};
}

} // namespace

json execute(const Invocation& inv) {
    if (inv.command == "synth") return cmd_synth(inv);
    if (inv.command == "preprocess") return cmd_preprocess(inv);
    if (inv.command == "train-ae") return cmd_train_ae(inv);
    if (inv.command == "train-diffusion") return cmd_train_diffusion(inv);
    if (inv.command == "complete") return cmd_complete(inv);
    if (inv.command == "evaluate") return cmd_evaluate(inv);
    if (inv.command == "robustness") return cmd_robustness(inv);
    if (inv.command == "ablation") return cmd_ablation(inv);
    if (inv.command == "plot") return cmd_plot(inv);
    fail(ErrorKind::InvalidArgument, "unknown command '" + inv.command + "'");
}

json rerun(const fs::path& manifest_path, const fs::path& out, bool verify) {
    const Manifest recorded = read_manifest(existing(manifest_path.string()));
    Invocation inv;
    inv.command = recorded.command;
    inv.arguments = recorded.arguments;
    inv.arguments["out"] = out.string();
    inv.config = run_config_from_json(recorded.config);
    const json summary = execute(inv);
    json mismatched = json::array();
    json changed_inputs = json::array();
    const Manifest fresh = read_manifest(out / "manifest.json");
    for (const auto& [name, digest] : recorded.inputs) {
        const auto it = fresh.inputs.find(name);
        if (it == fresh.inputs.end() || it->second != digest) {
            changed_inputs.push_back(name);
        }
    }
    if (verify) {
        for (const auto& [file, digest] : recorded.outputs) {
            const fs::path p = out / file;
            if (!fs::exists(p) || sha256_file(p) != digest) {
                mismatched.push_back(file);
            }
        }
        require(mismatched.empty(), ErrorKind::Format,
                "rerun outputs differ from the manifest: " + mismatched.dump() +
                    (changed_inputs.empty() ? "" : "; changed inputs: " + changed_inputs.dump()));
    }
    return {{"command", inv.command},
            {"verified", verify},
            {"outputs", recorded.outputs.size()},
            {"changed_inputs", changed_inputs},
            {"summary", summary}};
}

} // namespace lgdist::cli
