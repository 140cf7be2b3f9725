#include "sigan/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <set>

#include "sigan/dataset.hpp"
#include "sigan/util/hash.hpp"

namespace sigan::train {

using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    if (epochs <= 0) throw ConfigError("epochs must be positive");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (checkpoint_every < 0 || log_every < 0 || max_steps < 0) {
        throw ConfigError("checkpoint_every, log_every and max_steps must be non-negative");
    }
    if (!(train_fraction > 0 && train_fraction < 1)) throw ConfigError("train_fraction must lie strictly in (0, 1)");
    if (discriminator_every < 1) throw ConfigError("discriminator_every must be at least 1");
    weights.validate();
    effective_model().validate();
}

double TrainConfig::effective_grad_clip() const {
    if (grad_clip >= 0) return grad_clip;
    return model.image_side < 128 ? 10.0 : 0.0;
}

ModelConfig TrainConfig::effective_model() const {
    ModelConfig m = model;
    m.ablation = flags;
    return m;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"epochs", c.epochs},
         {"batch_size", c.batch_size},
         {"learning_rate", c.learning_rate},
         {"adam_betas", {c.adam_beta1, c.adam_beta2}},
         {"weights", c.weights},
         {"flags", c.flags},
         {"seed", c.seed},
         {"checkpoint_every", c.checkpoint_every},
         {"log_every", c.log_every},
         {"grad_clip", c.grad_clip},
         {"discriminator_first", c.discriminator_first},
         {"discriminator_every", c.discriminator_every},
         {"max_steps", c.max_steps},
         {"train_on_all", c.train_on_all},
         {"train_fraction", c.train_fraction},
         {"perceptual_seed", c.perceptual_seed},
         {"model", c.effective_model()}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    static const std::set<std::string> known = {
        "epochs",       "batch_size", "learning_rate",  "adam_betas",     "weights",
        "flags",        "seed",       "checkpoint_every", "log_every",    "grad_clip",
        "discriminator_first", "discriminator_every", "max_steps", "train_on_all", "train_fraction", "perceptual_seed",
        "model"};
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw ConfigError("unknown training config key '" + k + "'");
    }
    try {
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        if (j.contains("adam_betas")) {
            const auto b = j.at("adam_betas").get<std::vector<double>>();
            if (b.size() != 2) throw ConfigError("adam_betas must be [beta1, beta2]");
            c.adam_beta1 = b[0];
            c.adam_beta2 = b[1];
        }
        if (j.contains("weights")) c.weights = j.at("weights").get<LossWeights>();
        if (j.contains("model")) {
            c.model = j.at("model").get<ModelConfig>();
            if (j.at("model").contains("ablation") && !j.contains("flags")) c.flags = c.model.ablation;
        }
        if (j.contains("flags")) c.flags = j.at("flags").get<AblationFlags>();
        c.model.ablation = c.flags;
        c.seed = j.value("seed", c.seed);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
        c.log_every = j.value("log_every", c.log_every);
        c.grad_clip = j.value("grad_clip", c.grad_clip);
        c.discriminator_first = j.value("discriminator_first", c.discriminator_first);
        c.discriminator_every = j.value("discriminator_every", c.discriminator_every);
        c.max_steps = j.value("max_steps", c.max_steps);
        c.train_on_all = j.value("train_on_all", c.train_on_all);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.perceptual_seed = j.value("perceptual_seed", c.perceptual_seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
}

// ---------------------------------------------------------------- trainer

namespace {

nn::AdamOptions adam_options(const TrainConfig& c) {
    return {c.learning_rate, c.adam_beta1, c.adam_beta2, 1e-8};
}

double checked(const char* term, const Var<float>& v) {
    const double x = v.item();
    if (!std::isfinite(x)) throw TrainingError(std::string("non-finite ") + term + " loss");
    return x;
}

Tensor<float> gather_envmaps(std::span<const SixTuple* const> batch, bool object) {
    std::vector<Tensor<float>> items;
    for (const SixTuple* t : batch) items.push_back(model::to_tensor<float>(object ? t->object_illum : t->background_illum));
    return model::stack(items);
}

Tensor<float> gather_gt(std::span<const SixTuple* const> batch) {
    std::vector<Tensor<float>> items;
    for (const SixTuple* t : batch) items.push_back(model::to_tensor<float>(t->gt_harmonized));
    return model::stack(items);
}

}  // namespace

Trainer::Trainer(const TrainConfig& config) : config_(config) {
    config_.model.ablation = config_.flags;
    config_.validate();
    const ModelConfig m = config_.effective_model();
    gen_ = std::make_unique<model::Generator<float>>(m, config_.seed);
    disc_ = std::make_unique<model::Discriminator<float>>(m, config_.seed);
    g_opt_ = std::make_unique<nn::Adam<float>>(gen_->params(), adam_options(config_));
    d_opt_ = std::make_unique<nn::Adam<float>>(disc_->params(), adam_options(config_));
    extractor_ = std::make_unique<losses::PerceptualExtractor<float>>(config_.perceptual_seed, m.perceptual_width_divisor);
}

losses::LossReport Trainer::train_step(std::span<const SixTuple* const> batch,
                                       std::span<const SixTuple* const> partners) {
    if (batch.empty()) throw TrainingError("empty batch");
    const AblationFlags& f = config_.flags;
    if (f.use_l_nonillu && partners.size() != batch.size()) {
        throw TrainingError("the non-illumination loss needs one partner sample per batch entry");
    }
    const double clip = config_.effective_grad_clip();
    const nn::ForwardContext<float> ctx{true};

    const auto inputs = model::make_inputs<float>(batch);
    const Var<float> gt_image = nn::constant(gather_gt(batch));
    const Var<float> gt_obj = nn::constant(gather_envmaps(batch, true));
    const Var<float> gt_bg = nn::constant(gather_envmaps(batch, false));

    losses::LossReport rep;
    const auto out = gen_->forward(inputs, ctx);

    auto discriminator_update = [&] {
        disc_->params().zero_grad();
        const Var<float> d_real = disc_->forward(gt_image, inputs.object_mask);
        const Var<float> d_fake = disc_->forward(nn::detach(out.relit), inputs.object_mask);
        const auto adv = losses::l_adv(d_real, d_fake);
        rep.l_adv_d = checked("l_adv_d", adv.d_loss);
        if (step_ % config_.discriminator_every != 0) return;
        nn::backward(adv.d_loss);
        if (clip > 0) nn::clip_grad_norm(disc_->params(), clip);
        d_opt_->step();
    };

    if (f.use_l_adv && config_.discriminator_first) discriminator_update();

    const Var<float> illu = losses::l_illu(out.obj_illum, gt_obj, out.bg_illum, gt_bg);
    rep.l_illu = checked("l_illu", illu);

    Var<float> nonillu;
    if (f.use_l_nonillu) {
        const auto partner_inputs = model::make_inputs<float>(partners);
        const Var<float> partner_feature = gen_->nonillu_object_feature(partner_inputs, ctx);
        nonillu = losses::l_nonillu(out.bottleneck.f_noillu_obj, partner_feature);
        rep.l_nonillu = checked("l_nonillu", nonillu);
    }
    Var<float> per;
    if (f.use_l_per) {
        per = losses::l_per(out.obj_illum, gt_obj, out.bg_illum, gt_bg, out.relit, gt_image, *extractor_);
        rep.l_per = checked("l_per", per);
    }
    Var<float> adv_g;
    if (f.use_l_adv) {
        const Var<float> d_fake = disc_->forward(out.relit, inputs.object_mask);
        adv_g = losses::l_adv(d_fake, d_fake).g_loss;
        rep.l_adv_g = checked("l_adv_g", adv_g);
    }
    const Var<float> total = losses::l_total(illu, nonillu, per, adv_g, config_.weights, f);
    rep.l_total = checked("l_total", total);

    gen_->params().zero_grad();
    nn::backward(total);
    if (clip > 0) nn::clip_grad_norm(gen_->params(), clip);
    g_opt_->step();

    if (f.use_l_adv && !config_.discriminator_first) discriminator_update();

    ++step_;
    constexpr double decay = 0.99;
    auto blend = [&](double& avg, double v) { avg = step_ == 1 ? v : decay * avg + (1 - decay) * v; };
    blend(rolling_.l_illu, rep.l_illu);
    blend(rolling_.l_nonillu, rep.l_nonillu);
    blend(rolling_.l_per, rep.l_per);
    blend(rolling_.l_adv_g, rep.l_adv_g);
    blend(rolling_.l_adv_d, rep.l_adv_d);
    blend(rolling_.l_total, rep.l_total);
    return rep;
}

Checkpoint Trainer::to_checkpoint() {
    Checkpoint ck;
    const ModelConfig m = config_.effective_model();
    ck.header = {{"format", "sigan-checkpoint"},
                 {"version", 1},
                 {"model_config", m},
                 {"config_digest", m.digest()},
                 {"train_config", config_},
                 {"step", step_},
                 {"g_adam_steps", g_opt_->steps()},
                 {"d_adam_steps", d_opt_->steps()},
                 {"rolling", rolling_}};
    export_store(ck, gen_->params(), "g/");
    export_store(ck, disc_->params(), "d/");
    export_adam(ck, *g_opt_, gen_->params(), "g/");
    export_adam(ck, *d_opt_, disc_->params(), "d/");
    return ck;
}

void Trainer::save(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_checkpoint(path, to_checkpoint());
}

void Trainer::load(const Checkpoint& ck) {
    const ModelConfig theirs = checkpoint_model_config(ck.header);
    if (theirs.digest() != config_.effective_model().digest()) {
        throw CheckpointError("checkpoint model config digest " + theirs.digest() + " does not match " +
                              config_.effective_model().digest());
    }
    import_store(ck, gen_->params(), "g/");
    import_store(ck, disc_->params(), "d/");
    import_adam(ck, *g_opt_, gen_->params(), "g/");
    import_adam(ck, *d_opt_, disc_->params(), "d/");
    try {
        step_ = ck.header.at("step").get<std::int64_t>();
        g_opt_->set_steps(ck.header.at("g_adam_steps").get<std::int64_t>());
        d_opt_->set_steps(ck.header.at("d_adam_steps").get<std::int64_t>());
        rolling_ = ck.header.at("rolling").get<losses::LossReport>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint lacks training state: ") + e.what());
    }
}

ModelConfig checkpoint_model_config(const nlohmann::json& header) {
    try {
        return header.at("model_config").get<ModelConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint lacks a model config: ") + e.what());
    }
}

std::unique_ptr<model::Generator<float>> load_generator(const Checkpoint& ck) {
    const ModelConfig m = checkpoint_model_config(ck.header);
    if (ck.header.contains("config_digest") && ck.header.at("config_digest").get<std::string>() != m.digest()) {
        throw CheckpointError("checkpoint config digest does not match its model config");
    }
    auto gen = std::make_unique<model::Generator<float>>(m, 0);
    import_store(ck, gen->params(), "g/");
    return gen;
}

// ---------------------------------------------------------------- fit

nlohmann::json loss_record(std::int64_t step, const losses::LossReport& r) {
    nlohmann::json j = r;
    j["step"] = step;
    return j;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw dataset::DatasetError("cannot write " + p.string(), p);
    out << text;
}

/// Keeps the log records up to `step`, dropping anything a crashed run left behind.
void truncate_log(const fs::path& p, std::int64_t step) {
    std::vector<std::string> kept;
    if (fs::exists(p)) {
        std::ifstream in(p);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("step")) break;
            if (j.at("step").get<std::int64_t>() > step) break;
            kept.push_back(line);
        }
    }
    std::string text;
    for (const auto& l : kept) text += l + "\n";
    write_text(p, text);
}

std::string step_name(std::int64_t step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06lld.ckpt", static_cast<long long>(step));
    return buf;
}

}  // namespace

fs::path fit(const TrainConfig& config, const fs::path& data_dir, const fs::path& out_dir,
             const FitOptions& options) {
    Trainer trainer(config);
    const TrainConfig& cfg = trainer.config();
    const ModelConfig m = cfg.effective_model();

    const dataset::DatasetManifest manifest = dataset::read_manifest(data_dir);
    if (manifest.image_side != m.image_side) {
        throw dataset::ShapeMismatchError(data_dir / "manifest.json",
                                          "dataset side " + std::to_string(manifest.image_side) +
                                              " differs from model image_side " + std::to_string(m.image_side));
    }
    if (manifest.envmap_height != m.envmap_height || manifest.envmap_width != m.envmap_width) {
        throw dataset::ShapeMismatchError(data_dir / "manifest.json", "env-map shape differs from model config");
    }
    if (cfg.flags.use_l_nonillu && !manifest.pair_map) {
        throw dataset::DatasetError("the non-illumination loss needs a paired dataset (manifest has no pair_map)",
                                    data_dir / "manifest.json");
    }
    std::vector<std::string> ids;
    dataset::Split split;
    if (cfg.train_on_all) {
        ids = manifest.sample_ids;
        split.train = ids;
    } else {
        split = dataset::split(manifest, cfg.train_fraction, cfg.seed);
        ids = split.train;
    }
    if (ids.empty()) throw dataset::DatasetError("no training samples", data_dir);

    fs::create_directories(out_dir / "ckpt");
    write_text(out_dir / "train_config.json", nlohmann::json(cfg).dump(2) + "\n");
    write_text(out_dir / "split.json",
               nlohmann::json{{"train", split.train}, {"test", split.test}, {"train_on_all", cfg.train_on_all}}.dump(2) +
                   "\n");

    const fs::path log_path = out_dir / "loss_log.jsonl";
    if (options.resume) {
        trainer.load(read_checkpoint(*options.resume));
        truncate_log(log_path, trainer.step());
    } else {
        write_text(log_path, "");
    }
    std::ofstream log(log_path, std::ios::app | std::ios::binary);

    const auto n = static_cast<std::int64_t>(ids.size());
    const std::int64_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    std::int64_t total = per_epoch * cfg.epochs;
    if (cfg.max_steps > 0) total = std::min(total, cfg.max_steps);

    std::vector<std::size_t> order(ids.size());
    std::int64_t order_epoch = -1;
    while (trainer.step() < total) {
        const std::int64_t s = trainer.step();
        const std::int64_t epoch = s / per_epoch;
        if (epoch != order_epoch) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::mt19937_64 rng(util::splitmix64(cfg.seed) + static_cast<std::uint64_t>(epoch));
            std::shuffle(order.begin(), order.end(), rng);
            order_epoch = epoch;
        }
        const std::int64_t first = (s % per_epoch) * cfg.batch_size;
        const std::int64_t last = std::min(first + cfg.batch_size, n);
        std::vector<SixTuple> samples;
        std::vector<SixTuple> partner_samples;
        for (std::int64_t i = first; i < last; ++i) {
            const std::string& id = ids[order[static_cast<std::size_t>(i)]];
            samples.push_back(dataset::read_sample(data_dir, id));
            if (cfg.flags.use_l_nonillu) {
                auto it = manifest.pair_map->find(id);
                if (it == manifest.pair_map->end()) {
                    throw dataset::DatasetError("sample " + id + " has no partner in pair_map", data_dir);
                }
                partner_samples.push_back(dataset::read_sample(data_dir, it->second));
            }
        }
        std::vector<const SixTuple*> batch;
        std::vector<const SixTuple*> partners;
        for (const auto& t : samples) batch.push_back(&t);
        for (const auto& t : partner_samples) partners.push_back(&t);

        const losses::LossReport rep = trainer.train_step(batch, partners);
        log << loss_record(trainer.step(), rep).dump() << '\n';
        log.flush();
        if (options.on_step) options.on_step(trainer.step(), rep);
        if (cfg.log_every > 0 && trainer.step() % cfg.log_every == 0) {
            const auto& r = trainer.rolling_average();
            std::fprintf(stderr, "step %lld/%lld  l_total %.4f  l_illu %.4f  l_per %.4f  l_adv_g %.4f  l_adv_d %.4f\n",
                         static_cast<long long>(trainer.step()), static_cast<long long>(total), r.l_total, r.l_illu,
                         r.l_per, r.l_adv_g, r.l_adv_d);
        }
        if (cfg.checkpoint_every > 0 && trainer.step() % cfg.checkpoint_every == 0) {
            trainer.save(out_dir / "ckpt" / step_name(trainer.step()));
        }
    }
    const fs::path final_path = out_dir / "final.ckpt";
    trainer.save(final_path);
    return final_path;
}

// ---------------------------------------------------------------- ablation

const std::vector<AblationRow>& ablation_rows() {
    //                                                      msa    iem    per    nonillu adv
    static const std::vector<AblationRow> rows = {
        {"basic", {false, false, false, false, false}},
        {"basic+msa+iem", {true, true, false, false, false}},
        {"basic+l_adv+iem", {false, true, false, false, true}},
        {"basic+l_per+iem", {false, true, true, false, false}},
        {"basic+l_per+l_nonillu+l_adv+iem", {false, true, true, true, true}},
        {"basic+msa+l_adv+l_nonillu+iem", {true, true, false, true, true}},
        {"basic+msa+l_per+l_nonillu+iem", {true, true, true, true, false}},
        {"basic+msa+l_adv+l_per+iem", {true, true, true, false, true}},
        {"basic+msa+l_per+l_nonillu+l_adv", {true, false, true, true, true}},
        {"si-gan", {true, true, true, true, true}},
    };
    return rows;
}

std::vector<TrainConfig> ablation_matrix(const TrainConfig& base) {
    std::vector<TrainConfig> out;
    for (const auto& row : ablation_rows()) {
        TrainConfig c = base;
        c.flags = row.flags;
        c.model.ablation = row.flags;
        out.push_back(c);
    }
    return out;
}

std::optional<AblationRow> find_ablation_row(const std::string& key) {
    std::string k;
    for (char ch : key) {
        if (ch != ' ') k.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    const auto& rows = ablation_rows();
    if (!k.empty() && k.size() < 4 && std::all_of(k.begin(), k.end(), [](unsigned char c) { return std::isdigit(c); })) {
        const long idx = std::stol(k);
        if (idx >= 1 && idx <= static_cast<long>(rows.size())) return rows[static_cast<std::size_t>(idx - 1)];
        return std::nullopt;
    }
    if (k == "full" || k == "sigan") k = "si-gan";
    for (const auto& r : rows) {
        if (r.name == k) return r;
    }
    return std::nullopt;
}

}  // namespace sigan::train
