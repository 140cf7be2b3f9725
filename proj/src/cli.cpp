#include "sigan/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sigan/checkpoint.hpp"
#include "sigan/dataset.hpp"
#include "sigan/evalkit.hpp"
#include "sigan/png_io.hpp"
#include "sigan/scenegen.hpp"
#include "sigan/trainer.hpp"
#include "sigan/util/hash.hpp"

namespace sigan::cli {

namespace fs = std::filesystem;

unsigned long long default_seed() {
    if (const char* s = std::getenv("SIGAN_SEED")) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw ConfigError(std::string("SIGAN_SEED is not an unsigned integer: ") + s);
        }
    }
    return 0;
}

namespace {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string sample_name(const char* prefix, int i, const char* suffix = "") {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%05d%s", prefix, i, suffix);
    return buf;
}

void write_json_file(const fs::path& p, const nlohmann::json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw dataset::DatasetError("cannot write " + p.string(), p);
    out << j.dump(2) << '\n';
}

nlohmann::json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw dataset::MissingFileError(p);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + p.string() + ": " + e.what());
    }
}

void write_f32(const fs::path& p, const EnvMap& e) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw dataset::DatasetError("cannot write " + p.string(), p);
    out.write(reinterpret_cast<const char*>(e.radiance.data()),
              static_cast<std::streamsize>(e.radiance.size() * sizeof(float)));
}

// ---------------------------------------------------------------- gen

struct GenArgs {
    int count = 0;
    unsigned long long seed = 0;
    int side = 256;
    int envmap_height = 16;
    bool paired = false;
    std::string out;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
    if (a.count <= 0) throw ConfigError("--count must be positive");
    if (a.side <= 0 || a.side % 32 != 0) throw ConfigError("--side must be a positive multiple of 32");
    const fs::path dir = a.out;
    fs::create_directories(dir);
    const int eh = a.envmap_height;
    const int ew = 2 * a.envmap_height;

    dataset::DatasetManifest m;
    m.image_side = a.side;
    m.envmap_height = eh;
    m.envmap_width = ew;
    const nlohmann::json gen_cfg = {{"generator", "analytic-2.5d"}, {"count", a.count}, {"seed", a.seed},
                                    {"side", a.side},               {"envmap_shape", {eh, ew}}, {"paired", a.paired}};
    m.generator_config_digest = util::digest_hex(gen_cfg.dump());
    std::map<std::string, std::string> pairs;

    auto emit = [&](const scenegen::SceneSpec& spec, const std::string& id, const std::string& partner) {
        SixTuple t = scenegen::render_six_tuple(spec, eh, ew);
        t.sample_id = id;
        const auto violations = scenegen::validate_rendered(t, spec);
        if (!violations.empty()) throw std::runtime_error("generated sample " + id + " is invalid: " + violations[0]);
        nlohmann::json extra = {{"scene_spec", spec}};
        if (!partner.empty()) extra["partner"] = partner;
        dataset::write_sample(dir, t, extra);
        m.sample_ids.push_back(id);
    };

    for (int i = 0; i < a.count; ++i) {
        const std::uint64_t s = util::splitmix64(a.seed) + static_cast<std::uint64_t>(i);
        if (a.paired) {
            const auto [first, second] = scenegen::sample_spec_pair(s, a.side);
            const std::string ia = sample_name("p", i, "a");
            const std::string ib = sample_name("p", i, "b");
            emit(first, ia, ib);
            emit(second, ib, ia);
            pairs[ia] = ib;
            pairs[ib] = ia;
        } else {
            emit(scenegen::sample_spec(s, a.side), sample_name("s", i), "");
        }
    }
    if (a.paired) m.pair_map = pairs;
    write_json_file(dir / "generator_config.json", gen_cfg);
    dataset::write_manifest(dir, m);
    out << "wrote " << m.sample_ids.size() << " samples to " << dir.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- stats

struct StatsArgs {
    std::string dir;
    std::string out;
    int bins = 20;
};

int cmd_stats(const StatsArgs& a, std::ostream& out) {
    if (a.bins <= 0) throw ConfigError("--bins must be positive");
    const fs::path dir = a.dir;
    const auto m = dataset::read_manifest(dir);
    if (m.sample_ids.empty()) throw dataset::DatasetError("manifest lists no samples", dir / "manifest.json");
    const auto samples = dataset::load_samples(dir, m);
    const auto st = dataset::compute_stats(samples, dataset::uniform_edges(a.bins));
    const fs::path report = a.out;
    write_json_file(report, st);
    const fs::path stem = report.parent_path() / report.stem();
    png::write_image(stem.string() + "_object_ratio.png", dataset::render_histogram(st.object_ratio));
    png::write_image(stem.string() + "_shadow_ratio.png", dataset::render_histogram(st.shadow_ratio));
    png::write_image(stem.string() + "_illum_probability.png", dataset::render_probability_map(st));
    out << "stats for " << st.sample_count << " samples written to " << report.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::string ablation;
    std::string resume;
    std::optional<long long> max_steps;
    std::optional<int> epochs;
    std::optional<unsigned long long> seed;
    std::optional<int> checkpoint_every;
    std::optional<int> log_every;
    bool train_on_all = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
    train::TrainConfig cfg;
    cfg.seed = default_seed();
    if (!a.config.empty()) {
        const nlohmann::json j = read_json_file(a.config);
        cfg = j.get<train::TrainConfig>();
        if (!j.contains("seed")) cfg.seed = default_seed();
    }
    if (!a.ablation.empty()) {
        const auto row = train::find_ablation_row(a.ablation);
        if (!row) throw ConfigError("unknown ablation row '" + a.ablation + "'");
        cfg.flags = row->flags;
        cfg.model.ablation = row->flags;
    }
    if (a.max_steps) cfg.max_steps = *a.max_steps;
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.seed) cfg.seed = *a.seed;
    if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
    if (a.log_every) cfg.log_every = *a.log_every;
    if (a.train_on_all) cfg.train_on_all = true;
    cfg.validate();

    train::FitOptions opt;
    if (!a.resume.empty()) opt.resume = fs::path(a.resume);
    const fs::path final_ckpt = train::fit(cfg, a.data, a.out, opt);
    out << "final checkpoint: " << final_ckpt.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string ckpt;
    std::string out;
    std::string split = "test";
    std::string config;
    bool grids = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const Checkpoint ck = read_checkpoint(a.ckpt);
    const ModelConfig mc = train::checkpoint_model_config(ck.header);
    const std::string stored = ck.header.value("config_digest", std::string{});
    if (stored != mc.digest()) {
        throw DataError("config digest mismatch: checkpoint records " + stored + " but its model config hashes to " +
                        mc.digest());
    }
    if (!a.config.empty()) {
        const train::TrainConfig expected = read_json_file(a.config).get<train::TrainConfig>();
        const std::string want = expected.effective_model().digest();
        if (want != stored) {
            throw DataError("config digest mismatch: checkpoint " + stored + ", config file " + want);
        }
    }
    const auto gen = train::load_generator(ck);
    const fs::path data = a.data;
    const auto manifest = dataset::read_manifest(data);
    if (manifest.image_side != mc.image_side) {
        throw DataError("dataset side " + std::to_string(manifest.image_side) + " differs from checkpoint side " +
                        std::to_string(mc.image_side));
    }

    std::vector<std::string> ids;
    if (a.split == "all") {
        ids = manifest.sample_ids;
    } else {
        train::TrainConfig tc;
        if (ck.header.contains("train_config")) tc = ck.header.at("train_config").get<train::TrainConfig>();
        const auto s = dataset::split(manifest, tc.train_fraction, tc.seed);
        ids = a.split == "train" ? (tc.train_on_all ? manifest.sample_ids : s.train) : s.test;
    }
    eval::EvaluateOptions opt;
    const fs::path out_dir = a.out;
    if (a.grids) opt.grid_dir = out_dir / "grids";
    fs::create_directories(out_dir);
    const auto report = eval::evaluate(*gen, ids, data, opt);
    write_json_file(out_dir / "report.json", report);

    auto line = [&](const char* name, const eval::Metrics& m) {
        out << std::left << std::setw(10) << name << std::fixed << std::setprecision(4) << " rmse " << m.rmse
            << "  ssim " << m.ssim << "  psnr " << std::setprecision(3) << m.psnr << '\n';
    };
    out << ids.size() << " samples (" << a.split << ")\n";
    line("relit", report.aggregate);
    line("baseline", report.baseline);
    return kOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
    std::string composite;
    std::string object_mask;
    std::string background_mask;
    std::string ckpt;
    std::string out;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
    auto need = [](const std::string& p) {
        if (!fs::exists(p)) throw dataset::MissingFileError(p);
    };
    need(a.composite);
    need(a.object_mask);
    need(a.background_mask);
    const Image comp = png::read_image(a.composite);
    const Mask om = png::read_mask(a.object_mask);
    const Mask bm = png::read_mask(a.background_mask);
    const auto gen = train::load_generator(read_checkpoint(a.ckpt));
    if (comp.height != gen->config().image_side || comp.width != gen->config().image_side) {
        throw DataError("composite is " + std::to_string(comp.width) + "x" + std::to_string(comp.height) +
                        " but the checkpoint expects side " + std::to_string(gen->config().image_side));
    }
    if (om.height != comp.height || om.width != comp.width || bm.height != comp.height || bm.width != comp.width) {
        throw DataError("mask size differs from composite");
    }

    nn::NoGradGuard guard;
    const nn::ForwardContext<float> ctx{false};
    const auto res = gen->forward(model::make_inputs<float>(comp, om, bm), ctx);
    const fs::path target = a.out;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    png::write_image(target, model::image_from(res.relit.value()));
    const fs::path stem = target.parent_path() / target.stem();
    const EnvMap obj = model::envmap_from(res.obj_illum.value());
    const EnvMap bg = model::envmap_from(res.bg_illum.value());
    write_f32(stem.string() + "_obj_illum.f32", obj);
    write_f32(stem.string() + "_bg_illum.f32", bg);
    write_json_file(stem.string() + "_illum.json",
                    {{"obj_illum", stem.filename().string() + "_obj_illum.f32"},
                     {"bg_illum", stem.filename().string() + "_bg_illum.f32"},
                     {"shape", {3, obj.height, obj.width}},
                     {"dtype", "float32-le"}});
    out << "wrote " << target.string() << '\n';
    return kOk;
}

}  // namespace

CommandResult run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Object illumination harmonization: data generation, training and evaluation", "sigan"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "sigan 0.1.0");

    GenArgs ga;
    StatsArgs sa;
    TrainArgs ta;
    EvalArgs ea;
    InferArgs ia;
    CommandResult result;

    try {
        ga.seed = default_seed();
    } catch (const ConfigError& e) {
        err << e.what() << '\n';
        return {kUsage, e.what()};
    }

    auto* gen = app.add_subcommand("gen", "Generate a synthetic six-tuple dataset");
    gen->add_option("--count", ga.count, "Number of samples (pairs with --paired)")->required();
    gen->add_option("--seed", ga.seed, "Base seed (default: $SIGAN_SEED or 0)");
    gen->add_option("--side", ga.side, "Image side in pixels, a multiple of 32")->capture_default_str();
    gen->add_option("--envmap-height", ga.envmap_height, "Environment map height; width is twice this")
        ->capture_default_str();
    gen->add_flag("--paired", ga.paired, "Emit two samples per scene that differ only in object light");
    gen->add_option("--out", ga.out, "Output dataset directory")->required();

    auto* stats = app.add_subcommand("stats", "Compute dataset statistics");
    stats->add_option("dir", sa.dir, "Dataset directory")->required();
    stats->add_option("--out", sa.out, "Output JSON file; PNG renderings are written beside it")->required();
    stats->add_option("--bins", sa.bins, "Histogram bins on [0, 1]")->capture_default_str();

    auto* tr = app.add_subcommand("train", "Train the generator and discriminator");
    tr->add_option("--data", ta.data, "Dataset directory")->required();
    tr->add_option("--config", ta.config, "Training config JSON (flags below override it)");
    tr->add_option("--out", ta.out, "Run directory for logs and checkpoints")->required();
    tr->add_option("--ablation", ta.ablation, "Ablation row: 1-10 or a name such as basic, si-gan");
    tr->add_option("--max-steps", ta.max_steps, "Stop after this many steps");
    tr->add_option("--epochs", ta.epochs, "Number of epochs");
    tr->add_option("--seed", ta.seed, "Training seed (default: config, then $SIGAN_SEED, then 0)");
    tr->add_option("--checkpoint-every", ta.checkpoint_every, "Steps between checkpoints (0: final only)");
    tr->add_option("--log-every", ta.log_every, "Steps between progress lines (0: quiet)");
    tr->add_flag("--train-on-all", ta.train_on_all, "Train on every sample instead of the train split");
    tr->add_option("--resume", ta.resume, "Checkpoint to resume from");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
    ev->add_option("--data", ea.data, "Dataset directory")->required();
    ev->add_option("--ckpt", ea.ckpt, "Checkpoint file")->required();
    ev->add_option("--out", ea.out, "Output directory for report.json and grids")->required();
    ev->add_option("--split", ea.split, "Samples to evaluate: test, train or all")
        ->check(CLI::IsMember({"test", "train", "all"}))
        ->capture_default_str();
    ev->add_option("--config", ea.config, "Training config whose model digest the checkpoint must match");
    ev->add_flag("--grids", ea.grids, "Write composite|relit|gt PNG grids");

    auto* inf = app.add_subcommand("infer", "Relight one composite with a trained checkpoint");
    inf->add_option("--composite", ia.composite, "Composite RGB PNG")->required();
    inf->add_option("--object-mask", ia.object_mask, "Object mask PNG")->required();
    inf->add_option("--background-mask", ia.background_mask, "Background mask PNG")->required();
    inf->add_option("--ckpt", ia.ckpt, "Checkpoint file")->required();
    inf->add_option("--out", ia.out, "Output relit PNG; env maps are written beside it")->required();

    std::vector<const char*> argv;
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return {code == 0 ? kOk : kUsage, e.what()};
    }

    try {
        int code = kOk;
        if (gen->parsed()) code = cmd_gen(ga, out);
        else if (stats->parsed()) code = cmd_stats(sa, out);
        else if (tr->parsed()) code = cmd_train(ta, out);
        else if (ev->parsed()) code = cmd_eval(ea, out);
        else if (inf->parsed()) code = cmd_infer(ia, out);
        return {code, ""};
    } catch (const ConfigError& e) {
        result = {kUsage, e.what()};
    } catch (const DataError& e) {
        result = {kData, e.what()};
    } catch (const dataset::DatasetError& e) {
        result = {kData, e.what()};
    } catch (const CheckpointError& e) {
        result = {kData, e.what()};
    } catch (const png::PngError& e) {
        result = {kData, e.what()};
    } catch (const nn::ShapeError& e) {
        result = {kData, e.what()};
    } catch (const fs::filesystem_error& e) {
        result = {kData, e.what()};
    } catch (const std::exception& e) {
        result = {kRuntime, e.what()};
    }
    err << "error: " << result.message << '\n';
    return result;
}

}  // namespace sigan::cli
