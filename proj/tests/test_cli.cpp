#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "sigan/checkpoint.hpp"
#include "sigan/cli.hpp"
#include "sigan/dataset.hpp"
#include "sigan/png_io.hpp"
#include "tmpdir.hpp"

using namespace sigan;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run sigan_run(std::vector<std::string> args) {
    args.insert(args.begin(), "sigan");
    std::ostringstream out, err;
    const auto r = cli::run(args, out, err);
    return {r.exit_code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const std::string kTinyConfig =
    R"({"learning_rate": 0.001, "log_every": 0, "model": {"image_side": 64, "base_channels": 4, "max_channels": 32,
        "illum_decoder_channels": 4, "disc_base_channels": 4, "disc_max_channels": 16, "perceptual_width_divisor": 16}})";

}  // namespace

TEST_CASE("usage errors exit with 1") {
    CHECK(sigan_run({}).code == cli::kUsage);
    CHECK(sigan_run({"bogus"}).code == cli::kUsage);
    CHECK(sigan_run({"gen", "--out", "x"}).code == cli::kUsage);
    CHECK(sigan_run({"gen", "--count", "2", "--side", "50", "--out", "/tmp/none"}).code == cli::kUsage);
    CHECK(sigan_run({"--version"}).code == cli::kOk);
}

TEST_CASE("help text matches the golden files") {
    for (const char* sub : {"gen", "stats", "train", "eval", "infer"}) {
        CAPTURE(sub);
        const Run r = sigan_run({sub, "--help"});
        CHECK(r.code == cli::kOk);
        const std::string golden = slurp(fs::path(SIGAN_GOLDEN_DIR) / (std::string(sub) + "_help.txt"));
        REQUIRE_FALSE(golden.empty());
        CHECK(r.out == golden);
    }
}

TEST_CASE("gen writes paired datasets with a perfect matching") {
    testing::TempDir dir("cli_gen");
    const Run r = sigan_run({"gen", "--paired", "--count", "5", "--seed", "3", "--side", "64", "--out",
                             (dir.path() / "d").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto m = dataset::read_manifest(dir.path() / "d");
    CHECK(m.sample_ids.size() == 10);
    REQUIRE(m.pair_map);
    std::set<std::string> seen;
    for (const auto& id : m.sample_ids) {
        const auto& partner = m.pair_map->at(id);
        CHECK(partner != id);
        CHECK(m.pair_map->at(partner) == id);
        seen.insert(id);
    }
    CHECK(seen.size() == 10);
    for (const auto& id : m.sample_ids) CHECK(fs::exists(dir.path() / "d" / id));
}

TEST_CASE("stats") {
    testing::TempDir dir("cli_stats");
    fs::create_directories(dir.path() / "empty");
    CHECK(sigan_run({"stats", (dir.path() / "empty").string(), "--out", (dir.path() / "s.json").string()}).code ==
          cli::kData);
    REQUIRE(sigan_run({"gen", "--count", "4", "--side", "64", "--out", (dir.path() / "d").string()}).code == 0);
    const Run r = sigan_run({"stats", (dir.path() / "d").string(), "--out", (dir.path() / "s.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto j = nlohmann::json::parse(slurp(dir.path() / "s.json"));
    CHECK(!j.empty());
}

TEST_CASE("train, eval and infer") {
    testing::TempDir dir("cli_train");
    const auto data = (dir.path() / "d").string();
    REQUIRE(sigan_run({"gen", "--paired", "--count", "2", "--side", "64", "--out", data}).code == 0);
    write_text(dir.path() / "tiny.json", kTinyConfig);
    const auto run = (dir.path() / "r").string();

    SUBCASE("basic ablation keeps only the illumination loss") {
        const Run r = sigan_run({"train", "--data", data, "--config", (dir.path() / "tiny.json").string(), "--out", run,
                                 "--ablation", "basic", "--max-steps", "3", "--train-on-all"});
        REQUIRE_MESSAGE(r.code == 0, r.err);
        std::ifstream log(fs::path(run) / "loss_log.jsonl");
        int n = 0;
        for (std::string line; std::getline(log, line); ++n) {
            const auto rec = nlohmann::json::parse(line);
            CHECK(rec.at("l_illu").get<double>() > 0);
            for (const char* k : {"l_nonillu", "l_per", "l_adv_g", "l_adv_d"}) CHECK(rec.at(k).get<double>() == 0.0);
        }
        CHECK(n == 3);
        CHECK(sigan_run({"train", "--data", data, "--out", run, "--ablation", "nope"}).code == cli::kUsage);
    }

    SUBCASE("eval and infer on a short run") {
        REQUIRE(sigan_run({"train", "--data", data, "--config", (dir.path() / "tiny.json").string(), "--out", run,
                           "--max-steps", "2", "--train-on-all"})
                    .code == 0);
        const auto ckpt = (fs::path(run) / "final.ckpt").string();
        const Run e = sigan_run({"eval", "--data", data, "--ckpt", ckpt, "--out", (dir.path() / "e").string(),
                                 "--split", "all", "--grids"});
        REQUIRE_MESSAGE(e.code == 0, e.err);
        const auto rep = nlohmann::json::parse(slurp(dir.path() / "e" / "report.json"));
        CHECK(rep.at("per_sample").size() == 4);
        CHECK(fs::exists(dir.path() / "e" / "grids"));

        // a config describing another model is refused
        write_text(dir.path() / "other.json", R"({"model": {"image_side": 64, "base_channels": 8}})");
        CHECK(sigan_run({"eval", "--data", data, "--ckpt", ckpt, "--out", (dir.path() / "e2").string(), "--config",
                         (dir.path() / "other.json").string()})
                  .code == cli::kData);
        // a checkpoint whose stored digest disagrees with its model config is refused
        Checkpoint ck = read_checkpoint(ckpt);
        ck.header["config_digest"] = "0000000000000000";
        write_checkpoint(dir.path() / "tampered.ckpt", ck);
        CHECK(sigan_run({"eval", "--data", data, "--ckpt", (dir.path() / "tampered.ckpt").string(), "--out",
                         (dir.path() / "e3").string()})
                  .code == cli::kData);
        CHECK(sigan_run({"eval", "--data", data, "--ckpt", (dir.path() / "missing.ckpt").string(), "--out",
                         (dir.path() / "e4").string()})
                  .code == cli::kData);

        const auto id = dataset::read_manifest(data).sample_ids.front();
        const fs::path s = fs::path(data) / id;
        const auto out = dir.path() / "inf" / "relit.png";
        const Run i = sigan_run({"infer", "--composite", (s / "composite.png").string(), "--object-mask",
                                 (s / "object_mask.png").string(), "--background-mask",
                                 (s / "background_mask.png").string(), "--ckpt", ckpt, "--out", out.string()});
        REQUIRE_MESSAGE(i.code == 0, i.err);
        const Image relit = png::read_image(out);
        CHECK(relit.height == 64);
        CHECK(fs::file_size(dir.path() / "inf" / "relit_obj_illum.f32") == 3 * 16 * 32 * 4);
        CHECK(fs::file_size(dir.path() / "inf" / "relit_bg_illum.f32") == 3 * 16 * 32 * 4);
        CHECK(sigan_run({"infer", "--composite", (dir.path() / "none.png").string(), "--object-mask",
                         (s / "object_mask.png").string(), "--background-mask", (s / "background_mask.png").string(),
                         "--ckpt", ckpt, "--out", out.string()})
                  .code == cli::kData);
    }
}
