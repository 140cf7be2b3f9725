#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "oracles.hpp"
#include "sigan/dataset.hpp"
#include "sigan/scenegen.hpp"
#include "tmpdir.hpp"

using namespace sigan;
using namespace sigan::dataset;

namespace {

DatasetManifest unpaired(int n) {
    DatasetManifest m;
    m.image_side = 64;
    for (int i = 0; i < n; ++i) m.sample_ids.push_back("s" + std::to_string(i));
    return m;
}

DatasetManifest paired(int pairs) {
    DatasetManifest m;
    m.image_side = 64;
    std::map<std::string, std::string> pm;
    for (int i = 0; i < pairs; ++i) {
        const std::string a = "p" + std::to_string(i) + "a";
        const std::string b = "p" + std::to_string(i) + "b";
        m.sample_ids.push_back(a);
        m.sample_ids.push_back(b);
        pm[a] = b;
        pm[b] = a;
    }
    m.pair_map = pm;
    return m;
}

/// Generated tuple with random-valued env maps so the float round trip is non-trivial.
SixTuple random_tuple(std::uint64_t seed) {
    SixTuple t = scenegen::render_six_tuple(scenegen::sample_spec(seed, 32));
    std::mt19937_64 rng(seed);
    std::exponential_distribution<float> e(2.0f);
    for (float& v : t.object_illum.radiance) v = e(rng);
    for (float& v : t.background_illum.radiance) v = e(rng);
    t.sample_id = "t" + std::to_string(seed);
    return t;
}

}  // namespace

TEST_CASE("round trip is bit-exact after one quantization for 100 tuples") {
    testing::TempDir dir("rt");
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const SixTuple t = random_tuple(seed);
        write_sample(dir.path(), t);
        const SixTuple back = read_sample(dir.path(), t.sample_id);
        CHECK_MESSAGE(back == quantize(t), "seed " << seed);
    }
}

TEST_CASE("quantization is idempotent and lands on the 8-bit grid") {
    const SixTuple t = random_tuple(3);
    const SixTuple q = quantize(t);
    CHECK(quantize(q) == q);
    for (float v : q.composite.pixels) CHECK(std::abs(v * 255.0f - std::round(v * 255.0f)) < 1e-3f);
    CHECK(q.object_illum == t.object_illum);
}

TEST_CASE("read errors are distinct and name the file") {
    testing::TempDir dir("err");
    const SixTuple t = random_tuple(1);
    write_sample(dir.path(), t);
    const auto d = dir.path() / t.sample_id;

    SUBCASE("truncated env map") {
        std::filesystem::resize_file(d / "obj_illum.f32", 100);
        try {
            read_sample(dir.path(), t.sample_id);
            FAIL("expected a shape mismatch");
        } catch (const ShapeMismatchError& e) {
            CHECK(e.path() == d / "obj_illum.f32");
            CHECK(std::string(e.what()).find("obj_illum.f32") != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        std::filesystem::remove(d / "gt.png");
        try {
            read_sample(dir.path(), t.sample_id);
            FAIL("expected a missing-file error");
        } catch (const MissingFileError& e) {
            CHECK(e.path() == d / "gt.png");
        }
    }
    SUBCASE("malformed sidecar") {
        std::ofstream(d / "meta.json") << "{not json";
        try {
            read_sample(dir.path(), t.sample_id);
            FAIL("expected a malformed-sidecar error");
        } catch (const MalformedSidecarError& e) {
            CHECK(e.path() == d / "meta.json");
        }
    }
}

TEST_CASE("loader returns samples in manifest order") {
    testing::TempDir dir("order");
    DatasetManifest m;
    m.image_side = 32;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const SixTuple t = random_tuple(s);
        write_sample(dir.path(), t);
        m.sample_ids.push_back(t.sample_id);
    }
    std::reverse(m.sample_ids.begin(), m.sample_ids.end());
    write_manifest(dir.path(), m);
    const auto back = read_manifest(dir.path());
    CHECK(back.sample_ids == m.sample_ids);
    const auto samples = load_samples(dir.path(), back);
    REQUIRE(samples.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(samples[i].sample_id == m.sample_ids[i]);
}

TEST_CASE("manifest validation") {
    CHECK_NOTHROW(paired(3).validate());
    auto dup = unpaired(3);
    dup.sample_ids.push_back("s0");
    CHECK_THROWS_AS(dup.validate(), DatasetError);
    auto fixed = paired(2);
    (*fixed.pair_map)["p0a"] = "p0a";
    CHECK_THROWS_AS(fixed.validate(), DatasetError);
    auto asym = paired(2);
    (*asym.pair_map)["p0a"] = "p1a";
    CHECK_THROWS_AS(asym.validate(), DatasetError);
}

TEST_CASE("split of 100 unpaired ids at 0.8") {
    const auto m = unpaired(100);
    const auto s = split(m, 0.8, 5);
    CHECK(s.train.size() == 80);
    CHECK(s.test.size() == 20);
    const auto again = split(m, 0.8, 5);
    CHECK(again.train == s.train);
    CHECK(again.test == s.test);
}

TEST_CASE("split properties across sizes, fractions and seeds") {
    for (int n : {1, 2, 7, 30, 101}) {
        for (double f : {0.1, 0.5, 0.8, 0.95}) {
            for (std::uint64_t seed : {0ULL, 1ULL, 99ULL}) {
                const auto m = unpaired(n);
                const auto s = split(m, f, seed);
                std::set<std::string> tr(s.train.begin(), s.train.end());
                std::set<std::string> te(s.test.begin(), s.test.end());
                CHECK(tr.size() == s.train.size());
                CHECK(te.size() == s.test.size());
                for (const auto& id : te) CHECK(tr.count(id) == 0);
                CHECK(tr.size() + te.size() == std::size_t(n));
                // Manifest order is kept on both sides.
                auto pos = [&](const std::string& id) {
                    return std::find(m.sample_ids.begin(), m.sample_ids.end(), id) - m.sample_ids.begin();
                };
                CHECK(std::is_sorted(s.train.begin(), s.train.end(),
                                     [&](const auto& a, const auto& b) { return pos(a) < pos(b); }));
                const auto r = split(m, f, seed);
                CHECK(r.train == s.train);
            }
        }
    }
    CHECK_THROWS(split(unpaired(10), 0.0, 1));
    CHECK_THROWS(split(unpaired(10), 1.0, 1));
}

TEST_CASE("paired samples share a side of the split") {
    const auto m = paired(50);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = split(m, 0.8, seed);
        const std::set<std::string> tr(s.train.begin(), s.train.end());
        CHECK(s.train.size() + s.test.size() == 100);
        for (const auto& [a, b] : *m.pair_map) CHECK(tr.count(a) == tr.count(b));
    }
}

TEST_CASE("histogram bin convention") {
    Histogram h{uniform_edges(4), {}};
    CHECK(h.bin_of(0.0) == 0u);
    CHECK(h.bin_of(0.25) == 0u);
    CHECK(h.bin_of(0.2500001) == 1u);
    CHECK(h.bin_of(1.0) == 3u);
    CHECK_FALSE(h.bin_of(1.01).has_value());
    CHECK_FALSE(h.bin_of(-0.01).has_value());
}

TEST_CASE("objects of ten 4x4 squares cover 10 percent and fill one bin") {
    std::vector<SixTuple> samples;
    for (int i = 0; i < 5; ++i) {
        SixTuple t = testing::square_tuple(40, 0, 0, 0, 0);
        for (int q = 0; q < 10; ++q) {
            const int x0 = 1 + 7 * (q % 5) + i % 2;
            const int y0 = 2 + 10 * (q / 5) + i;
            for (int y = y0; y < y0 + 4; ++y)
                for (int x = x0; x < x0 + 4; ++x) {
                    t.object_mask.at(y, x) = 1.0f;
                    t.background_mask.at(y, x) = 0.0f;
                }
        }
        REQUIRE(t.object_mask.count() == 160u);
        samples.push_back(t);
    }
    const auto st = compute_stats(samples, uniform_edges(20));
    const std::size_t expected_bin = *st.object_ratio.bin_of(0.10);
    for (std::size_t b = 0; b < st.object_ratio.counts.size(); ++b) {
        CHECK(st.object_ratio.counts[b] == (b == expected_bin ? 5u : 0u));
    }
}

TEST_CASE("stats recover the shadow ratio by differencing") {
    // A 10x10 square with a 4-row strip of darker gt below it: shadow = 40 px.
    std::vector<SixTuple> samples{testing::square_tuple(20, 10, 5, 2, 4)};
    const auto st = compute_stats(samples, uniform_edges(20));
    CHECK(st.sample_count == 1);
    const std::size_t bin = *st.shadow_ratio.bin_of(40.0 / 400.0);
    CHECK(st.shadow_ratio.counts[bin] == 1u);
    const std::size_t obin = *st.object_ratio.bin_of(100.0 / 400.0);
    CHECK(st.object_ratio.counts[obin] == 1u);
}

TEST_CASE("single-sample probability map is binary; counts sum to the sample count") {
    std::vector<SixTuple> one{scenegen::render_six_tuple(scenegen::sample_spec(4, 64))};
    const auto st = compute_stats(one, uniform_edges(20));
    for (double p : st.illum_probability) CHECK((p == 0.0 || p == 1.0));

    std::vector<SixTuple> many;
    for (std::uint64_t s = 0; s < 40; ++s) many.push_back(scenegen::render_six_tuple(scenegen::sample_spec(s, 32)));
    const auto ms = compute_stats(many, uniform_edges(20));
    const auto total = [](const Histogram& h) { return std::accumulate(h.counts.begin(), h.counts.end(), std::size_t{0}); };
    CHECK(total(ms.object_ratio) == 40u);
    CHECK(total(ms.shadow_ratio) == 40u);
    for (double p : ms.illum_probability) CHECK((p >= 0.0 && p <= 1.0));
    CHECK_THROWS(compute_stats(std::vector<SixTuple>{}, uniform_edges(20)));
}

TEST_CASE("object ratios of a 500-sample set stay within the generator range") {
    std::vector<SixTuple> samples;
    for (std::uint64_t s = 0; s < 500; ++s) samples.push_back(scenegen::render_six_tuple(scenegen::sample_spec(s, 32)));
    const auto edges = uniform_edges(20);
    const auto st = compute_stats(samples, edges);
    for (std::size_t b = 0; b < st.object_ratio.counts.size(); ++b) {
        if (st.object_ratio.counts[b] == 0) continue;
        CHECK(edges[b + 1] > scenegen::kMinObjectRatio);
        CHECK(edges[b] < scenegen::kMaxObjectRatio);
    }
    for (const auto& t : samples) {
        const double r = double(t.object_mask.count()) / double(32 * 32);
        CHECK((r >= 0.05 && r <= 0.3));
    }
}
