#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "sigan/model.hpp"

using namespace sigan;
using namespace sigan::model;
using nn::Shape;
using nn::Tensor;
using nn::Var;
using sigan::testing::random_tensor;
using sigan::testing::rendered_inputs;
using sigan::testing::tiny_model;

namespace {

const nn::ForwardContext<float> kTrain{true};
const nn::ForwardContext<float> kInfer{false};

bool all_finite(const Tensor<float>& t) {
    for (float v : t.data())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace

TEST_CASE("MSA keeps the input shape and yields attention strictly inside (0,1)") {
    nn::ParameterStore<float> store(3);
    MsaBlock<float> block(store, "msa", 16);
    const auto x = nn::constant(random_tensor<float>(Shape{1, 16, 32, 32}, 1));
    std::vector<Var<float>> att;
    const auto y = block(x, &att);
    CHECK(y.shape() == x.shape());
    REQUIRE(att.size() == 3);
    for (const auto& a : att) {
        CHECK(a.shape() == x.shape());
        for (float v : a.value().data()) CHECK((v > 0.0f && v < 1.0f));
    }
}

TEST_CASE("saturated MSA gates pass the input through") {
    nn::ParameterStore<float> store(3);
    MsaBlock<float> block(store, "msa", 8);
    for (auto b : block.gate_biases()) b.mutable_value().fill(-1e4f);
    for (float v : block.fuse().bias().value().data()) REQUIRE(v == 0.0f);
    const auto x = nn::constant(random_tensor<float>(Shape{2, 8, 8, 8}, 2));
    const auto y = block(x);
    for (std::size_t i = 0; i < x.value().numel(); ++i) CHECK(std::abs(y.value()[i] - x.value()[i]) <= 1e-5f);
}

TEST_CASE("MSA rejects odd spatial sizes") {
    nn::ParameterStore<float> store(3);
    MsaBlock<float> block(store, "msa", 4);
    CHECK_THROWS_AS(block(nn::constant(Tensor<float>(Shape{1, 4, 5, 5}))), ConfigError);
    CHECK_THROWS_AS(Generator<float>(tiny_model(32), 0), ConfigError);
}

TEST_CASE("encoder staging") {
    SUBCASE("side 64 has a 2x2 bottleneck") {
        Generator<float> g(tiny_model(64), 1);
        const auto o = g.forward(rendered_inputs<float>(64, 1, 0), kTrain);
        CHECK(o.skips.back().shape().h == 2);
        CHECK(o.bottleneck.f_illu_bg.shape().h == 2);
        CHECK(o.bottleneck.f_illu_bg.shape().c == g.config().illu_channels());
    }
    SUBCASE("side 256 gives skips of sides 128, 64, 32, 16, 8") {
        ModelConfig c = tiny_model(256);
        c.base_channels = 2;
        c.max_channels = 16;
        Generator<float> g(c, 1);
        const auto o = g.forward(rendered_inputs<float>(256, 1, 0), kInfer);
        REQUIRE(o.skips.size() == 5);
        const int sides[] = {128, 64, 32, 16, 8};
        for (int i = 0; i < 5; ++i) CHECK(o.skips[i].shape().h == sides[i]);
        CHECK(o.relit.shape() == (Shape{1, 3, 256, 256}));
        CHECK(o.obj_illum.shape() == (Shape{1, 3, 16, 32}));
        CHECK(o.bg_illum.shape() == (Shape{1, 3, 16, 32}));
    }
    SUBCASE("side must divide by 32") {
        CHECK_THROWS_AS(Generator<float>(tiny_model(48), 0), ConfigError);
    }
}

TEST_CASE("disabling MSA removes only the MSA tensors") {
    AblationFlags off = AblationFlags::all_on();
    off.use_msa = false;
    Generator<float> with(tiny_model(64), 5);
    Generator<float> without(tiny_model(64, off), 5);
    std::size_t msa = 0;
    for (const auto& p : with.params().params()) {
        const auto* q = without.params().find(p.name);
        if (p.name.find(".msa.") != std::string::npos) {
            CHECK(q == nullptr);
            ++msa;
        } else {
            REQUIRE(q != nullptr);
            CHECK(q->value().storage() == p.var.value().storage());
        }
    }
    CHECK(msa > 0);
    CHECK(with.params().params().size() == without.params().params().size() + msa);
}

TEST_CASE("illumination exchange") {
    const auto b = nn::constant(random_tensor<float>(Shape{1, 8, 2, 2}, 3));
    const auto bg = nn::constant(random_tensor<float>(Shape{1, 4, 2, 2}, 4));
    SUBCASE("zero mask zeroes the object features") {
        const auto r = illumination_exchange(b, bg, Tensor<float>(Shape{1, 1, 64, 64}, 0.0f), 4, true);
        for (float v : r.split.f_illu_obj.value().data()) CHECK(v == 0.0f);
        for (float v : r.split.f_noillu_obj.value().data()) CHECK(v == 0.0f);
        for (float v : r.obj_illum_feature.value().data()) CHECK(v == 0.0f);
    }
    SUBCASE("all-ones mask is the identity gate") {
        const auto r = illumination_exchange(b, bg, Tensor<float>(Shape{1, 1, 64, 64}, 1.0f), 4, true);
        CHECK(r.split.f_obj.value().storage() == b.value().storage());
    }
    SUBCASE("gating is zero wherever the resized mask is zero") {
        Tensor<float> m(Shape{1, 1, 64, 64}, 0.0f);
        for (int y = 40; y < 50; ++y)
            for (int x = 5; x < 20; ++x) m.at(0, 0, y, x) = 1.0f;
        const auto small = resize_mask(m, 2, 2);
        const auto r = illumination_exchange(b, bg, m, 4, true);
        for (int c = 0; c < 8; ++c)
            for (int y = 0; y < 2; ++y)
                for (int x = 0; x < 2; ++x)
                    if (small.at(0, 0, y, x) == 0.0f) CHECK(r.split.f_obj.value().at(0, c, y, x) == 0.0f);
        CHECK(small.at(0, 0, 1, 0) > 0.0f);
        CHECK(small.at(0, 0, 0, 1) == 0.0f);
    }
    SUBCASE("decoder input channel arithmetic") {
        const auto m = Tensor<float>(Shape{1, 1, 64, 64}, 1.0f);
        const auto with = illumination_exchange(b, bg, m, 4, true);
        CHECK(with.decoder_input.shape().c == 8);
        // background illumination replaces the object illumination channels
        for (int c = 0; c < 4; ++c)
            for (int i = 0; i < 4; ++i)
                CHECK(with.decoder_input.value()[std::size_t(4 + c) * 4 + i] == bg.value()[std::size_t(c) * 4 + i]);
        const auto without = illumination_exchange(b, bg, m, 4, false);
        CHECK(without.decoder_input.value().storage() == b.value().storage());
        CHECK(without.obj_illum_feature.shape() == (Shape{1, 4, 4, 4}));
    }
    SUBCASE("incompatible background feature") {
        const auto wrong = nn::constant(Tensor<float>(Shape{1, 3, 2, 2}));
        CHECK_THROWS_AS(illumination_exchange(b, wrong, Tensor<float>(Shape{1, 1, 64, 64}), 4, true), nn::ShapeError);
    }
}

TEST_CASE("zero object mask yields the bias-only object illumination") {
    Generator<float> g(tiny_model(64), 7);
    auto in = rendered_inputs<float>(64, 1, 3);
    in.object_mask.fill(0.0f);
    in.background_mask.fill(1.0f);
    const auto o = g.forward(in, kInfer);
    const Shape fs = o.bottleneck.f_illu_obj.shape();
    const auto bias_only =
        g.object_illum_decoder()(nn::constant(Tensor<float>(Shape{1, fs.c, 2 * fs.h, 2 * fs.w}, 0.0f)));
    CHECK(o.obj_illum.value().storage() == bias_only.value().storage());
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 16; ++r)
            for (int col = 0; col < 32; ++col)
                CHECK(o.obj_illum.value().at(0, c, r, col) == doctest::Approx(o.obj_illum.value().at(0, c, 0, 0)));
}

TEST_CASE("generator output ranges, shapes and determinism") {
    for (int side : {64, 128}) {
        Generator<float> g(tiny_model(side), 11);
        const auto in = rendered_inputs<float>(side, 2, 5);
        const auto o = g.forward(in, kInfer);
        CHECK(o.relit.shape() == (Shape{2, 3, side, side}));
        CHECK(o.obj_illum.shape() == (Shape{2, 3, 16, 32}));
        for (float v : o.relit.value().data()) CHECK((v >= 0.0f && v <= 1.0f));
        for (float v : o.obj_illum.value().data()) CHECK(v >= 0.0f);
        for (float v : o.bg_illum.value().data()) CHECK(v >= 0.0f);
        for (const auto& a : o.attention)
            for (float v : a.value().data()) CHECK((v >= 0.0f && v <= 1.0f));
        const auto again = g.forward(in, kInfer);
        CHECK(again.relit.value().storage() == o.relit.value().storage());
        CHECK(again.obj_illum.value().storage() == o.obj_illum.value().storage());
        Generator<float> twin(tiny_model(side), 11);
        CHECK(twin.forward(in, kInfer).relit.value().storage() == o.relit.value().storage());
    }
}

TEST_CASE("generator attention maps lie strictly inside (0,1)") {
    // float32 rounds sigmoid(x) to 1 beyond x ~ 17, so the open interval is checked in double
    for (int side : {64, 128})
        for (bool training : {false, true}) {
            CAPTURE(side);
            CAPTURE(training);
            Generator<double> g(tiny_model(side), 11);
            const auto o = g.forward(rendered_inputs<double>(side, 2, 5), nn::ForwardContext<double>{training});
            REQUIRE(o.attention.size() == 15);
            for (const auto& a : o.attention)
                for (double v : a.value().data()) CHECK((v > 0.0 && v < 1.0));
        }
}

TEST_CASE("all flags off vs on: different parameter counts, both finite") {
    Generator<float> off(tiny_model(64, AblationFlags::all_off()), 1);
    Generator<float> on(tiny_model(64), 1);
    CHECK(off.params().parameter_count() != on.params().parameter_count());
    const auto in = rendered_inputs<float>(64, 1, 9);
    CHECK(all_finite(off.forward(in, kTrain).relit.value()));
    CHECK(all_finite(on.forward(in, kTrain).relit.value()));
}

TEST_CASE("illumination encoder output is finite for an all-zero image") {
    Generator<float> g(tiny_model(64), 1);
    auto in = rendered_inputs<float>(64, 1, 9);
    in.composite.fill(0.0f);
    const auto o = g.forward(in, kTrain);
    CHECK(all_finite(o.bottleneck.f_illu_bg.value()));
    CHECK(all_finite(o.bg_illum.value()));
}

TEST_CASE("every skip connection influences the output") {
    Generator<float> g(tiny_model(64), 13);
    const auto in = rendered_inputs<float>(64, 1, 2);
    const auto base = g.forward(in, kInfer).relit.value();
    for (int i = 0; i < 5; ++i) {
        const auto cut = g.forward_without_skip(in, kInfer, i).relit.value();
        double diff = 0;
        for (std::size_t k = 0; k < base.numel(); ++k) diff += std::abs(double(base[k]) - cut[k]);
        CHECK_MESSAGE(diff > 0.0, "skip " << i);
    }
}

TEST_CASE("illumination decoder") {
    nn::ParameterStore<float> store(2);
    IlluminationDecoder<float> dec(store, "dec", 4, 6, 16, 32);
    const auto y = dec(nn::constant(random_tensor<float>(Shape{1, 4, 4, 4}, 3)));
    CHECK(y.shape() == (Shape{1, 3, 16, 32}));
    for (float v : y.value().data()) CHECK(v >= 0.0f);
    const auto z = dec(nn::constant(Tensor<float>(Shape{1, 4, 4, 4}, 0.0f))).value();
    for (int c = 0; c < 3; ++c)
        for (int r = 0; r < 16; ++r)
            for (int col = 0; col < 32; ++col) CHECK(z.at(0, c, r, col) == doctest::Approx(z.at(0, c, 0, 0)));
}

TEST_CASE("discriminator") {
    Discriminator<float> d(tiny_model(64), 4);
    const auto in = rendered_inputs<float>(64, 3, 1);
    const auto img = nn::constant(in.composite);
    const auto p = d.forward(img, in.object_mask);
    CHECK(p.shape() == (Shape{3, 1, 1, 1}));
    for (float v : p.value().data()) CHECK((v > 0.0f && v < 1.0f));

    SUBCASE("per-sample scores do not depend on batch order") {
        for (int n = 0; n < 3; ++n) {
            const auto one = rendered_inputs<float>(64, 1, 1 + n);
            const auto q = d.forward(nn::constant(one.composite), one.object_mask);
            CHECK(q.value()[0] == doctest::Approx(p.value()[n]).epsilon(1e-6));
        }
    }
    SUBCASE("zero final conv gives exactly one half") {
        auto w = d.final_conv().weight();
        auto b = d.final_conv().bias();
        w.mutable_value().fill(0.0f);
        b.mutable_value().fill(0.0f);
        const auto q = d.forward(img, in.object_mask);
        for (float v : q.value().data()) CHECK(v == 0.5f);
    }
}

TEST_CASE("conversions round trip") {
    const auto t = scenegen::render_six_tuple(scenegen::sample_spec(3, 32));
    CHECK(image_from(to_tensor<float>(t.composite)) == t.composite);
    CHECK(envmap_from(to_tensor<float>(t.object_illum)) == t.object_illum);
    const auto s = stack<float>({to_tensor<float>(t.composite), to_tensor<float>(t.gt_harmonized)});
    CHECK(image_from(s, 1) == t.gt_harmonized);
    CHECK_THROWS_AS(image_from(s, 2), nn::ShapeError);
}
