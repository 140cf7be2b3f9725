#include <doctest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "sigan/losses.hpp"

using namespace sigan;
using namespace sigan::losses;
using nn::Shape;
using nn::Tensor;
using sigan::testing::random_tensor;

namespace {

nn::Var<double> filled(Shape s, double v) { return nn::constant(Tensor<double>(s, v)); }

const Shape kEnv{1, 3, 16, 32};

}  // namespace

TEST_CASE("l_illu uses the sum-of-squares convention") {
    const auto gt = nn::constant(random_tensor<double>(kEnv, 1, 0.0, 2.0));
    Tensor<double> shifted = gt.value();
    for (auto& v : shifted.data()) v += 0.1;
    const auto off = nn::constant(shifted);
    CHECK(l_illu(gt, gt, gt, gt).item() == 0.0);
    CHECK(l_illu(off, gt, off, gt).item() == doctest::Approx(30.72).epsilon(1e-9));
    CHECK(l_illu(off, gt, gt, gt).item() == doctest::Approx(15.36).epsilon(1e-9));
    CHECK_THROWS_AS(l_illu(gt, filled(Shape{1, 3, 8, 16}, 0), gt, gt), nn::ShapeError);
}

TEST_CASE("l_nonillu is a symmetric mean of squares") {
    const auto a = nn::constant(random_tensor<double>(Shape{2, 5, 3, 3}, 2));
    Tensor<double> shifted = a.value();
    for (auto& v : shifted.data()) v -= 0.3;
    CHECK(l_nonillu(a, a).item() == 0.0);
    CHECK(l_nonillu(a, nn::constant(shifted)).item() == doctest::Approx(0.09).epsilon(1e-9));
    const auto b = nn::constant(random_tensor<double>(Shape{2, 5, 3, 3}, 3));
    CHECK(l_nonillu(a, b).item() == l_nonillu(b, a).item());
    CHECK_THROWS_AS(l_nonillu(a, filled(Shape{2, 4, 3, 3}, 0)), nn::ShapeError);
}

TEST_CASE("perceptual extractor") {
    const PerceptualExtractor<double> ext(0x5eed, 8);
    const auto img = nn::constant(random_tensor<double>(Shape{1, 3, 256, 256}, 4, 0.0, 1.0));
    const auto f = ext.features(img);
    REQUIRE(f.size() == 3);
    CHECK(f.back().shape().h == 32);
    CHECK(f.back().shape().c == 256 / 8);
    CHECK(ext.features(img).back().value().storage() == f.back().value().storage());
    const PerceptualExtractor<double> twin(0x5eed, 8);
    for (std::size_t i = 0; i < ext.weights().size(); ++i) {
        CHECK(twin.weights()[i].value().storage() == ext.weights()[i].value().storage());
    }
    CHECK_FALSE(ext.weights()[0].requires_grad());
    CHECK(PerceptualExtractor<double>::fit_input(filled(Shape{1, 3, 16, 32}, 1)).shape() == (Shape{1, 3, 32, 64}));
}

TEST_CASE("l_per identity, sign and additivity") {
    const PerceptualExtractor<double> ext(0x5eed, 16);
    const auto po = nn::constant(random_tensor<double>(kEnv, 5, 0.0, 2.0));
    const auto go = nn::constant(random_tensor<double>(kEnv, 6, 0.0, 2.0));
    const auto pb = nn::constant(random_tensor<double>(kEnv, 7, 0.0, 2.0));
    const auto gb = nn::constant(random_tensor<double>(kEnv, 8, 0.0, 2.0));
    const auto r = nn::constant(random_tensor<double>(Shape{1, 3, 64, 64}, 9, 0.0, 1.0));
    const auto g = nn::constant(random_tensor<double>(Shape{1, 3, 64, 64}, 10, 0.0, 1.0));
    CHECK(l_per(go, go, gb, gb, g, g, ext).item() == 0.0);
    const double total = l_per(po, go, pb, gb, r, g, ext).item();
    CHECK(total >= 0.0);
    const double parts =
        perceptual_term(po, go, ext).item() + perceptual_term(pb, gb, ext).item() + perceptual_term(r, g, ext).item();
    CHECK(total == doctest::Approx(parts).epsilon(1e-12));
}

TEST_CASE("losses are non-negative for random inputs") {
    const PerceptualExtractor<double> ext(1, 16);
    for (std::uint64_t s = 0; s < 10; ++s) {
        const auto a = nn::constant(random_tensor<double>(kEnv, s, -3.0, 3.0));
        const auto b = nn::constant(random_tensor<double>(kEnv, s + 100, -3.0, 3.0));
        CHECK(l_illu(a, b, b, a).item() >= 0.0);
        CHECK(l_nonillu(a, b).item() >= 0.0);
        CHECK(perceptual_term(a, b, ext).item() >= 0.0);
    }
}

TEST_CASE("adversarial loss closed forms") {
    const double ln2 = std::numbers::ln2;
    const auto [d, g] = l_adv(0.5, 0.5);
    CHECK(d == doctest::Approx(2 * ln2).epsilon(1e-12));
    CHECK(g == doctest::Approx(ln2).epsilon(1e-12));
    CHECK(l_adv(1.0 - 1e-12, 1e-12).first < 1e-6);
    for (double real : {0.0, 1.0})
        for (double fake : {0.0, 1.0}) {
            const auto [dl, gl] = l_adv(real, fake);
            CHECK(std::isfinite(dl));
            CHECK(std::isfinite(gl));
        }
    const auto half = filled(Shape{3, 1, 1, 1}, 0.5);
    const auto v = l_adv(half, half);
    CHECK(v.d_loss.item() == doctest::Approx(2 * ln2).epsilon(1e-12));
    CHECK(v.g_loss.item() == doctest::Approx(ln2).epsilon(1e-12));
    const auto edge = l_adv(filled(Shape{1, 1, 1, 1}, 0.0), filled(Shape{1, 1, 1, 1}, 1.0));
    CHECK(std::isfinite(edge.d_loss.item()));
    CHECK(std::isfinite(edge.g_loss.item()));
}

TEST_CASE("l_total weighting and gating") {
    const LossWeights w;
    LossReport unit{1, 1, 1, 1, 1, 0};
    CHECK(l_total(unit, w, AblationFlags::all_on()) == 31.54);
    CHECK(l_total(unit, w, AblationFlags::all_off()) == 25.0);
    LossReport r{0.37, 0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(l_total(r, w, AblationFlags::all_off()) == 25.0 * 0.37);
    CHECK(l_total(LossReport{}, w, AblationFlags::all_on()) == 0.0);

    // linear in each component with its beta as coefficient
    const LossReport base{0.3, 0.7, 1.1, 0.9, 0.2, 0};
    const double t0 = l_total(base, w, AblationFlags::all_on());
    LossReport bumped = base;
    bumped.l_illu += 1;
    CHECK(l_total(bumped, w, {}) - t0 == doctest::Approx(w.beta1));
    bumped = base;
    bumped.l_nonillu += 1;
    CHECK(l_total(bumped, w, {}) - t0 == doctest::Approx(w.beta2));
    bumped = base;
    bumped.l_per += 1;
    CHECK(l_total(bumped, w, {}) - t0 == doctest::Approx(w.beta3));
    bumped = base;
    bumped.l_adv_g += 1;
    CHECK(l_total(bumped, w, {}) - t0 == doctest::Approx(w.beta4));
    bumped = base;
    bumped.l_adv_d += 1;
    CHECK(l_total(bumped, w, {}) == t0);

    const auto one = filled(Shape{1, 1, 1, 1}, 1.0);
    CHECK(l_total(one, one, one, one, w, AblationFlags::all_on()).item() == doctest::Approx(31.54).epsilon(1e-15));
    CHECK(l_total(one, nn::Var<double>{}, nn::Var<double>{}, nn::Var<double>{}, w, AblationFlags::all_on()).item() ==
          25.0);
}

TEST_CASE("loss report JSON round trip") {
    const LossReport r{1.5, 2.5, 3.5, 4.5, 5.5, 6.5};
    const nlohmann::json j = r;
    const auto back = j.get<LossReport>();
    CHECK(back.l_illu == r.l_illu);
    CHECK(back.l_total == r.l_total);
    CHECK(j.at("l_adv_d") == 5.5);
}
