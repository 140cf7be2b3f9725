#pragma once

// Finite-difference checks for every loss term and every parameter tensor of
// miniature generators and discriminators. Shared by the unit tests and the
// acceptance runner.

#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "sigan/losses.hpp"
#include "sigan/model.hpp"

namespace sigan::testing {

struct GroupResult {
    std::string name;
    GradCheckResult result;
};

inline std::vector<NamedTensor> named_params(const nn::ParameterStore<double>& store, const std::string& prefix = "") {
    std::vector<NamedTensor> out;
    for (const auto& p : store.params())
        if (p.name.rfind(prefix, 0) == 0) out.push_back({p.name, p.var});
    return out;
}

/// Each tensor is its own group.
inline std::vector<GroupResult> per_tensor(const std::function<nn::Var<double>()>& loss,
                                           const std::vector<NamedTensor>& tensors, const GradCheckOptions& opt) {
    std::vector<GroupResult> out;
    for (const auto& t : tensors) out.push_back({t.name, grad_check(loss, {t}, opt)});
    return out;
}

inline std::vector<GroupResult> loss_gradient_groups(const GradCheckOptions& opt = {}) {
    using nn::leaf;
    using nn::Shape;
    std::vector<GroupResult> out;
    const Shape env{1, 3, 2, 4};  // 24 elements
    auto po = leaf(random_tensor<double>(env, 1, 0.0, 2.0));
    auto go = nn::constant(random_tensor<double>(env, 2, 0.0, 2.0));
    auto pb = leaf(random_tensor<double>(env, 3, 0.0, 2.0));
    auto gb = nn::constant(random_tensor<double>(env, 4, 0.0, 2.0));
    out.push_back({"l_illu", grad_check([&] { return losses::l_illu(po, go, pb, gb); },
                                        {{"pred_obj", po}, {"pred_bg", pb}}, opt)});

    auto f1 = leaf(random_tensor<double>(Shape{1, 4, 2, 2}, 5));
    auto f2 = leaf(random_tensor<double>(Shape{1, 4, 2, 2}, 6));
    out.push_back({"l_nonillu", grad_check([&] { return losses::l_nonillu(f1, f2); }, {{"f1", f1}, {"f2", f2}}, opt)});

    const losses::PerceptualExtractor<double> ext(0x5eed, 16);
    auto relit = leaf(random_tensor<double>(Shape{1, 3, 4, 4}, 7, 0.0, 1.0));  // 48 elements
    auto gt = nn::constant(random_tensor<double>(Shape{1, 3, 4, 4}, 8, 0.0, 1.0));
    out.push_back({"l_per", grad_check([&] { return losses::l_per(po, go, pb, gb, relit, gt, ext); },
                                       {{"pred_obj", po}, {"pred_bg", pb}, {"relit", relit}}, opt)});

    nn::Tensor<double> dr(Shape{2, 1, 1, 1});
    dr[0] = 0.7;
    dr[1] = 0.4;
    nn::Tensor<double> df(Shape{2, 1, 1, 1});
    df[0] = 0.3;
    df[1] = 0.55;
    auto d_real = leaf(dr);
    auto d_fake = leaf(df);
    out.push_back({"l_adv_d", grad_check([&] { return losses::l_adv(d_real, d_fake).d_loss; },
                                         {{"d_real", d_real}, {"d_fake", d_fake}}, opt)});
    out.push_back({"l_adv_g", grad_check([&] { return losses::l_adv(d_real, d_fake).g_loss; }, {{"d_fake", d_fake}}, opt)});

    nn::Tensor<double> one(Shape{1, 1, 1, 1});
    one[0] = 0.8;
    auto a = leaf(one);
    one[0] = 1.3;
    auto b = leaf(one);
    one[0] = 0.2;
    auto c = leaf(one);
    one[0] = 2.1;
    auto d = leaf(one);
    out.push_back({"l_total", grad_check([&] { return losses::l_total(a, b, c, d, LossWeights{}, AblationFlags{}); },
                                         {{"l_illu", a}, {"l_nonillu", b}, {"l_per", c}, {"l_adv_g", d}}, opt)});
    return out;
}

/// Fresh attention blocks are the identity (zero fuse weights), which would
/// make every gate gradient exactly zero; give them random fuse weights.
inline void randomize_fuse(const nn::ParameterStore<double>& store, std::uint64_t seed) {
    for (const auto& p : store.params()) {
        if (p.name.size() >= 12 && p.name.compare(p.name.size() - 12, 12, ".fuse.weight") == 0) {
            nn::Var<double> v = p.var;
            v.mutable_value() = random_tensor<double>(v.shape(), seed++, -0.5, 0.5);
        }
    }
}

inline nn::Var<double> generator_probe(const model::Generator<double>& g, const model::GeneratorInputs<double>& in) {
    const nn::ForwardContext<double> ctx{true};
    const auto o = g.forward(in, ctx);
    return nn::add_n<double>({random_probe(o.relit, 11), random_probe(o.obj_illum, 12), random_probe(o.bg_illum, 13)});
}

/// Side-32 generator without MSA (the bottleneck is 1x1), batch of two.
inline std::vector<GroupResult> generator_gradient_groups(const GradCheckOptions& opt = {}) {
    AblationFlags f = AblationFlags::all_on();
    f.use_msa = false;
    model::Generator<double> g(tiny_model(32, f), 3);
    const auto in = rendered_inputs<double>(32, 2, 100);
    return per_tensor([&] { return generator_probe(g, in); }, named_params(g.params()), opt);
}

/// Side-64 generator with every flag on; only the attention tensors, which
/// the side-32 model cannot host.
inline std::vector<GroupResult> attention_gradient_groups(const GradCheckOptions& opt = {}) {
    model::Generator<double> g(tiny_model(64), 3);
    randomize_fuse(g.params(), 40);
    const auto in = rendered_inputs<double>(64, 2, 200);
    std::vector<NamedTensor> msa;
    for (const auto& p : g.params().params())
        if (p.name.find(".msa.") != std::string::npos) msa.push_back({p.name, p.var});
    return per_tensor([&] { return generator_probe(g, in); }, msa, opt);
}

/// Standalone attention block on a random 6-channel 8x8 map.
inline std::vector<GroupResult> msa_block_gradient_groups(const GradCheckOptions& opt = {}) {
    nn::ParameterStore<double> store(9);
    model::MsaBlock<double> block(store, "msa", 6);
    randomize_fuse(store, 20);
    auto x = nn::leaf(random_tensor<double>(nn::Shape{2, 6, 8, 8}, 21));
    auto loss = [&] { return random_probe(block(x), 22); };
    auto groups = per_tensor(loss, named_params(store), opt);
    groups.push_back({"msa.input", grad_check(loss, {{"input", x}}, opt)});
    return groups;
}

inline std::vector<GroupResult> discriminator_gradient_groups(const GradCheckOptions& opt = {}) {
    model::Discriminator<double> d(tiny_model(32), 3);
    auto img = nn::leaf(random_tensor<double>(nn::Shape{2, 3, 32, 32}, 31, 0.0, 1.0));
    const auto mask = rendered_inputs<double>(32, 2, 300).object_mask;
    auto loss = [&] { return random_probe(d.forward(img, mask), 32); };
    auto groups = per_tensor(loss, named_params(d.params()), opt);
    groups.push_back({"disc.input", grad_check(loss, {{"image", img}}, opt)});
    return groups;
}

}  // namespace sigan::testing
