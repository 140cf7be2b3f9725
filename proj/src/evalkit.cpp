#include "sigan/evalkit.hpp"

#include <cmath>
#include <stdexcept>

#include "sigan/dataset.hpp"
#include "sigan/png_io.hpp"

namespace sigan::eval {

namespace {

void require_same(const Image& a, const Image& b, const char* what) {
    if (a.height != b.height || a.width != b.width || a.pixels.size() != b.pixels.size()) {
        throw std::invalid_argument(std::string(what) + ": image shapes differ");
    }
}

double mse(const Image& a, const Image& b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.pixels.size());
}

/// Separable correlation with a 1-D kernel over valid positions only.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w, const std::vector<double>& k) {
    const int n = static_cast<int>(k.size());
    const int ow = w - n + 1;
    const int oh = h - n + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[i] * src[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * ow + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

nlohmann::json metric_json(const Metrics& m) {
    nlohmann::json p = std::isinf(m.psnr) ? nlohmann::json("inf") : nlohmann::json(m.psnr);
    return {{"rmse", m.rmse}, {"ssim", m.ssim}, {"psnr", p}};
}

Metrics metric_from(const nlohmann::json& j) {
    Metrics m;
    m.rmse = j.at("rmse").get<double>();
    m.ssim = j.at("ssim").get<double>();
    const auto& p = j.at("psnr");
    m.psnr = p.is_string() ? std::numeric_limits<double>::infinity() : p.get<double>();
    return m;
}

}  // namespace

double rmse(const Image& a, const Image& b) {
    require_same(a, b, "rmse");
    return std::sqrt(mse(a, b));
}

double psnr(const Image& a, const Image& b, double max_value) {
    require_same(a, b, "psnr");
    const double e = mse(a, b);
    if (e == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(max_value * max_value / e);
}

double ssim(const Image& a, const Image& b, const SsimOptions& opt) {
    require_same(a, b, "ssim");
    if (a.height < opt.window || a.width < opt.window) {
        throw std::invalid_argument("ssim: image smaller than the " + std::to_string(opt.window) + "px window");
    }
    std::vector<double> k(static_cast<std::size_t>(opt.window));
    const double c = (opt.window - 1) / 2.0;
    double norm = 0;
    for (int i = 0; i < opt.window; ++i) {
        k[i] = std::exp(-(i - c) * (i - c) / (2 * opt.sigma * opt.sigma));
        norm += k[i];
    }
    for (double& v : k) v /= norm;

    const double c1 = (opt.k1 * opt.dynamic_range) * (opt.k1 * opt.dynamic_range);
    const double c2 = (opt.k2 * opt.dynamic_range) * (opt.k2 * opt.dynamic_range);
    const int h = a.height;
    const int w = a.width;
    const std::size_t plane = a.plane();
    double total = 0;
    std::size_t count = 0;
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = a.pixels[ch * plane + i];
            y[i] = b.pixels[ch * plane + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w, k);
        const auto my = filter_valid(y, h, w, k);
        const auto sxx = filter_valid(xx, h, w, k);
        const auto syy = filter_valid(yy, h, w, k);
        const auto sxy = filter_valid(xy, h, w, k);
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cov = sxy[i] - mx[i] * my[i];
            total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
                     ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

Metrics measure(const Image& pred, const Image& gt) { return {rmse(pred, gt), ssim(pred, gt), psnr(pred, gt)}; }

void aggregate(MetricReport& r) {
    Metrics a, b;
    for (const auto& s : r.per_sample) {
        a.rmse += s.relit.rmse;
        a.ssim += s.relit.ssim;
        a.psnr += s.relit.psnr;
        b.rmse += s.baseline.rmse;
        b.ssim += s.baseline.ssim;
        b.psnr += s.baseline.psnr;
    }
    const double n = static_cast<double>(r.per_sample.size());
    if (n > 0) {
        a = {a.rmse / n, a.ssim / n, a.psnr / n};
        b = {b.rmse / n, b.ssim / n, b.psnr / n};
    }
    r.aggregate = a;
    r.baseline = b;
}

void to_json(nlohmann::json& j, const MetricReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_sample) {
        per.push_back({{"sample_id", s.sample_id}, {"relit", metric_json(s.relit)}, {"baseline", metric_json(s.baseline)}});
    }
    j = {{"config_digest", r.config_digest},
         {"region", r.region},
         {"per_sample", per},
         {"aggregate", metric_json(r.aggregate)},
         {"baseline", metric_json(r.baseline)}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
    r.config_digest = j.at("config_digest").get<std::string>();
    r.region = j.value("region", std::string("whole_image"));
    r.per_sample.clear();
    for (const auto& s : j.at("per_sample")) {
        r.per_sample.push_back({s.at("sample_id").get<std::string>(), metric_from(s.at("relit")),
                                metric_from(s.at("baseline"))});
    }
    r.aggregate = metric_from(j.at("aggregate"));
    r.baseline = metric_from(j.at("baseline"));
}

Image comparison_grid(const Image& composite, const Image& relit, const Image& gt) {
    require_same(composite, relit, "comparison_grid");
    require_same(composite, gt, "comparison_grid");
    const int w = composite.width;
    Image grid(composite.height, 3 * w);
    const Image* parts[3] = {&composite, &relit, &gt};
    for (int p = 0; p < 3; ++p)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < composite.height; ++y)
                for (int x = 0; x < w; ++x) grid.at(c, y, p * w + x) = parts[p]->at(c, y, x);
    return grid;
}

Image relight(const model::Generator<float>& gen, const SixTuple& t) {
    nn::NoGradGuard guard;
    const nn::ForwardContext<float> ctx{false};
    const auto out = gen.forward(model::make_inputs<float>(t.composite, t.object_mask, t.background_mask), ctx);
    return model::image_from(out.relit.value());
}

MetricReport evaluate(const model::Generator<float>& gen, const std::vector<std::string>& ids,
                      const fs::path& data_dir, const EvaluateOptions& options) {
    MetricReport r;
    r.config_digest = gen.config().digest();
    if (!options.grid_dir.empty()) fs::create_directories(options.grid_dir);
    for (const auto& id : ids) {
        const SixTuple t = dataset::read_sample(data_dir, id);
        const Image relit = relight(gen, t);
        r.per_sample.push_back({id, measure(relit, t.gt_harmonized), measure(t.composite, t.gt_harmonized)});
        if (!options.grid_dir.empty()) {
            png::write_image(options.grid_dir / (id + ".png"), comparison_grid(t.composite, relit, t.gt_harmonized));
        }
    }
    aggregate(r);
    return r;
}

}  // namespace sigan::eval
