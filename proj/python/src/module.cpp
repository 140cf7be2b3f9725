#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "sigan/cli.hpp"
#include "sigan/evalkit.hpp"
#include "sigan/losses.hpp"
#include "sigan/scenegen.hpp"
#include "sigan/trainer.hpp"

namespace py = pybind11;
using namespace sigan;

namespace {

using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

F32 to_numpy(const std::vector<float>& v, std::vector<py::ssize_t> shape) {
    F32 a(shape);
    std::copy(v.begin(), v.end(), a.mutable_data());
    return a;
}

F32 image_array(const Image& img) { return to_numpy(img.pixels, {3, img.height, img.width}); }
F32 mask_array(const Mask& m) { return to_numpy(m.pixels, {m.height, m.width}); }
F32 envmap_array(const EnvMap& e) { return to_numpy(e.radiance, {3, e.height, e.width}); }

/// Accepts a (3, H, W) float array.
Image image_from(const F32& a) {
    if (a.ndim() != 3 || a.shape(0) != 3) throw py::value_error("expected an array of shape (3, H, W)");
    Image img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
    return img;
}

py::dict tuple_dict(const SixTuple& t) {
    py::dict d;
    d["sample_id"] = t.sample_id;
    d["composite"] = image_array(t.composite);
    d["object_mask"] = mask_array(t.object_mask);
    d["background_mask"] = mask_array(t.background_mask);
    d["object_illum"] = envmap_array(t.object_illum);
    d["background_illum"] = envmap_array(t.background_illum);
    d["gt_harmonized"] = image_array(t.gt_harmonized);
    return d;
}

py::dict flags_dict(const AblationFlags& f) {
    py::dict d;
    d["use_msa"] = f.use_msa;
    d["use_iem"] = f.use_iem;
    d["use_l_per"] = f.use_l_per;
    d["use_l_nonillu"] = f.use_l_nonillu;
    d["use_l_adv"] = f.use_l_adv;
    return d;
}

}  // namespace

PYBIND11_MODULE(_sigan, m) {
    m.doc() = "Bindings for the sigan C++ core";

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<std::string> full{"sigan"};
            full.insert(full.end(), args.begin(), args.end());
            std::ostringstream out, err;
            cli::CommandResult r;
            {
                py::gil_scoped_release release;
                r = cli::run(full, out, err);
            }
            return py::make_tuple(r.exit_code, out.str(), err.str());
        },
        py::arg("args"), "Runs one command line; returns (exit_code, stdout, stderr).");

    m.def(
        "render_sample",
        [](std::uint64_t seed, int side) { return tuple_dict(scenegen::render_six_tuple(scenegen::sample_spec(seed, side))); },
        py::arg("seed"), py::arg("side") = 64, "Renders the six-tuple of a seeded random scene as numpy arrays.");

    m.def(
        "render_pair",
        [](std::uint64_t seed, int side) {
            const auto [a, b] = scenegen::sample_spec_pair(seed, side);
            return py::make_tuple(tuple_dict(scenegen::render_six_tuple(a)), tuple_dict(scenegen::render_six_tuple(b)));
        },
        py::arg("seed"), py::arg("side") = 64, "Renders two samples of one scene that differ only in object light.");

    m.def("rmse", [](const F32& a, const F32& b) { return eval::rmse(image_from(a), image_from(b)); });
    m.def("psnr", [](const F32& a, const F32& b) { return eval::psnr(image_from(a), image_from(b)); });
    m.def("ssim", [](const F32& a, const F32& b) { return eval::ssim(image_from(a), image_from(b)); });

    m.def(
        "l_total",
        [](double l_illu, double l_nonillu, double l_per, double l_adv_g) {
            const losses::LossReport r{l_illu, l_nonillu, l_per, l_adv_g, 0, 0};
            return losses::l_total(r, LossWeights{}, AblationFlags::all_on());
        },
        py::arg("l_illu"), py::arg("l_nonillu"), py::arg("l_per"), py::arg("l_adv_g"),
        "Weighted total loss with the default weights and every term enabled.");

    m.def("ablation_rows", [] {
        py::list rows;
        for (const auto& r : train::ablation_rows()) rows.append(py::make_tuple(r.name, flags_dict(r.flags)));
        return rows;
    });
}
