#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>

#include <cstring>
#include <stdexcept>

#include "pspl/train.hpp"

namespace py = pybind11;
using namespace pspl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

ImageGrid grid_from_array(const Array& a, double range) {
    const py::buffer_info info = a.request();
    int h = 0, w = 0, c = 0;
    if (info.ndim == 2) {
        h = static_cast<int>(info.shape[0]);
        w = static_cast<int>(info.shape[1]);
        c = 1;
    } else if (info.ndim == 3) {
        h = static_cast<int>(info.shape[0]);
        w = static_cast<int>(info.shape[1]);
        c = static_cast<int>(info.shape[2]);
        if (c != 1 && c != 3) throw std::invalid_argument("last axis must have 1 or 3 channels");
    } else {
        throw std::invalid_argument("expected a (H, W) or (H, W, C) array");
    }
    ImageGrid g(h, w, c, range);
    std::memcpy(g.data.data(), info.ptr, sizeof(double) * g.data.size());
    return g;
}

py::array array_from_grid(const ImageGrid& g) {
    if (g.channels == 1) {
        py::array_t<double> out({g.height, g.width});
        std::memcpy(out.request().ptr, g.data.data(), sizeof(double) * g.data.size());
        return out;
    }
    py::array_t<double> out({g.height, g.width, g.channels});
    std::memcpy(out.request().ptr, g.data.data(), sizeof(double) * g.data.size());
    return out;
}

SsimConfig ssim_cfg(int window, double sigma, double k1, double k2, double range) {
    SsimConfig cfg;
    cfg.window_size = window;
    cfg.window_sigma = sigma;
    cfg.k1 = k1;
    cfg.k2 = k2;
    cfg.dynamic_range = range;
    return cfg;
}

AttentionSchedule schedule(double gamma, double mu, double alpha, double beta) {
    AttentionSchedule s;
    s.gamma = gamma;
    s.mu = mu;
    s.alpha = alpha;
    s.beta = beta;
    return s;
}

}  // namespace

PYBIND11_MODULE(_pspl, m) {
    m.doc() = "Per-pixel similarity maps, attention schedules, and image helpers.";

    m.def(
        "ssim_map",
        [](const Array& sr, const Array& hr, int window, double sigma, double k1, double k2,
           double range) {
            const SsimConfig cfg = ssim_cfg(window, sigma, k1, k2, range);
            return array_from_grid(
                ssim_map(grid_from_array(sr, range), grid_from_array(hr, range), cfg));
        },
        py::arg("sr"), py::arg("hr"), py::arg("window") = 11, py::arg("sigma") = 1.5,
        py::arg("k1") = 0.01, py::arg("k2") = 0.03, py::arg("range") = 1.0,
        "Per-pixel similarity map (H, W); 3-channel inputs use luminance.");

    m.def(
        "mean_ssim",
        [](const Array& sr, const Array& hr, int window, double sigma, double k1, double k2,
           double range) {
            const SsimConfig cfg = ssim_cfg(window, sigma, k1, k2, range);
            return mean_ssim(grid_from_array(sr, range), grid_from_array(hr, range), cfg);
        },
        py::arg("sr"), py::arg("hr"), py::arg("window") = 11, py::arg("sigma") = 1.5,
        py::arg("k1") = 0.01, py::arg("k2") = 0.03, py::arg("range") = 1.0);

    m.def(
        "attention_map",
        [](const Array& similarity, long step, double gamma, double mu, double alpha,
           double beta) {
            return array_from_grid(
                attention_map(grid_from_array(similarity, 1.0), schedule(gamma, mu, alpha, beta),
                              step));
        },
        py::arg("similarity"), py::arg("step"), py::arg("gamma") = 2.0, py::arg("mu") = -1.0,
        py::arg("alpha") = 1.0, py::arg("beta") = 0.0,
        "Attention weights for a similarity map at a 1-based schedule step.");

    m.def(
        "delta_at",
        [](long step, double alpha, double beta) {
            AttentionSchedule s;
            s.alpha = alpha;
            s.beta = beta;
            return delta_at(s, step);
        },
        py::arg("step"), py::arg("alpha") = 1.0, py::arg("beta") = 0.0);

    m.def(
        "resize",
        [](const Array& img, int height, int width, double range) {
            return array_from_grid(resize_to(grid_from_array(img, range), height, width));
        },
        py::arg("img"), py::arg("height"), py::arg("width"), py::arg("range") = 1.0,
        "Bicubic resize (Catmull-Rom, replicated borders).");

    m.def(
        "load_png", [](const std::string& path) { return array_from_grid(load_png(path)); },
        py::arg("path"), "8-bit PNG as float64 values in [0, 255].");

    m.def(
        "load_pfm", [](const std::string& path) { return array_from_grid(load_pfm(path)); },
        py::arg("path"));

    m.def(
        "save_pfm",
        [](const Array& img, const std::string& path) {
            save_pfm(grid_from_array(img, 1.0), path);
        },
        py::arg("img"), py::arg("path"), "Write float32 PFM, bottom-up scanlines.");
}
