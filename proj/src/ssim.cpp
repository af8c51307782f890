#include "pspl/ssim.hpp"

#include <cmath>
#include <stdexcept>

#include "pspl/parallel.hpp"

namespace pspl {

void SsimConfig::validate() const {
    if (window_size < 3 || window_size % 2 == 0)
        throw std::invalid_argument("SsimConfig: window_size must be odd and >= 3");
    if (!(window_sigma > 0.0)) throw std::invalid_argument("SsimConfig: window_sigma must be > 0");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw std::invalid_argument("SsimConfig: k1, k2 must be > 0");
    if (!(dynamic_range > 0.0))
        throw std::invalid_argument("SsimConfig: dynamic_range must be > 0");
}

std::vector<double> gaussian_window(int size, double sigma) {
    if (size < 1 || size % 2 == 0)
        throw std::invalid_argument("gaussian_window: size must be odd and positive");
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_window: sigma must be > 0");

    const int half = size / 2;
    std::vector<double> w(static_cast<std::size_t>(size) * size);
    double sum = 0.0;
    for (int r = 0; r < size; ++r) {
        const double dy = r - half;
        for (int c = 0; c < size; ++c) {
            const double dx = c - half;
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(r) * size + c] = v;
            sum += v;
        }
    }
    for (double& v : w) v /= sum;
    return w;
}

namespace {

// Weighted first and second moments of a patch pair under a unit-sum window.
struct PatchStats {
    double mean_s, mean_h, var_s, var_h, cov;
};

PatchStats weighted_stats(const PatchView& ps, const PatchView& ph,
                          const std::vector<double>& window) {
    PatchStats st{0.0, 0.0, 0.0, 0.0, 0.0};
    double es2 = 0.0, eh2 = 0.0, esh = 0.0;
    for (std::size_t i = 0; i < window.size(); ++i) {
        const double w = window[i];
        const double s = ps.values[i];
        const double h = ph.values[i];
        st.mean_s += w * s;
        st.mean_h += w * h;
        es2 += w * s * s;
        eh2 += w * h * h;
        esh += w * (s * h);  // grouping keeps the swap-arguments case bitwise symmetric
    }
    st.var_s = es2 - st.mean_s * st.mean_s;
    st.var_h = eh2 - st.mean_h * st.mean_h;
    st.cov = esh - st.mean_s * st.mean_h;
    return st;
}

inline double similarity_ratio(const PatchStats& st, double c1, double c2) {
    const double num = (2.0 * st.mean_s * st.mean_h + c1) * (2.0 * st.cov + c2);
    const double den =
        (st.mean_s * st.mean_s + st.mean_h * st.mean_h + c1) * (st.var_s + st.var_h + c2);
    double v = num / den;
    // The ratio lies in [-1, 1] analytically; strip roundoff dust so the
    // attention transform's domain check never trips on it.
    if (v > 1.0) v = 1.0;
    if (v < -1.0) v = -1.0;
    return v;
}

// Separable filter with a 1-D kernel and mirror padding, fixed summation order.
void filter_rows(const std::vector<double>& src, std::vector<double>& dst, int h, int w,
                 const std::vector<double>& k) {
    const int half = static_cast<int>(k.size()) / 2;
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        const double* line = src.data() + row * w;
        double* out = dst.data() + row * w;
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int t = 0; t < static_cast<int>(k.size()); ++t)
                acc += k[t] * line[mirror_index(c - half + t, w)];
            out[c] = acc;
        }
    });
}

void filter_cols(const std::vector<double>& src, std::vector<double>& dst, int h, int w,
                 const std::vector<double>& k) {
    const int half = static_cast<int>(k.size()) / 2;
    parallel_for(static_cast<std::size_t>(h), [&](std::size_t row) {
        double* out = dst.data() + row * w;
        for (int c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int t = 0; t < static_cast<int>(k.size()); ++t)
                acc += k[t] * src[static_cast<std::size_t>(mirror_index(
                                  static_cast<int>(row) - half + t, h)) * w + c];
            out[c] = acc;
        }
    });
}

void gaussian_filter(std::vector<double>& field, std::vector<double>& scratch, int h, int w,
                     const std::vector<double>& k) {
    filter_rows(field, scratch, h, w, k);
    filter_cols(scratch, field, h, w, k);
}

}  // namespace

double ssim_patch(const PatchView& ps, const PatchView& ph, const SsimConfig& cfg) {
    cfg.validate();
    if (ps.size != cfg.window_size || ph.size != cfg.window_size)
        throw std::invalid_argument("ssim_patch: patch size does not match window_size");
    if (ps.channels != 1 || ph.channels != 1)
        throw std::invalid_argument("ssim_patch: patches must be single-channel");

    const std::vector<double> window = gaussian_window(cfg.window_size, cfg.window_sigma);
    return similarity_ratio(weighted_stats(ps, ph, window), cfg.c1(), cfg.c2());
}

ImageGrid ssim_map(const ImageGrid& sr, const ImageGrid& hr, const SsimConfig& cfg) {
    cfg.validate();
    if (!sr.same_shape(hr))
        throw std::invalid_argument("ssim_map: images must have identical dimensions");
    sr.validate("ssim_map");
    hr.validate("ssim_map");

    const int h = sr.height, w = sr.width;
    const std::size_t n = static_cast<std::size_t>(h) * w;

    // 1-D slice of the window; the separable product reproduces the 2-D window.
    std::vector<double> k(cfg.window_size);
    {
        const int half = cfg.window_size / 2;
        double sum = 0.0;
        for (int i = 0; i < cfg.window_size; ++i) {
            const double d = i - half;
            k[i] = std::exp(-d * d / (2.0 * cfg.window_sigma * cfg.window_sigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
    }

    // Five local-statistics fields: E[s], E[h], E[s^2], E[h^2], E[sh].
    std::vector<double> mu_s = sr.channels == 3 ? to_luminance(sr).data : sr.data;
    std::vector<double> mu_h = hr.channels == 3 ? to_luminance(hr).data : hr.data;
    std::vector<double> e_ss(n), e_hh(n), e_sh(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = mu_s[i], hh = mu_h[i];
        e_ss[i] = s * s;
        e_hh[i] = hh * hh;
        e_sh[i] = s * hh;
    }
    std::vector<double> scratch(n);
    gaussian_filter(mu_s, scratch, h, w, k);
    gaussian_filter(mu_h, scratch, h, w, k);
    gaussian_filter(e_ss, scratch, h, w, k);
    gaussian_filter(e_hh, scratch, h, w, k);
    gaussian_filter(e_sh, scratch, h, w, k);

    const double c1 = cfg.c1(), c2 = cfg.c2();
    ImageGrid map(h, w, 1, 1.0);
    parallel_for(n, [&](std::size_t i) {
        PatchStats st;
        st.mean_s = mu_s[i];
        st.mean_h = mu_h[i];
        st.var_s = e_ss[i] - mu_s[i] * mu_s[i];
        st.var_h = e_hh[i] - mu_h[i] * mu_h[i];
        st.cov = e_sh[i] - mu_s[i] * mu_h[i];
        map.data[i] = similarity_ratio(st, c1, c2);
    });
    return map;
}

double mean_ssim(const ImageGrid& sr, const ImageGrid& hr, const SsimConfig& cfg) {
    const ImageGrid map = ssim_map(sr, hr, cfg);
    double sum = 0.0;
    for (double v : map.data) sum += v;
    return sum / static_cast<double>(map.data.size());
}

}  // namespace pspl
