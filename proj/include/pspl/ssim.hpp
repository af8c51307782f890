#pragma once

#include <vector>

#include "pspl/image.hpp"

namespace pspl {

/// Window and stabilization constants for similarity maps.
/// C1 = (k1*L)^2 and C2 = (k2*L)^2 scale with the dynamic range L.
struct SsimConfig {
    int window_size = 11;
    double window_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
    double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
    void validate() const;
};

/// Circular-symmetric 2-D Gaussian, size x size row-major, renormalized to unit sum.
std::vector<double> gaussian_window(int size, double sigma);

/// Similarity of two single-channel patches: Gaussian-weighted mean/variance/
/// covariance (window as probability mass), then the stabilized similarity ratio.
/// Result in [-1, 1]; symmetric in its arguments.
double ssim_patch(const PatchView& ps, const PatchView& ph, const SsimConfig& cfg);

/// Per-pixel similarity map, same height/width as the inputs, single channel,
/// mirror padding at borders. 3-channel inputs are converted to luminance first.
/// Computed by separable Gaussian filtering of the five local-statistics fields;
/// equals the per-pixel windowed loop to filtering roundoff.
ImageGrid ssim_map(const ImageGrid& sr, const ImageGrid& hr, const SsimConfig& cfg);

/// Arithmetic mean of ssim_map.
double mean_ssim(const ImageGrid& sr, const ImageGrid& hr, const SsimConfig& cfg);

}  // namespace pspl
