#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pspl/image.hpp"

namespace pspl {

/// Planar (channel, row, col) activation block used inside the network.
struct Tensor {
    int ch = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int c, int hh, int ww) : ch(c), h(hh), w(ww) {
        v.assign(static_cast<std::size_t>(c) * hh * ww, 0.0);
    }
    double* plane(int c) { return v.data() + static_cast<std::size_t>(c) * h * w; }
    const double* plane(int c) const { return v.data() + static_cast<std::size_t>(c) * h * w; }
    bool same_shape(const Tensor& o) const { return ch == o.ch && h == o.h && w == o.w; }
};

/// One convolution descriptor. Padding is (ksize-1)/2 so spatial size is
/// preserved; zero padding at borders.
struct ConvSpec {
    int in_ch = 0;
    int out_ch = 0;
    int ksize = 3;
    bool relu = false;
};

/// Minimal pre-upsampling SISR network: a stack of same-size convolutions with
/// interleaved ReLUs plus a global residual connection (output = input + stack).
struct SrModel {
    std::vector<ConvSpec> layers;
    std::vector<std::vector<double>> weights;  // per layer: [out][in][ky][kx]
    std::vector<std::vector<double>> biases;   // per layer: [out]
    int scale = 2;

    // conv(c -> width) -> ReLU -> conv(width -> width) -> ReLU -> conv(width -> c)
    static SrModel make_default(int channels, int width = 32, int scale = 2);

    std::size_t parameter_count() const;
    void validate() const;
    bool same_architecture(const SrModel& o) const;
};

/// Gradient blocks congruent to a model's parameter blocks.
struct GradientSet {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    static GradientSet zeros_like(const SrModel& model);
    void accumulate(const GradientSet& o, double factor);
    void scale(double factor);
};

/// Adam moments congruent to a model's parameters, plus the update counter.
struct AdamState {
    std::vector<std::vector<double>> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double learning_rate = 1e-3;

    static AdamState zeros_like(const SrModel& model, double learning_rate = 1e-3);
};

/// Layer inputs recorded during forward for the backward pass.
struct ForwardTape {
    std::vector<Tensor> inputs;  // inputs[l] = input of layer l; inputs[0] = network input
};

/// Runs the network on a pre-upsampled input; records activations into tape.
ImageGrid forward(const SrModel& model, const ImageGrid& lr_upsampled, ForwardTape& tape);

/// forward without keeping the tape.
ImageGrid predict(const SrModel& model, const ImageGrid& lr_upsampled);

/// Exact reverse-mode gradients for all weights and biases given dLoss/dOutput.
/// If input_grad is non-null it receives dLoss/dInput (skip path included).
GradientSet backward(const SrModel& model, const ForwardTape& tape, const ImageGrid& grad_output,
                     ImageGrid* input_grad = nullptr);

/// Bias-corrected Adam update; increments state.step.
void adam_step(SrModel& model, const GradientSet& grads, AdamState& state);

/// He-uniform weights (bound sqrt(6/fan_in)) from a seeded deterministic PRNG;
/// biases zero. The same seed reproduces parameters bitwise.
void init_parameters(SrModel& model, std::uint64_t seed);

// Versioned little-endian checkpoint: magic + version + architecture + blocks.
void save_checkpoint(const SrModel& model, const std::string& path);
SrModel load_checkpoint(const std::string& path);
// Loads into an existing model; throws if the stored architecture differs.
void load_checkpoint(SrModel& into, const std::string& path);

}  // namespace pspl
