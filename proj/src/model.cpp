#include "pspl/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "pspl/parallel.hpp"
#include "pspl/rng.hpp"

namespace pspl {

SrModel SrModel::make_default(int channels, int width, int scale) {
    SrModel m;
    m.scale = scale;
    m.layers = {
        {channels, width, 3, true},
        {width, width, 3, true},
        {width, channels, 3, false},
    };
    for (const ConvSpec& l : m.layers) {
        m.weights.emplace_back(
            static_cast<std::size_t>(l.out_ch) * l.in_ch * l.ksize * l.ksize, 0.0);
        m.biases.emplace_back(static_cast<std::size_t>(l.out_ch), 0.0);
    }
    m.validate();
    return m;
}

std::size_t SrModel::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

void SrModel::validate() const {
    if (layers.empty()) throw std::invalid_argument("SrModel: no layers");
    if (layers.size() != weights.size() || layers.size() != biases.size())
        throw std::invalid_argument("SrModel: parameter blocks do not match layer list");
    if (layers.front().in_ch != layers.back().out_ch)
        throw std::invalid_argument("SrModel: first in_ch must equal last out_ch");
    if (layers.back().relu)
        throw std::invalid_argument("SrModel: last layer must not have ReLU");
    if (scale < 1) throw std::invalid_argument("SrModel: scale must be >= 1");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const ConvSpec& c = layers[l];
        if (c.in_ch < 1 || c.out_ch < 1)
            throw std::invalid_argument("SrModel: channel counts must be positive");
        if (c.ksize < 1 || c.ksize % 2 == 0)
            throw std::invalid_argument("SrModel: kernel sizes must be odd");
        if (l + 1 < layers.size() && layers[l + 1].in_ch != c.out_ch)
            throw std::invalid_argument("SrModel: adjacent layer channels do not chain");
        if (weights[l].size() != static_cast<std::size_t>(c.out_ch) * c.in_ch * c.ksize * c.ksize)
            throw std::invalid_argument("SrModel: weight block size mismatch");
        if (biases[l].size() != static_cast<std::size_t>(c.out_ch))
            throw std::invalid_argument("SrModel: bias block size mismatch");
    }
}

bool SrModel::same_architecture(const SrModel& o) const {
    if (scale != o.scale || layers.size() != o.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const ConvSpec &a = layers[l], &b = o.layers[l];
        if (a.in_ch != b.in_ch || a.out_ch != b.out_ch || a.ksize != b.ksize ||
            a.relu != b.relu)
            return false;
    }
    return true;
}

GradientSet GradientSet::zeros_like(const SrModel& model) {
    GradientSet g;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        g.weights.emplace_back(model.weights[l].size(), 0.0);
        g.biases.emplace_back(model.biases[l].size(), 0.0);
    }
    return g;
}

void GradientSet::accumulate(const GradientSet& o, double factor) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += factor * o.weights[l][i];
        for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += factor * o.biases[l][i];
    }
}

void GradientSet::scale(double factor) {
    for (auto& w : weights)
        for (double& v : w) v *= factor;
    for (auto& b : biases)
        for (double& v : b) v *= factor;
}

AdamState AdamState::zeros_like(const SrModel& model, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        s.m_weights.emplace_back(model.weights[l].size(), 0.0);
        s.v_weights.emplace_back(model.weights[l].size(), 0.0);
        s.m_biases.emplace_back(model.biases[l].size(), 0.0);
        s.v_biases.emplace_back(model.biases[l].size(), 0.0);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Convolution kernels (zero padding, spatial size preserved)
// ---------------------------------------------------------------------------

namespace {

Tensor grid_to_tensor(const ImageGrid& g) {
    Tensor t(g.channels, g.height, g.width);
    for (int c = 0; c < g.channels; ++c) {
        double* plane = t.plane(c);
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x)
                plane[static_cast<std::size_t>(y) * g.width + x] = g.at(y, x, c);
    }
    return t;
}

ImageGrid tensor_to_grid(const Tensor& t, double range) {
    ImageGrid g(t.h, t.w, t.ch, range);
    for (int c = 0; c < t.ch; ++c) {
        const double* plane = t.plane(c);
        for (int y = 0; y < t.h; ++y)
            for (int x = 0; x < t.w; ++x)
                g.at(y, x, c) = plane[static_cast<std::size_t>(y) * t.w + x];
    }
    return g;
}

// out[o] = bias[o] + sum_i conv(in[i], W[o][i]); accumulation runs per output
// channel in a fixed order, so parallelizing over o stays deterministic.
void conv_forward(const Tensor& in, const ConvSpec& spec, const std::vector<double>& w,
                  const std::vector<double>& b, Tensor& out) {
    const int h = in.h, wd = in.w, k = spec.ksize, pad = k / 2;
    parallel_for(static_cast<std::size_t>(spec.out_ch), [&](std::size_t o) {
        double* out_plane = out.plane(static_cast<int>(o));
        const std::size_t hw = static_cast<std::size_t>(h) * wd;
        for (std::size_t p = 0; p < hw; ++p) out_plane[p] = b[o];
        for (int i = 0; i < spec.in_ch; ++i) {
            const double* in_plane = in.plane(i);
            const double* wk = w.data() + ((o * spec.in_ch + i) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int dx = kx - pad;
                    const int x0 = dx < 0 ? -dx : 0;
                    const int x1 = wd - (dx > 0 ? dx : 0);
                    for (int y = 0; y < h; ++y) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= h) continue;
                        double* orow = out_plane + static_cast<std::size_t>(y) * wd;
                        const double* irow = in_plane + static_cast<std::size_t>(yy) * wd + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
                    }
                }
            }
        }
    });
}

// Gradient w.r.t. the layer input: correlate the output gradient with the
// kernel, indices reversed. Parallel over input channels.
void conv_backward_data(const Tensor& gout, const ConvSpec& spec, const std::vector<double>& w,
                        Tensor& gin) {
    const int h = gout.h, wd = gout.w, k = spec.ksize, pad = k / 2;
    parallel_for(static_cast<std::size_t>(spec.in_ch), [&](std::size_t i) {
        double* gin_plane = gin.plane(static_cast<int>(i));
        std::memset(gin_plane, 0, static_cast<std::size_t>(h) * wd * sizeof(double));
        for (int o = 0; o < spec.out_ch; ++o) {
            const double* g_plane = gout.plane(o);
            const double* wk = w.data() + ((static_cast<std::size_t>(o) * spec.in_ch + i) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    const int dx = pad - kx;
                    const int x0 = dx < 0 ? -dx : 0;
                    const int x1 = wd - (dx > 0 ? dx : 0);
                    for (int y = 0; y < h; ++y) {
                        const int yy = y + pad - ky;
                        if (yy < 0 || yy >= h) continue;
                        double* grow = gin_plane + static_cast<std::size_t>(y) * wd;
                        const double* srow = g_plane + static_cast<std::size_t>(yy) * wd + dx;
                        for (int x = x0; x < x1; ++x) grow[x] += wv * srow[x];
                    }
                }
            }
        }
    });
}

// Gradients w.r.t. weights and bias. Parallel over output channels.
void conv_backward_params(const Tensor& in, const Tensor& gout, const ConvSpec& spec,
                          std::vector<double>& gw, std::vector<double>& gb) {
    const int h = in.h, wd = in.w, k = spec.ksize, pad = k / 2;
    parallel_for(static_cast<std::size_t>(spec.out_ch), [&](std::size_t o) {
        const double* g_plane = gout.plane(static_cast<int>(o));
        double bias_acc = 0.0;
        const std::size_t hw = static_cast<std::size_t>(h) * wd;
        for (std::size_t p = 0; p < hw; ++p) bias_acc += g_plane[p];
        gb[o] = bias_acc;
        for (int i = 0; i < spec.in_ch; ++i) {
            const double* in_plane = in.plane(i);
            double* wk = gw.data() + ((o * spec.in_ch + i) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                for (int kx = 0; kx < k; ++kx) {
                    const int dx = kx - pad;
                    const int x0 = dx < 0 ? -dx : 0;
                    const int x1 = wd - (dx > 0 ? dx : 0);
                    double acc = 0.0;
                    for (int y = 0; y < h; ++y) {
                        const int yy = y + ky - pad;
                        if (yy < 0 || yy >= h) continue;
                        const double* grow = g_plane + static_cast<std::size_t>(y) * wd;
                        const double* irow = in_plane + static_cast<std::size_t>(yy) * wd + dx;
                        double dot = 0.0;
                        for (int x = x0; x < x1; ++x) dot += grow[x] * irow[x];
                        acc += dot;
                    }
                    wk[ky * k + kx] = acc;
                }
            }
        }
    });
}

}  // namespace

ImageGrid forward(const SrModel& model, const ImageGrid& lr_upsampled, ForwardTape& tape) {
    model.validate();
    if (lr_upsampled.channels != model.layers.front().in_ch)
        throw std::invalid_argument("forward: input channels do not match the model");
    lr_upsampled.validate("forward");

    tape.inputs.clear();
    tape.inputs.reserve(model.layers.size());
    Tensor act = grid_to_tensor(lr_upsampled);
    const Tensor input = act;

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const ConvSpec& spec = model.layers[l];
        tape.inputs.push_back(act);
        Tensor out(spec.out_ch, act.h, act.w);
        conv_forward(act, spec, model.weights[l], model.biases[l], out);
        if (spec.relu)
            for (double& v : out.v) v = v > 0.0 ? v : 0.0;
        act = std::move(out);
    }

    // Global residual: the stack predicts a correction to its input.
    for (std::size_t i = 0; i < act.v.size(); ++i) act.v[i] += input.v[i];
    return tensor_to_grid(act, lr_upsampled.dynamic_range);
}

ImageGrid predict(const SrModel& model, const ImageGrid& lr_upsampled) {
    ForwardTape tape;
    return forward(model, lr_upsampled, tape);
}

GradientSet backward(const SrModel& model, const ForwardTape& tape, const ImageGrid& grad_output,
                     ImageGrid* input_grad) {
    model.validate();
    if (tape.inputs.size() != model.layers.size())
        throw std::invalid_argument("backward: tape does not match the model");
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        if (tape.inputs[l].ch != model.layers[l].in_ch)
            throw std::invalid_argument("backward: tape does not match the model");
    if (grad_output.channels != model.layers.back().out_ch ||
        grad_output.height != tape.inputs[0].h || grad_output.width != tape.inputs[0].w)
        throw std::invalid_argument("backward: grad_output shape does not match the tape");

    GradientSet grads = GradientSet::zeros_like(model);
    Tensor g = grid_to_tensor(grad_output);  // grad w.r.t. the residual sum
    const Tensor skip = g;                   // skip-path contribution to the input grad

    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const ConvSpec& spec = model.layers[li];
        if (spec.relu) {
            // The block output equals the next layer's recorded input; its sign
            // gives the ReLU mask.
            const Tensor& post = tape.inputs[li + 1];
            for (std::size_t i = 0; i < g.v.size(); ++i)
                if (!(post.v[i] > 0.0)) g.v[i] = 0.0;
        }
        conv_backward_params(tape.inputs[li], g, spec, grads.weights[li], grads.biases[li]);
        Tensor gin(spec.in_ch, g.h, g.w);
        conv_backward_data(g, spec, model.weights[li], gin);
        g = std::move(gin);
    }

    if (input_grad) {
        for (std::size_t i = 0; i < g.v.size(); ++i) g.v[i] += skip.v[i];
        *input_grad = tensor_to_grid(g, grad_output.dynamic_range);
    }
    return grads;
}

void adam_step(SrModel& model, const GradientSet& grads, AdamState& state) {
    model.validate();
    if (grads.weights.size() != model.weights.size() ||
        state.m_weights.size() != model.weights.size())
        throw std::invalid_argument("adam_step: block count mismatch");
    for (std::size_t l = 0; l < model.weights.size(); ++l)
        if (grads.weights[l].size() != model.weights[l].size() ||
            grads.biases[l].size() != model.biases[l].size() ||
            state.m_weights[l].size() != model.weights[l].size())
            throw std::invalid_argument("adam_step: block shape mismatch");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

    auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                      std::vector<double>& m, std::vector<double>& v) {
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    };
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        update(model.weights[l], grads.weights[l], state.m_weights[l], state.v_weights[l]);
        update(model.biases[l], grads.biases[l], state.m_biases[l], state.v_biases[l]);
    }
}

void init_parameters(SrModel& model, std::uint64_t seed) {
    model.validate();
    Rng rng(mix_seed(seed, 0x7073706c5f696e69ULL));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const ConvSpec& spec = model.layers[l];
        const double fan_in = static_cast<double>(spec.in_ch) * spec.ksize * spec.ksize;
        const double bound = std::sqrt(6.0 / fan_in);
        for (double& w : model.weights[l]) w = rng.uniform(-bound, bound);
        for (double& b : model.biases[l]) b = 0.0;
    }
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'S', 'R', 'C'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void write_raw(std::FILE* f, const T& v) {
    if (std::fwrite(&v, sizeof(T), 1, f) != 1)
        throw std::runtime_error("save_checkpoint: write failed");
}

template <typename T>
T read_raw(std::FILE* f) {
    T v;
    if (std::fread(&v, sizeof(T), 1, f) != 1)
        throw std::runtime_error("load_checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const SrModel& model, const std::string& path) {
    model.validate();
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
    if (std::fwrite(kMagic, 1, 4, f.get()) != 4)
        throw std::runtime_error("save_checkpoint: write failed");
    write_raw(f.get(), kVersion);
    write_raw(f.get(), static_cast<std::int32_t>(model.scale));
    write_raw(f.get(), static_cast<std::uint32_t>(model.layers.size()));
    for (const ConvSpec& l : model.layers) {
        write_raw(f.get(), static_cast<std::int32_t>(l.in_ch));
        write_raw(f.get(), static_cast<std::int32_t>(l.out_ch));
        write_raw(f.get(), static_cast<std::int32_t>(l.ksize));
        write_raw(f.get(), static_cast<std::uint8_t>(l.relu ? 1 : 0));
    }
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const auto& w = model.weights[l];
        const auto& b = model.biases[l];
        if (std::fwrite(w.data(), sizeof(double), w.size(), f.get()) != w.size() ||
            std::fwrite(b.data(), sizeof(double), b.size(), f.get()) != b.size())
            throw std::runtime_error("save_checkpoint: write failed");
    }
}

SrModel load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
    char magic[4];
    if (std::fread(magic, 1, 4, f.get()) != 4 || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: '" + path + "' is not a checkpoint");
    const auto version = read_raw<std::uint32_t>(f.get());
    if (version != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));
    SrModel m;
    m.scale = read_raw<std::int32_t>(f.get());
    const auto n_layers = read_raw<std::uint32_t>(f.get());
    if (n_layers == 0 || n_layers > 1024)
        throw std::runtime_error("load_checkpoint: implausible layer count");
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        ConvSpec spec;
        spec.in_ch = read_raw<std::int32_t>(f.get());
        spec.out_ch = read_raw<std::int32_t>(f.get());
        spec.ksize = read_raw<std::int32_t>(f.get());
        spec.relu = read_raw<std::uint8_t>(f.get()) != 0;
        m.layers.push_back(spec);
    }
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const ConvSpec& spec = m.layers[l];
        if (spec.in_ch < 1 || spec.out_ch < 1 || spec.ksize < 1)
            throw std::runtime_error("load_checkpoint: corrupt architecture descriptor");
        std::vector<double> w(static_cast<std::size_t>(spec.out_ch) * spec.in_ch * spec.ksize *
                              spec.ksize);
        std::vector<double> b(static_cast<std::size_t>(spec.out_ch));
        if (std::fread(w.data(), sizeof(double), w.size(), f.get()) != w.size() ||
            std::fread(b.data(), sizeof(double), b.size(), f.get()) != b.size())
            throw std::runtime_error("load_checkpoint: truncated parameter data");
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    m.validate();
    return m;
}

void load_checkpoint(SrModel& into, const std::string& path) {
    SrModel loaded = load_checkpoint(path);
    if (!into.same_architecture(loaded))
        throw std::runtime_error("load_checkpoint: stored architecture does not match");
    into = std::move(loaded);
}

}  // namespace pspl
