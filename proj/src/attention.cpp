#include "pspl/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace pspl {

void AttentionSchedule::validate() const {
    if (!(gamma > 0.0))
        throw std::invalid_argument("AttentionSchedule: gamma must be > 0");
    if (alpha < 0.0 || beta < 0.0)
        throw std::invalid_argument("AttentionSchedule: alpha and beta must be >= 0");
    if (!(delta_floor > 0.0))
        throw std::invalid_argument("AttentionSchedule: delta_floor must be > 0");
    if (!std::isfinite(mu))
        throw std::invalid_argument("AttentionSchedule: mu must be finite");
}

double delta_at(const AttentionSchedule& schedule, long step) {
    schedule.validate();
    if (step < 0) throw std::invalid_argument("delta_at: step must be >= 0");
    const double delta = schedule.alpha * static_cast<double>(step) + schedule.beta;
    return delta > schedule.delta_floor ? delta : schedule.delta_floor;
}

double attention_value(double ms, const AttentionSchedule& schedule, long step) {
    const double delta = delta_at(schedule, step);
    const double d = ms - schedule.mu;
    return schedule.gamma * std::exp(-(d * d) / (delta * delta));
}

ImageGrid attention_map(const ImageGrid& ms_map, const AttentionSchedule& schedule, long step) {
    if (ms_map.channels != 1)
        throw std::invalid_argument("attention_map: similarity map must be single-channel");
    ms_map.validate("attention_map");
    for (double v : ms_map.data)
        if (v < -1.0 || v > 1.0)
            throw std::invalid_argument(
                "attention_map: similarity value outside [-1, 1] (upstream similarity bug?)");

    const double delta = delta_at(schedule, step);
    const double inv_d2 = 1.0 / (delta * delta);
    ImageGrid out(ms_map.height, ms_map.width, 1, schedule.gamma);
    for (std::size_t i = 0; i < ms_map.data.size(); ++i) {
        const double d = ms_map.data[i] - schedule.mu;
        out.data[i] = schedule.gamma * std::exp(-(d * d) * inv_d2);
    }
    return out;
}

namespace {

// Shared core: ma(r,c) is broadcast over channels; nullptr means all-ones.
LossResult loss_core(const ImageGrid& sr, const ImageGrid& hr, const ImageGrid* ma,
                     WeightedLossKind kind) {
    if (!sr.same_shape(hr))
        throw std::invalid_argument("weighted_loss: sr and hr must have identical shapes");
    if (ma) {
        if (ma->channels != 1)
            throw std::invalid_argument("weighted_loss: attention map must be single-channel");
        if (ma->height != sr.height || ma->width != sr.width)
            throw std::invalid_argument(
                "weighted_loss: attention map dimensions must match the images");
    }

    const std::size_t n = sr.data.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    LossResult res;
    res.grad = ImageGrid(sr.height, sr.width, sr.channels, sr.dynamic_range);

    double sum = 0.0;
    std::size_t i = 0;
    for (int r = 0; r < sr.height; ++r) {
        for (int c = 0; c < sr.width; ++c) {
            const double w = ma ? ma->at(r, c) : 1.0;
            for (int ch = 0; ch < sr.channels; ++ch, ++i) {
                const double d = w * sr.data[i] - w * hr.data[i];
                if (kind == WeightedLossKind::L1) {
                    sum += std::fabs(d);
                    res.grad.data[i] = w * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
                } else {
                    sum += d * d;
                    res.grad.data[i] = 2.0 * w * d * inv_n;
                }
            }
        }
    }
    res.loss = sum * inv_n;
    return res;
}

}  // namespace

LossResult weighted_loss(const ImageGrid& sr, const ImageGrid& hr, const ImageGrid& ma,
                         WeightedLossKind kind) {
    return loss_core(sr, hr, &ma, kind);
}

LossResult plain_loss(const ImageGrid& sr, const ImageGrid& hr, WeightedLossKind kind) {
    return loss_core(sr, hr, nullptr, kind);
}

}  // namespace pspl
