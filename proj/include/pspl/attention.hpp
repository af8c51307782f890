#pragma once

#include "pspl/image.hpp"

namespace pspl {

/// Bell-curve attention parameters and the linear width schedule.
/// Attention for a similarity value m is gamma * exp(-(m - mu)^2 / delta^2)
/// with delta = max(alpha * step + beta, delta_floor). gamma is the peak,
/// mu the peak position on the similarity axis; delta grows with the step
/// counter so the curve flattens toward the constant gamma as training runs.
struct AttentionSchedule {
    double gamma = 2.0;
    double mu = -1.0;
    double alpha = 1.0;
    double beta = 0.0;
    double delta_floor = 1e-3;  // keeps delta positive at step 0 with beta = 0

    void validate() const;
};

/// Width of the attention curve at a given step: max(alpha*step + beta, delta_floor).
double delta_at(const AttentionSchedule& schedule, long step);

/// Attention weight for one similarity value in [-1, 1]; result in (0, gamma].
double attention_value(double ms, const AttentionSchedule& schedule, long step);

/// Element-wise attention_value over a single-channel similarity map.
/// Values outside [-1, 1] are rejected (they signal an upstream similarity bug).
ImageGrid attention_map(const ImageGrid& ms_map, const AttentionSchedule& schedule, long step);

enum class WeightedLossKind { L1, L2 };

/// Scalar loss plus its gradient with respect to the prediction.
struct LossResult {
    double loss = 0.0;
    ImageGrid grad;
};

/// Attention-weighted loss: mean over elements of |ma*sr - ma*hr| (L1) or
/// (ma*sr - ma*hr)^2 (L2). ma is a single-channel map broadcast across color
/// channels and treated as a constant: no gradient flows into it.
/// Gradients: L1 -> ma*sign(sr-hr)/N, L2 -> 2*ma^2*(sr-hr)/N, N = element count.
LossResult weighted_loss(const ImageGrid& sr, const ImageGrid& hr, const ImageGrid& ma,
                         WeightedLossKind kind);

/// Unweighted loss; identical to weighted_loss with an all-ones map.
LossResult plain_loss(const ImageGrid& sr, const ImageGrid& hr, WeightedLossKind kind);

}  // namespace pspl
