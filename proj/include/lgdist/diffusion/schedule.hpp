#pragma once

#include "lgdist/matrix.hpp"

#include <span>
#include <string>
#include <vector>

namespace lgdist {

/// Cumulative signal fractions for t = 0..T and the sampling sub-sequence.
struct DiffusionSchedule {
    int T = 0;
    double s = 0.0;
    double clip = 0.0;
    /// alpha_bar[t], length T + 1, alpha_bar[0] == 1.
    std::vector<double> alpha_bar;
    /// beta[t] = 1 - alpha_bar[t] / alpha_bar[t-1], beta[0] = 0.
    std::vector<double> beta;
    /// Ascending sampling timesteps, all in [1, T].
    std::vector<int> sampling_timesteps;

    /// SHA-256 of the alpha_bar table and sampling timesteps.
    std::string digest() const;
};

/// Cosine schedule with f(t) = cos^2(((t/T + s) / (1 + s)) pi/2). The ratio
/// f(t)/f(0) is mapped affinely onto [clip, 1]:
///   alpha_bar[t] = clip + (1 - clip) f(t)/f(0)
/// which keeps the table strictly decreasing down to alpha_bar[T] = clip.
/// beta is clipped at 0.999.
DiffusionSchedule cosine_schedule(int T = 1500, double s = 0.008, double clip = 1e-5, int sampling_steps = 50);

/// tau_i = 1 + i * floor(T / steps), i = 0..steps-1.
std::vector<int> sampling_subsequence(int T, int steps);

/// Binary (n+1) x d mask: row 0 zeros, remaining rows ones.
Matrix center_mask(Eigen::Index tokens, Eigen::Index width);

/// Noises the center row of one latent neighborhood:
///   row 0 -> sqrt(ab_t) x0 + sqrt(1 - ab_t) eps, other rows copied.
Matrix masked_forward(const Matrix& latent, int t, const RowVector& eps, const DiffusionSchedule& schedule);

/// Batched form over stacked groups of `tokens` rows; `t` and `eps` hold one
/// entry / row per sample.
Matrix masked_forward(const Matrix& latents, Eigen::Index tokens, std::span<const int> t, const Matrix& eps,
                      const DiffusionSchedule& schedule);

} // namespace lgdist
