#include "lgdist/diffusion/schedule.hpp"

#include "lgdist/digest.hpp"
#include "lgdist/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lgdist {

DiffusionSchedule cosine_schedule(int T, double s, double clip, int sampling_steps) {
    require(T >= 1, ErrorKind::InvalidArgument, "diffusion schedule needs T >= 1");
    require(s >= 0.0, ErrorKind::InvalidArgument, "cosine offset s must be non-negative");
    require(clip > 0.0 && clip < 1.0, ErrorKind::InvalidArgument, "alpha_bar clip must lie in (0, 1)");
    DiffusionSchedule out;
    out.T = T;
    out.s = s;
    out.clip = clip;
    auto f = [&](int t) {
        const double c = std::cos((static_cast<double>(t) / T + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return c * c;
    };
    const double f0 = f(0);
    out.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
    out.beta.assign(static_cast<std::size_t>(T) + 1, 0.0);
    out.alpha_bar[0] = 1.0;
    for (int t = 1; t <= T; ++t) {
        out.alpha_bar[static_cast<std::size_t>(t)] = clip + (1.0 - clip) * (f(t) / f0);
        const double ratio = out.alpha_bar[static_cast<std::size_t>(t)] / out.alpha_bar[static_cast<std::size_t>(t - 1)];
        out.beta[static_cast<std::size_t>(t)] = std::min(1.0 - ratio, 0.999);
    }
    out.sampling_timesteps = sampling_subsequence(T, sampling_steps);
    return out;
}

std::vector<int> sampling_subsequence(int T, int steps) {
    require(steps >= 1 && steps <= T, ErrorKind::InvalidArgument, "sampling steps must lie in [1, T]");
    const int stride = T / steps;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        out.push_back(1 + i * stride);
    }
    return out;
}

std::string DiffusionSchedule::digest() const {
    std::string bytes(reinterpret_cast<const char*>(alpha_bar.data()), alpha_bar.size() * sizeof(double));
    bytes.append(reinterpret_cast<const char*>(sampling_timesteps.data()), sampling_timesteps.size() * sizeof(int));
    return sha256_hex(bytes);
}

Matrix center_mask(Eigen::Index tokens, Eigen::Index width) {
    Matrix m = Matrix::Ones(tokens, width);
    m.row(0).setZero();
    return m;
}

Matrix masked_forward(const Matrix& latent, int t, const RowVector& eps, const DiffusionSchedule& schedule) {
    const int ts[] = {t};
    return masked_forward(latent, latent.rows(), ts, eps, schedule);
}

Matrix masked_forward(const Matrix& latents, Eigen::Index tokens, std::span<const int> t, const Matrix& eps,
                      const DiffusionSchedule& schedule) {
    require(tokens > 0 && latents.rows() == static_cast<Eigen::Index>(t.size()) * tokens, ErrorKind::ShapeMismatch,
            "masked_forward: latent rows do not match the timestep count");
    require(eps.rows() == static_cast<Eigen::Index>(t.size()) && eps.cols() == latents.cols(), ErrorKind::ShapeMismatch,
            "masked_forward: noise must have one center-row per sample");
    Matrix out = latents;
    for (std::size_t b = 0; b < t.size(); ++b) {
        require(t[b] >= 0 && t[b] <= schedule.T, ErrorKind::OutOfRange,
                "timestep " + std::to_string(t[b]) + " outside [0, " + std::to_string(schedule.T) + "]");
        const double ab = schedule.alpha_bar[static_cast<std::size_t>(t[b])];
        const auto r = static_cast<Eigen::Index>(b) * tokens;
        out.row(r) = std::sqrt(ab) * latents.row(r) + std::sqrt(1.0 - ab) * eps.row(static_cast<Eigen::Index>(b));
    }
    return out;
}

} // namespace lgdist
