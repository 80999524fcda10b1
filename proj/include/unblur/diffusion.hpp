#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "unblur/common.hpp"
#include "unblur/tensor.hpp"

namespace unblur {

// Forward-process schedule. Stored in double so the cumulative products hold
// to 1e-12; consumers cast the per-step scalars to their working precision.
struct NoiseSchedule {
    int steps = 0;                   // T
    std::vector<double> betas;       // length T, in (0,1)
    std::vector<double> alpha_bars;  // length T, cumulative product of (1 - beta)
};

inline NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.steps = T;
    s.betas.resize(static_cast<std::size_t>(T));
    s.alpha_bars.resize(static_cast<std::size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double b = T == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.betas[static_cast<std::size_t>(t)] = b;
        prod *= 1.0 - b;
        s.alpha_bars[static_cast<std::size_t>(t)] = prod;
    }
    return s;
}

// alpha_bar with the terminal convention alpha_bar(-1) = 1.
inline double alpha_bar_at(const NoiseSchedule& s, int t) {
    if (t == -1) return 1.0;
    if (t < 0 || t >= s.steps) throw ArgumentError("timestep out of schedule range");
    return s.alpha_bars[static_cast<std::size_t>(t)];
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps
template <typename T>
Tensor<T> add_noise(const Tensor<T>& z0, const Tensor<T>& eps, int t, const NoiseSchedule& sched) {
    if (!same_shape(z0, eps)) throw ArgumentError("add_noise: z0/eps shape mismatch");
    double ab = alpha_bar_at(sched, t);
    T c0 = static_cast<T>(std::sqrt(ab));
    T c1 = static_cast<T>(std::sqrt(1.0 - ab));
    Tensor<T> z(z0.shape);
    for (std::size_t i = 0; i < z.numel(); ++i) z[i] = c0 * z0[i] + c1 * eps[i];
    return z;
}

// Deterministic DDIM update (eta = 0):
//   zhat0   = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t)
//   z_prev  = sqrt(abar_prev) zhat0 + sqrt(1-abar_prev) eps_hat
// t_prev = -1 returns zhat0.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& z_t, const Tensor<T>& eps_hat, int t, int t_prev, const NoiseSchedule& sched) {
    if (!same_shape(z_t, eps_hat)) throw ArgumentError("ddim_step: shape mismatch");
    if (t_prev >= t) throw ArgumentError("ddim_step: t_prev must be < t");
    double ab_t = alpha_bar_at(sched, t);
    double ab_p = alpha_bar_at(sched, t_prev);
    T inv_sq_t = static_cast<T>(1.0 / std::sqrt(ab_t));
    T sq_1mt = static_cast<T>(std::sqrt(1.0 - ab_t));
    T sq_p = static_cast<T>(std::sqrt(ab_p));
    T sq_1mp = static_cast<T>(std::sqrt(1.0 - ab_p));
    Tensor<T> out(z_t.shape);
    for (std::size_t i = 0; i < out.numel(); ++i) {
        T zhat0 = (z_t[i] - sq_1mt * eps_hat[i]) * inv_sq_t;
        out[i] = sq_p * zhat0 + sq_1mp * eps_hat[i];
    }
    return out;
}

// eps = eps_u + s (eps_c - eps_u)
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_uncond, const Tensor<T>& eps_cond, double scale) {
    if (!same_shape(eps_uncond, eps_cond)) throw ArgumentError("cfg_combine: shape mismatch");
    Tensor<T> out(eps_uncond.shape);
    T s = static_cast<T>(scale);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = eps_uncond[i] + s * (eps_cond[i] - eps_uncond[i]);
    return out;
}

// Evenly spaced descending timesteps, endpoint-inclusive: first = t_start,
// last = 0. The sampler appends a terminal transition to -1.
inline std::vector<int> sample_timesteps(int t_start, int steps) {
    if (steps < 1) throw ArgumentError("sampler needs steps >= 1");
    if (steps > t_start + 1) throw ArgumentError("sampler steps exceed schedule range");
    std::vector<int> ts(static_cast<std::size_t>(steps));
    if (steps == 1) {
        ts[0] = t_start;
        return ts;
    }
    for (int i = 0; i < steps; ++i)
        ts[static_cast<std::size_t>(i)] =
            static_cast<int>(std::llround(static_cast<double>(t_start) * (steps - 1 - i) / (steps - 1)));
    return ts;
}

// One CFG-guided denoiser evaluation per retained timestep; the callable's
// bool selects the conditional (true) or unconditional branch. scale == 1
// skips the unconditional call entirely.
template <typename T>
using DenoiseFn = std::function<Tensor<T>(const Tensor<T>& z_t, int t, bool conditional)>;

template <typename T>
Tensor<T> sample(const DenoiseFn<T>& denoiser, Tensor<T> init, int steps, double scale,
                 const NoiseSchedule& sched, int t_start = -2) {
    if (init.empty()) throw ArgumentError("sample: init latent required");
    if (t_start == -2) t_start = sched.steps - 1;
    std::vector<int> ts = sample_timesteps(t_start, steps);
    Tensor<T> z = std::move(init);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        int t = ts[i];
        int t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        Tensor<T> eps_c = denoiser(z, t, true);
        Tensor<T> eps;
        if (scale == 1.0) {
            eps = std::move(eps_c);
        } else {
            Tensor<T> eps_u = denoiser(z, t, false);
            eps = cfg_combine(eps_u, eps_c, scale);
        }
        if (!eps.all_finite())
            throw NumericError("denoiser produced non-finite values at sampler step " + std::to_string(i) +
                               " (t=" + std::to_string(t) + ")");
        z = ddim_step(z, eps, t, t_prev, sched);
    }
    return z;
}

// Sinusoidal timestep features, half sine / half cosine, geometric frequency
// ladder down to 1/10000.
template <typename T>
Tensor<T> time_embedding(const std::vector<int>& ts, int dim) {
    int half = dim / 2;
    Tensor<T> e({static_cast<int>(ts.size()), dim});
    for (std::size_t b = 0; b < ts.size(); ++b)
        for (int i = 0; i < half; ++i) {
            double freq = std::exp(-std::log(10000.0) * i / (half > 1 ? half - 1 : 1));
            double a = ts[b] * freq;
            e[b * dim + static_cast<std::size_t>(i)] = static_cast<T>(std::sin(a));
            e[b * dim + static_cast<std::size_t>(half + i)] = static_cast<T>(std::cos(a));
        }
    return e;
}

}  // namespace unblur
