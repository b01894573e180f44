// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <string>

#include "hugdiff/common/error.hpp"
#include "hugdiff/core/types.hpp"

namespace hugdiff {

// Forward-process noise schedule. `betas[t-1]` is the variance added at
// step t; alpha_bars accumulate the products.
struct DiffusionSchedule {
    int timesteps = 0;
    Vec betas;
    Vec alphas;
    Vec alpha_bars;

    double beta(int t) const { return betas[t - 1]; }
    double alpha(int t) const { return alphas[t - 1]; }
    double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars[t - 1]; }

    // Terminal signal-to-noise sanity: a schedule meant for generation
    // should end close to pure noise. Desk schedules are checked by the
    // caller; short ablation schedules may legitimately fail this.
    bool terminal_alpha_bar_ok() const { return alpha_bar(timesteps) < 0.05; }

    void validate() const {
        if (timesteps <= 0) throw ScheduleError("schedule needs at least one timestep");
        if (betas.size() != timesteps) throw ScheduleError("beta count disagrees with T");
        double prev = 0.0;
        for (int t = 0; t < timesteps; ++t) {
            const double b = betas[t];
            if (!(b > 0.0 && b < 1.0)) {
                throw ScheduleError("beta[" + std::to_string(t) + "] = " + std::to_string(b) +
                                    " outside (0,1)");
            }
            if (b < prev) throw ScheduleError("betas must be monotonically non-decreasing");
            prev = b;
        }
    }
};

enum class ScheduleKind { Linear, Cosine };

inline DiffusionSchedule make_schedule(int timesteps, double beta_start, double beta_end,
                                       ScheduleKind kind = ScheduleKind::Linear) {
    if (timesteps <= 0) throw ScheduleError("schedule needs at least one timestep");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ScheduleError("need 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    s.timesteps = timesteps;
    s.betas.resize(timesteps);
    if (kind == ScheduleKind::Linear) {
        for (int t = 0; t < timesteps; ++t) {
            s.betas[t] = timesteps == 1
                             ? beta_start
                             : beta_start + (beta_end - beta_start) * t / (timesteps - 1.0);
        }
    } else {
        // cosine alpha_bar curve; betas derived from consecutive ratios and
        // clipped to 0.999 by convention
        auto abar = [&](double u) {
            const double v = std::cos((u + 0.008) / 1.008 * 1.5707963267948966);
            return v * v;
        };
        const double a0 = abar(0.0);
        double prev = 1.0;
        for (int t = 1; t <= timesteps; ++t) {
            const double cur = abar(static_cast<double>(t) / timesteps) / a0;
            double beta = 1.0 - cur / prev;
            beta = std::min(beta, 0.999);
            beta = std::max(beta, 1e-8);
            s.betas[t - 1] = beta;
            prev *= (1.0 - beta);
        }
        // enforce monotonicity against floating point wiggle near t=0
        for (int t = 1; t < timesteps; ++t) s.betas[t] = std::max(s.betas[t], s.betas[t - 1]);
    }
    s.alphas = 1.0 - s.betas.array();
    s.alpha_bars.resize(timesteps);
    double acc = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        acc *= s.alphas[t];
        s.alpha_bars[t] = acc;
    }
    s.validate();
    return s;
}

// Forward noising: c_t = sqrt(abar_t) c0 + sqrt(1 - abar_t) eps.
inline Mat q_sample(const Mat& c0, int t, const Mat& noise, const DiffusionSchedule& sched) {
    if (t < 1 || t > sched.timesteps) {
        throw IndexError("timestep " + std::to_string(t) + " outside [1, " +
                         std::to_string(sched.timesteps) + "]");
    }
    if (noise.rows() != c0.rows() || noise.cols() != c0.cols()) {
        throw ShapeError("noise shape disagrees with c0");
    }
    const double ab = sched.alpha_bar(t);
    return std::sqrt(ab) * c0 + std::sqrt(1.0 - ab) * noise;
}

// Exact inversion of q_sample given the true noise.
inline Mat invert_q_sample(const Mat& ct, int t, const Mat& noise,
                           const DiffusionSchedule& sched) {
    const double ab = sched.alpha_bar(t);
    return (ct - std::sqrt(1.0 - ab) * noise) / std::sqrt(ab);
}

// One reverse (ancestral) step: predicts c0 from the noise estimate, clips
// it, and forms the posterior mean/variance. `z` is a standard normal draw
// used only for t > 1.
struct PosteriorStep {
    Mat mean;
    double sigma = 0.0;
};

inline PosteriorStep posterior_step(const Mat& xt, const Mat& eps_hat, int t,
                                    const DiffusionSchedule& sched, double clip_c0 = 3.0) {
    const double ab_t = sched.alpha_bar(t);
    const double ab_prev = sched.alpha_bar(t - 1);
    const double beta_t = sched.beta(t);
    const double alpha_t = sched.alpha(t);
    Mat c0_hat = (xt - std::sqrt(1.0 - ab_t) * eps_hat) / std::sqrt(ab_t);
    if (clip_c0 > 0.0) c0_hat = c0_hat.cwiseMax(-clip_c0).cwiseMin(clip_c0);
    PosteriorStep out;
    const double coef0 = std::sqrt(ab_prev) * beta_t / (1.0 - ab_t);
    const double coeft = std::sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t);
    out.mean = coef0 * c0_hat + coeft * xt;
    out.sigma = t > 1 ? std::sqrt(beta_t * (1.0 - ab_prev) / (1.0 - ab_t)) : 0.0;
    return out;
}

} // namespace hugdiff
