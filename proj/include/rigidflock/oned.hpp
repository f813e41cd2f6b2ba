#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "controller.hpp"
#include "linalg.hpp"
#include "normal.hpp"
#include "parallel.hpp"
#include "sensor.hpp"

namespace rigidflock {

/// One-dimensional agent ensemble tracking a scalar target d from noisy
/// measurements m = x + e, e ~ N(0, sigma_m^2).
struct OneDConfig {
  double k_ef = 0.5;
  double ell = 0.5;
  double sigma_m = 3.0;
  double f = 10.0;
  double d = 0.0;
  double sigma_init = 100.0;
  std::size_t n_agents = 10000;
  std::size_t horizon = 2000;
  std::uint64_t seed = 1;
  std::size_t record_agents = 0;  // full state histories kept for the first agents

  /// k_ef outside (0, 2) is accepted only when explicitly probing instability.
  void validate(bool allow_unstable_gain = false) const {
    if (!(k_ef > 0.0) || (!allow_unstable_gain && !(k_ef < 2.0))) {
      throw std::invalid_argument("oned.k_ef must lie in (0, 2)");
    }
    if (!(ell > 0.0 && ell <= 0.5)) {
      throw std::invalid_argument("oned.ell must lie in (0, 0.5]");
    }
    if (!(sigma_m >= 0.0) || !(sigma_init >= 0.0)) {
      throw std::invalid_argument("oned sigmas must be nonnegative");
    }
    if (!(f > 0.0)) {
      throw std::invalid_argument("oned.f must be positive");
    }
  }
};

// ---- single-step dynamics -------------------------------------------------

inline double step_1d_proportional(double x, double m, const OneDConfig& cfg) {
  return x + cfg.k_ef * (cfg.d - m);
}

inline double step_1d_restrained(double x, double m, double sigma_m, const OneDConfig& cfg) {
  const double err = cfg.d - m;
  const double y = err + sign0(err) * sigma_m * std_normal_quantile(cfg.ell);
  return x + cfg.k_ef * clamp_dz(y, err);
}

/// Noiseless state between samples: linear motion toward the next sample.
inline double continuous_state_1d(double t, double x0, const OneDConfig& cfg) {
  const double tf = t * cfg.f;
  const double k = std::floor(tf);
  const double frac = tf - k;
  const double xk = cfg.d + (x0 - cfg.d) * std::pow(1.0 - cfg.k_ef, k);
  return cfg.k_ef * cfg.d * frac + xk * (1.0 - cfg.k_ef * frac);
}

inline double exp_approx_1d(double t, double x0, const OneDConfig& cfg) {
  return cfg.d + (x0 - cfg.d) * std::pow(1.0 - cfg.k_ef, t * cfg.f);
}

// ---- closed forms ---------------------------------------------------------

inline void require_stable_gain(double k_ef) {
  if (!(k_ef > 0.0 && k_ef < 2.0)) {
    throw std::domain_error("k_ef must lie in (0, 2)");
  }
}

/// Stable-state deviation of proportional control under measurement noise.
inline double sigma_ss_proportional(double k_ef, double sigma_m) {
  require_stable_gain(k_ef);
  return sigma_m * std::sqrt(k_ef / (2.0 - k_ef));
}

/// Variance after k proportional steps starting from variance var0.
inline double variance_closed_form(std::size_t k, double k_ef, double sigma_m, double var0) {
  require_stable_gain(k_ef);
  const double decay = std::pow(1.0 - k_ef, 2.0 * static_cast<double>(k));
  return sigma_m * sigma_m * k_ef * (1.0 - decay) / (2.0 - k_ef) + decay * var0;
}

/// Empirical variance exponent for restrained control, linear between nodes.
inline double beta_coefficient(double k_ef) {
  static constexpr std::array<double, 5> nodes = {0.1, 0.5, 1.0, 1.5, 1.9};
  static constexpr std::array<double, 5> beta = {0.7251, 0.8266, 1.043, 1.498, 3.177};
  if (!(k_ef >= nodes.front() && k_ef <= nodes.back())) {
    throw std::domain_error("beta_coefficient: k_ef outside [0.1, 1.9]");
  }
  std::size_t i = 0;
  while (i + 2 < nodes.size() && k_ef > nodes[i + 1]) {
    ++i;
  }
  const double w = (k_ef - nodes[i]) / (nodes[i + 1] - nodes[i]);
  return beta[i] + w * (beta[i + 1] - beta[i]);
}

inline double sigma_ss_restrained(double k_ef, double sigma_m, double ell) {
  const double b = beta_coefficient(k_ef);
  const double base = sigma_ss_proportional(k_ef, sigma_m);
  return base * std::sqrt(std::exp(b * std_normal_quantile(ell)));
}

/// Probability that the restrained agent does not move at deviation delta = d - x.
inline double stopping_probability(double delta, double sigma_m, double ell) {
  if (!(sigma_m > 0.0)) {
    throw std::domain_error("stopping_probability: sigma_m must be positive");
  }
  const double q = std_normal_quantile(ell);
  const double z = -delta / sigma_m;
  return std::max(0.0, std_normal_cdf(z - q) - std_normal_cdf(z + q));
}

/// Linearized gain of the expected deviation near the target.
inline double effective_gain(double k_ef, double ell, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("effective_gain: sigma must be positive");
  }
  const double q = std_normal_quantile(ell);
  const double bump = (1.0 - 1.0 / sigma) * std::sqrt(2.0 / kPi) * q *
                      std::exp(-q * q / (2.0 * sigma * sigma));
  return k_ef * (bump + 2.0 * ell);
}

/// One-step variance of the deviation when starting exactly at the target.
inline double conditional_variance_at_target(double k_ef, double ell, double sigma) {
  if (!(sigma > 0.0)) {
    throw std::domain_error("conditional_variance_at_target: sigma must be positive");
  }
  const double q = std_normal_quantile(ell);
  return 2.0 * k_ef * k_ef * sigma * sigma * ((1.0 + q * q) * ell + q * std_normal_pdf(q));
}

/// Expected number of consecutive motionless steps in the stable state,
/// assuming a Gaussian stable-state deviation.
inline double expected_coherence_time(double k_ef, double ell, double sigma_m) {
  const double s = sigma_ss_restrained(k_ef, sigma_m, ell);
  auto integrand = [&](double z) {
    const double density = std_normal_pdf(z / s) / s;
    return density / (1.0 - stopping_probability(z, sigma_m, ell));
  };
  double error = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      integrand, -8.0 * s, 8.0 * s, 15, 1e-12, &error);
  if (!std::isfinite(value) || error > 1e-6) {
    throw numerical_error("expected_coherence_time: quadrature did not converge");
  }
  return value;
}

/// Coherence time from a single-agent run: time-averaged number of steps until
/// the next move (counting the move itself), after a burn-in.
inline double simulate_coherence_time(double k_ef, double ell, double sigma_m, std::size_t steps,
                                      std::uint64_t seed, std::size_t burn_in = 1000) {
  OneDConfig cfg;
  cfg.k_ef = k_ef;
  cfg.ell = ell;
  cfg.sigma_m = sigma_m;
  cfg.d = 0.0;
  auto rng = make_stream(seed, 0, 0);
  std::normal_distribution<double> noise(0.0, sigma_m);
  double x = cfg.d;
  std::vector<char> moved;
  moved.reserve(steps);
  for (std::size_t k = 0; k < burn_in + steps; ++k) {
    const double nx = step_1d_restrained(x, x + noise(rng), sigma_m, cfg);
    if (k >= burn_in) {
      moved.push_back(nx != x);
    }
    x = nx;
  }
  double total = 0.0;
  std::size_t counted = 0;
  std::size_t wait = 0;
  bool seen_move = false;
  for (std::size_t i = moved.size(); i-- > 0;) {
    if (moved[i]) {
      wait = 1;
      seen_move = true;
    } else if (seen_move) {
      ++wait;
    }
    if (seen_move) {
      total += static_cast<double>(wait);
      ++counted;
    }
  }
  if (counted == 0) {
    throw numerical_error("simulate_coherence_time: agent never moved");
  }
  return total / static_cast<double>(counted);
}

/// KL divergence of the sample histogram from a Gaussian fitted by moments.
/// 64 bins span mean +- 5 sigma; empty bins are skipped.
inline double kl_divergence_gaussianity(const std::vector<double>& samples) {
  const std::size_t n = samples.size();
  if (n < 2) {
    throw std::domain_error("kl_divergence_gaussianity: too few samples");
  }
  double mean = 0.0;
  for (double v : samples) {
    mean += v;
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : samples) {
    var += (v - mean) * (v - mean);
  }
  var /= static_cast<double>(n);
  if (!(var > 0.0)) {
    throw std::domain_error("kl_divergence_gaussianity: zero variance");
  }
  const double sd = std::sqrt(var);
  constexpr int bins = 64;
  const double lo = mean - 5.0 * sd;
  const double width = 10.0 * sd / bins;
  std::array<std::size_t, bins> counts{};
  for (double v : samples) {
    const double pos = (v - lo) / width;
    if (pos >= 0.0 && pos < bins) {
      ++counts[static_cast<std::size_t>(pos)];
    }
  }
  double kl = 0.0;
  for (int b = 0; b < bins; ++b) {
    if (counts[b] == 0) {
      continue;
    }
    const double p = static_cast<double>(counts[b]) / static_cast<double>(n);
    const double a = (lo + b * width - mean) / sd;
    const double g = std_normal_cdf(a + width / sd) - std_normal_cdf(a);
    kl += p * std::log(p / g);
  }
  return kl;
}

// ---- ensembles --------------------------------------------------------------

inline constexpr std::size_t kOneDChunk = 4096;

struct EnsembleTrace {
  // Index k holds statistics after step k + 1.
  std::vector<double> mean_abs_dd;  // mean |x - d|
  std::vector<double> sigma_a;      // ensemble standard deviation of x
  std::vector<double> mean_abs_dv;  // mean |v[k] - v[k-1]|, v = (x[k] - x[k-1]) f
  std::vector<std::vector<double>> histories;  // x[0..horizon] per recorded agent
  std::vector<double> final_states;
};

/// Runs the ensemble. Agents are processed in fixed chunks, each with its own
/// random stream, so results do not depend on the worker count.
inline EnsembleTrace run_1d_ensemble(const OneDConfig& cfg, bool allow_unstable_gain = false) {
  cfg.validate(allow_unstable_gain);
  const std::size_t n = cfg.n_agents;
  const std::size_t m = cfg.horizon;
  const std::size_t chunks = (n + kOneDChunk - 1) / kOneDChunk;
  const bool restrained = cfg.ell < 0.5;

  struct Partial {
    std::vector<double> abs_dd, sum, sum_sq, abs_dv;
  };
  std::vector<Partial> partial(chunks);
  EnsembleTrace out;
  out.histories.assign(std::min(cfg.record_agents, n), std::vector<double>(m + 1));
  out.final_states.assign(n, 0.0);

  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kOneDChunk;
    const std::size_t end = std::min(n, begin + kOneDChunk);
    auto rng = make_stream(cfg.seed, c, 0);
    std::normal_distribution<double> init(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x(end - begin);
    std::vector<double> v(end - begin, 0.0);
    for (auto& xi : x) {
      xi = cfg.d + cfg.sigma_init * init(rng);
    }
    for (std::size_t i = begin; i < std::min(end, out.histories.size()); ++i) {
      out.histories[i][0] = x[i - begin];
    }
    Partial& p = partial[c];
    p.abs_dd.assign(m, 0.0);
    p.sum.assign(m, 0.0);
    p.sum_sq.assign(m, 0.0);
    p.abs_dv.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double meas = x[i] + cfg.sigma_m * noise(rng);
        const double nx = restrained ? step_1d_restrained(x[i], meas, cfg.sigma_m, cfg)
                                     : step_1d_proportional(x[i], meas, cfg);
        const double nv = (nx - x[i]) * cfg.f;
        p.abs_dv[k] += std::abs(nv - v[i]);
        v[i] = nv;
        x[i] = nx;
        const double dev = nx - cfg.d;
        p.abs_dd[k] += std::abs(dev);
        p.sum[k] += dev;
        p.sum_sq[k] += dev * dev;
      }
      for (std::size_t i = begin; i < std::min(end, out.histories.size()); ++i) {
        out.histories[i][k + 1] = x[i - begin];
      }
    }
    std::copy(x.begin(), x.end(), out.final_states.begin() + static_cast<std::ptrdiff_t>(begin));
  });

  out.mean_abs_dd.assign(m, 0.0);
  out.sigma_a.assign(m, 0.0);
  out.mean_abs_dv.assign(m, 0.0);
  const double inv_n = 1.0 / static_cast<double>(std::max<std::size_t>(n, 1));
  for (std::size_t k = 0; k < m; ++k) {
    double dd = 0.0, s = 0.0, s2 = 0.0, dv = 0.0;
    for (const auto& p : partial) {
      dd += p.abs_dd[k];
      s += p.sum[k];
      s2 += p.sum_sq[k];
      dv += p.abs_dv[k];
    }
    const double mean = s * inv_n;
    out.mean_abs_dd[k] = dd * inv_n;
    out.sigma_a[k] = std::sqrt(std::max(0.0, s2 * inv_n - mean * mean));
    out.mean_abs_dv[k] = dv * inv_n;
  }
  return out;
}

struct TwoAgentTrace {
  std::vector<double> mean_delta;  // ensemble mean of Delta_12 after each step
  std::vector<double> clamp_rate;  // fraction of pairs with at least one clamped agent
};

/// Pairs of mutually observing 1D agents with independent equal-variance noise.
/// Delta_12 = p2 - p1 - d starts at delta0 for every pair.
inline TwoAgentTrace run_1d_two_agents(const OneDConfig& cfg, double delta0,
                                       bool allow_unstable_gain = false) {
  cfg.validate(allow_unstable_gain);
  const std::size_t n = cfg.n_agents;
  const std::size_t m = cfg.horizon;
  const std::size_t chunks = (n + kOneDChunk - 1) / kOneDChunk;
  const double q = std_normal_quantile(cfg.ell);

  std::vector<std::vector<double>> sums(chunks), clamps(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t count = std::min(n, (c + 1) * kOneDChunk) - c * kOneDChunk;
    auto rng = make_stream(cfg.seed, c, 1);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> delta(count, delta0);
    sums[c].assign(m, 0.0);
    clamps[c].assign(m, 0.0);
    auto act = [&](double meas_err, bool& clamped) {
      const double y = sign0(meas_err) * cfg.sigma_m * q + meas_err;
      const double out = clamp_dz(y, meas_err);
      clamped = clamped || (out == 0.0 && meas_err != 0.0);
      return out;
    };
    for (std::size_t k = 0; k < m; ++k) {
      for (auto& dl : delta) {
        const double d12 = dl + cfg.sigma_m * noise(rng);
        const double d21 = -dl + cfg.sigma_m * noise(rng);
        bool clamped = false;
        const double c12 = act(d12, clamped);
        const double c21 = act(d21, clamped);
        dl = dl + cfg.k_ef * c21 - cfg.k_ef * c12;
        sums[c][k] += dl;
        clamps[c][k] += clamped ? 1.0 : 0.0;
      }
    }
  });

  TwoAgentTrace out;
  out.mean_delta.assign(m, 0.0);
  out.clamp_rate.assign(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t c = 0; c < chunks; ++c) {
      out.mean_delta[k] += sums[c][k];
      out.clamp_rate[k] += clamps[c][k];
    }
    out.mean_delta[k] /= static_cast<double>(n);
    out.clamp_rate[k] /= static_cast<double>(n);
  }
  return out;
}

// ---- convergence metrics ----------------------------------------------------

struct ConvergenceMetrics {
  std::size_t k_c = 0;
  double t_c = 0.0;
  double sigma_t = 0.0;
  double mean_dv = 0.0;
  bool converged = false;
  std::size_t k_c_literal = 0;  // min k with |x[k-1] - d| > 3 sigma_fin[k], for comparison
};

/// Standard deviation of the suffix x[k..M], accumulated backward with
/// Welford updates. The offset d does not change it and is kept for symmetry
/// with the band test.
inline std::vector<double> suffix_deviation(const std::vector<double>& x, double d) {
  std::vector<double> out(x.size(), 0.0);
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = x.size(); i-- > 0;) {
    const double v = x[i] - d;
    const double n = static_cast<double>(x.size() - i);
    const double delta = v - mean;
    mean += delta / n;
    m2 += delta * (v - mean);
    out[i] = std::sqrt(std::max(0.0, m2 / n));
  }
  return out;
}

/// Convergence time, stable-state deviation and mean velocity change of one
/// history x[0..M] sampled at rate f.
inline ConvergenceMetrics convergence_metrics_1d(const std::vector<double>& x, double d, double f) {
  if (x.size() < 10) {
    throw std::invalid_argument("convergence_metrics_1d: history shorter than 10 samples");
  }
  const std::size_t m = x.size() - 1;
  const std::vector<double> sfin = suffix_deviation(x, d);
  ConvergenceMetrics r;
  // The final sample has zero tail spread, so it does not count.
  r.k_c = m;
  for (std::size_t k = 0; k < m; ++k) {
    if (std::abs(x[k] - d) <= 3.0 * sfin[k]) {
      r.k_c = k;
      r.converged = true;
      break;
    }
  }
  r.k_c_literal = m;
  for (std::size_t k = 1; k <= m; ++k) {
    if (std::abs(x[k - 1] - d) > 3.0 * sfin[k]) {
      r.k_c_literal = k;
      break;
    }
  }
  r.t_c = static_cast<double>(r.k_c) / f;
  r.sigma_t = sfin[r.k_c];
  double dv = 0.0;
  double prev_v = (x[1] - x[0]) * f;
  for (std::size_t k = 2; k <= m; ++k) {
    const double v = (x[k] - x[k - 1]) * f;
    dv += std::abs(v - prev_v);
    prev_v = v;
  }
  r.mean_dv = dv / static_cast<double>(m - 1);
  return r;
}

}  // namespace rigidflock
