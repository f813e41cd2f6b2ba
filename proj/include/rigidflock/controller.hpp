#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "linalg.hpp"
#include "normal.hpp"

namespace rigidflock {

/// Floor used for degenerate covariance directions (meters).
inline constexpr double kCovarianceFloor = 1e-4;

struct NoisyRelativePose {
  Vec3 p_m = Vec3::Zero();
  double psi_m = 0.0;
  Covariance3 cov_p = Covariance3::Identity();
  double var_psi = 0.0;
};

struct DesiredRelativePose {
  Vec3 p_d = Vec3::Zero();
  double psi_d = 0.0;
};

struct Observation {
  NoisyRelativePose meas;
  DesiredRelativePose des;
};

struct ControlCommand {
  Vec3 u = Vec3::Zero();
  double omega = 0.0;
};

struct ControllerConfig {
  double k_e = 0.5;
  double ell = 0.5;
  bool restraining = false;
  double omega_cap = kPi;  // radians per control period

  void validate() const {
    if (!(k_e > 0.0) || !std::isfinite(k_e)) {
      throw std::invalid_argument("controller.k_e must be positive");
    }
    if (!(ell > 0.0 && ell <= 0.5)) {
      throw std::invalid_argument("controller.ell must lie in (0, 0.5]");
    }
    if (!(omega_cap > 0.0)) {
      throw std::invalid_argument("controller.omega_cap must be positive");
    }
  }
};

namespace detail {
inline double dz_dot(double a, double b) { return a * b; }
inline double dz_dot(const Vec3& a, const Vec3& b) { return a.dot(b); }
inline void zero_like(double& v) { v = 0.0; }
inline void zero_like(Vec3& v) { v.setZero(); }
}  // namespace detail

/// Dead-zone clamp: y when y.a lies in (0, |a|^2], zero otherwise.
template <class T>
T clamp_dz(const T& y, const T& a) {
  const double ya = detail::dz_dot(y, a);
  const double aa = detail::dz_dot(a, a);
  T out = y;
  if (!(ya > 0.0 && ya <= aa)) {
    detail::zero_like(out);
  }
  return out;
}

/// p_d^T S^T p_m, the signed horizontal cross product of desired and measured.
inline double bearing_cross(const Vec3& p_d, const Vec3& p_m) {
  return p_d.x() * p_m.y() - p_d.y() * p_m.x();
}

inline ControlCommand saturate_omega(ControlCommand c, const ControllerConfig& cfg,
                                     double rate_hz) {
  if (rate_hz > 0.0) {
    const double limit = cfg.omega_cap * rate_hz;
    c.omega = std::clamp(c.omega, -limit, limit);
  }
  return c;
}

/// Noise-agnostic proportional FEC; rate_hz > 0 enables the per-period omega cap.
inline ControlCommand proportional_command(const std::vector<Observation>& obs,
                                           const ControllerConfig& cfg, double rate_hz = 0.0) {
  if (obs.empty()) {
    throw std::invalid_argument("proportional_command: no observations");
  }
  ControlCommand c;
  for (const auto& [m, d] : obs) {
    const double dpsi = wrap_angle(m.psi_m - d.psi_d);
    const Vec3 tau_p1 = m.p_m - d.p_d;
    const Vec3 tau_p2 = m.p_m - rotz(dpsi) * d.p_d;
    c.u += tau_p1 + tau_p2;
    c.omega += bearing_cross(d.p_d, m.p_m) + 2.0 * dpsi;
  }
  c.u *= cfg.k_e;
  c.omega *= cfg.k_e;
  return saturate_omega(c, cfg, rate_hz);
}

/// Setpoint for the direct position term. Coincident measurement and target yields p_m.
inline Vec3 setpoint_p1(const NoisyRelativePose& m, const DesiredRelativePose& d, double ell) {
  const double q = std_normal_quantile(ell);
  const Vec3 diff = m.p_m - d.p_d;
  if (q == 0.0 || diff.squaredNorm() == 0.0) {
    return m.p_m;
  }
  const double sigma = mahalanobis_sigma(diff, m.cov_p);
  return m.p_m + diff * (sigma / diff.norm() * q);
}

struct RotatedDesired {
  Vec3 p_dR = Vec3::Zero();      // rotz(psi_m - psi_d) p_d
  Vec3 p_hat_dR = Vec3::Zero();  // horizontal part shrunk by cos(sigma_psi)
  Covariance3 cov_t = Covariance3::Zero();
};

/// Gaussian stand-in for the heading-rotated desired position.
inline RotatedDesired approx_rotated_desired(const NoisyRelativePose& m,
                                             const DesiredRelativePose& d) {
  if (!(m.var_psi >= 0.0)) {
    throw std::domain_error("approx_rotated_desired: negative heading variance");
  }
  const double sigma_psi = std::sqrt(m.var_psi);
  RotatedDesired r;
  r.p_dR = rotz(wrap_angle(m.psi_m - d.psi_d)) * d.p_d;
  r.p_hat_dR = r.p_dR;
  r.p_hat_dR.head<2>() *= std::cos(sigma_psi);

  constexpr double delta2 = kCovarianceFloor * kCovarianceFloor;
  const Vec3 v1(r.p_dR.x(), r.p_dR.y(), 0.0);
  const double n1 = v1.norm();
  if (!(n1 > 0.0)) {
    r.cov_t = delta2 * Covariance3::Identity();
    return r;
  }
  const double sc = std::min(sigma_psi, kPi / 2.0);
  Mat3 v;
  v.col(0) = v1 / n1;
  v.col(1) = Vec3(-v1.y(), v1.x(), 0.0) / n1;
  v.col(2) = Vec3::UnitZ();
  const double one_minus_cos = 1.0 - std::cos(sc);
  const double sin_sc = std::sin(sc);
  const Vec3 eig = n1 * n1 * Vec3(one_minus_cos * one_minus_cos, sin_sc * sin_sc, delta2);
  r.cov_t = v * eig.asDiagonal() * v.transpose();
  return r;
}

/// Setpoint for the heading-coupled position term, using C + C_t.
inline Vec3 setpoint_p2(const NoisyRelativePose& m, const RotatedDesired& rd, double ell) {
  const double q = std_normal_quantile(ell);
  const Vec3 diff = m.p_m - rd.p_hat_dR;
  if (q == 0.0 || diff.squaredNorm() == 0.0) {
    return m.p_m;
  }
  const Covariance3 cc = m.cov_p + rd.cov_t;
  return m.p_m + diff / std::sqrt(diff.dot(cc.inverse() * diff)) * q;
}

/// Bearing standard deviation from the covariance component tangent to the
/// measured horizontal bearing.
inline double bearing_sigma(const NoisyRelativePose& m) {
  const double range = m.p_m.norm();
  if (!(range > 0.0)) {
    throw std::domain_error("bearing_sigma: zero-length measurement");
  }
  const Mat3 rb = rotz(-horizontal_bearing(m.p_m));
  const Mat3 cr = rb * m.cov_p * rb.transpose();
  return std::sqrt(std::max(cr(1, 1), 0.0)) / range;
}

/// Bearing term evaluated on the measurement rotated toward the desired bearing.
inline double restrained_bearing_term(const NoisyRelativePose& m, const DesiredRelativePose& d,
                                      double ell) {
  if (horizontal_norm(m.p_m) == 0.0 || horizontal_norm(d.p_d) == 0.0) {
    return 0.0;
  }
  const double q = std_normal_quantile(ell);
  const double side = sign0(wrap_angle(horizontal_bearing(d.p_d) - horizontal_bearing(m.p_m)));
  const double angle = -bearing_sigma(m) * side * q;
  const Vec3 p_c3 = angle == 0.0 ? m.p_m : Vec3(rotz(angle) * m.p_m);
  return bearing_cross(d.p_d, p_c3);
}

/// Restrained relative-heading setpoint.
inline double setpoint_psi2(const NoisyRelativePose& m, const DesiredRelativePose& d,
                            double ell) {
  if (!(m.var_psi >= 0.0)) {
    throw std::domain_error("setpoint_psi2: negative heading variance");
  }
  const double q = std_normal_quantile(ell);
  const double offset = std::sqrt(m.var_psi) * sign0(wrap_angle(m.psi_m - d.psi_d)) * q;
  return wrap_angle(m.psi_m + offset);
}

/// The four clamped per-neighbor terms of the restrained controller, before gains.
struct RestrainedTerms {
  Vec3 p1 = Vec3::Zero();
  Vec3 p2 = Vec3::Zero();
  double psi1 = 0.0;
  double psi2 = 0.0;
};

inline RestrainedTerms restrained_terms(const NoisyRelativePose& m, const DesiredRelativePose& d,
                                        double ell) {
  RestrainedTerms t;
  const Vec3 e1 = m.p_m - d.p_d;
  if (e1.squaredNorm() > 0.0) {
    t.p1 = clamp_dz(Vec3(setpoint_p1(m, d, ell) - d.p_d), e1);
  }

  const RotatedDesired rd = approx_rotated_desired(m, d);
  const Vec3 e2 = m.p_m - rd.p_dR;
  if (e2.squaredNorm() > 0.0) {
    t.p2 = clamp_dz(Vec3(setpoint_p2(m, rd, ell) - rd.p_dR), e2);
  }

  t.psi1 = clamp_dz(restrained_bearing_term(m, d, ell), bearing_cross(d.p_d, m.p_m));
  const double e4 = wrap_angle(m.psi_m - d.psi_d);
  t.psi2 = clamp_dz(wrap_angle(setpoint_psi2(m, d, ell) - d.psi_d), e4);
  return t;
}

/// Noise-aware restrained FEC; equals proportional_command at ell = 0.5.
inline ControlCommand restrained_command(const std::vector<Observation>& obs,
                                         const ControllerConfig& cfg, double rate_hz = 0.0) {
  if (obs.empty()) {
    throw std::invalid_argument("restrained_command: no observations");
  }
  ControlCommand c;
  for (const auto& [m, d] : obs) {
    const RestrainedTerms t = restrained_terms(m, d, cfg.ell);
    c.u += t.p1 + t.p2;
    c.omega += t.psi1 + 2.0 * t.psi2;
  }
  c.u *= cfg.k_e;
  c.omega *= cfg.k_e;
  return saturate_omega(c, cfg, rate_hz);
}

inline ControlCommand compute_command(const std::vector<Observation>& obs,
                                      const ControllerConfig& cfg, double rate_hz = 0.0) {
  return cfg.restraining ? restrained_command(obs, cfg, rate_hz)
                         : proportional_command(obs, cfg, rate_hz);
}

}  // namespace rigidflock
