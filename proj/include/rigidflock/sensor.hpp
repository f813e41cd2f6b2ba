#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include "controller.hpp"
#include "geometry.hpp"
#include "linalg.hpp"

namespace rigidflock {

struct SensorSpec {
  double dist_frac_sigma = 0.10;
  double bearing_sigma = 0.03;
  double heading_sigma = 0.26;
  double rate_hz = 10.0;

  void validate() const {
    if (!(dist_frac_sigma >= 0.0) || !(bearing_sigma >= 0.0) || !(heading_sigma >= 0.0)) {
      throw std::invalid_argument("sensor sigmas must be nonnegative");
    }
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) {
      throw std::invalid_argument("sensor.rate_hz must be positive");
    }
  }
};

/// Orthonormal frame {radial, horizontal tangent, completing direction} for p.
inline Mat3 measurement_frame(const Vec3& p) {
  const Vec3 r = p.normalized();
  Vec3 t = Vec3::UnitZ().cross(r);
  if (t.norm() < 1e-12) {
    t = Vec3::UnitY();  // purely vertical line of sight
  }
  t.normalize();
  Mat3 v;
  v.col(0) = r;
  v.col(1) = t;
  v.col(2) = r.cross(t);
  return v;
}

/// Standard deviations along measurement_frame axes at distance d. The
/// floored variant keeps every axis at or above kCovarianceFloor.
inline Vec3 measurement_sigmas(double d, const SensorSpec& spec, bool floored = true) {
  const double lo = floored ? kCovarianceFloor : 0.0;
  const double radial = std::max(spec.dist_frac_sigma * d, lo);
  const double tangent = std::max(spec.bearing_sigma * d, lo);
  return {radial, tangent, tangent};
}

/// Position covariance of a relative measurement at true offset p.
inline Covariance3 covariance_for(const Vec3& p, const SensorSpec& spec) {
  const double d = p.norm();
  if (!(d > 0.0)) {
    throw std::domain_error("covariance_for: zero distance");
  }
  const Vec3 sd = measurement_sigmas(d, spec);
  const Mat3 v = measurement_frame(p);
  const Covariance3 c = v * sd.cwiseAbs2().asDiagonal() * v.transpose();
  return 0.5 * (c + c.transpose());
}

/// Draws one noisy relative pose. The attached covariance is the generating
/// one, except that axes below kCovarianceFloor are reported at the floor
/// while the sample itself uses the true (possibly zero) spread.
template <class Rng>
NoisyRelativePose sample_measurement(Rng& rng, const RelativePose& truth, const SensorSpec& spec) {
  std::normal_distribution<double> normal(0.0, 1.0);
  NoisyRelativePose m;
  const bool coincident = !(truth.p_rel.norm() > 0.0);
  // Coincident agents have no line of sight; fall back to the isotropic floor.
  m.cov_p = coincident ? Covariance3(kCovarianceFloor * kCovarianceFloor * Mat3::Identity())
                       : covariance_for(truth.p_rel, spec);
  const Mat3 frame = coincident ? Mat3::Identity() : measurement_frame(truth.p_rel);
  const Vec3 sd = measurement_sigmas(truth.p_rel.norm(), spec, false);
  Vec3 z;
  for (int k = 0; k < 3; ++k) {
    z[k] = normal(rng);
  }
  m.p_m = truth.p_rel + frame * sd.cwiseProduct(z);
  m.psi_m = wrap_angle(truth.psi_rel + spec.heading_sigma * normal(rng));
  m.var_psi = spec.heading_sigma * spec.heading_sigma;
  return m;
}

/// Independent generator for (master seed, stream, run).
inline std::mt19937_64 make_stream(std::uint64_t master, std::uint64_t stream, std::uint64_t run = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(run), static_cast<std::uint32_t>(run >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace rigidflock
