#include <gtest/gtest.h>

#include <random>

#include <rigidflock/controller.hpp>
#include <rigidflock/sensor.hpp>

using namespace rigidflock;

namespace {

NoisyRelativePose iso(const Vec3& p, double sigma, double psi = 0.0, double var_psi = 0.0) {
  NoisyRelativePose m;
  m.p_m = p;
  m.psi_m = psi;
  m.cov_p = sigma * sigma * Mat3::Identity();
  m.var_psi = var_psi;
  return m;
}

std::vector<Observation> random_observations(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  std::uniform_int_distribution<int> count(1, 5);
  const SensorSpec spec;
  std::vector<Observation> obs(static_cast<std::size_t>(count(rng)));
  for (auto& o : obs) {
    o.des.p_d = Vec3(5.0 * n(rng), 5.0 * n(rng), n(rng));
    o.des.psi_d = ang(rng);
    const RelativePose truth{o.des.p_d + Vec3(n(rng), n(rng), 0.3 * n(rng)),
                             wrap_angle(o.des.psi_d + 0.5 * n(rng))};
    o.meas = sample_measurement(rng, truth, spec);
  }
  return obs;
}

}  // namespace

TEST(ClampDz, Scalar) {
  EXPECT_EQ(clamp_dz(0.5, 1.0), 0.5);
  EXPECT_EQ(clamp_dz(-0.2, 1.0), 0.0);
  EXPECT_EQ(clamp_dz(1.5, 1.0), 0.0);
  EXPECT_EQ(clamp_dz(1.0, 1.0), 1.0);
  EXPECT_EQ(clamp_dz(0.0, 1.0), 0.0);
}

TEST(ClampDz, Vector) {
  EXPECT_EQ(clamp_dz(Vec3(0.5, 0, 0), Vec3(1, 0, 0)), Vec3(0.5, 0, 0));
  EXPECT_EQ(clamp_dz(Vec3(-0.5, 0, 0), Vec3(1, 0, 0)), Vec3::Zero());
  EXPECT_EQ(clamp_dz(Vec3(0.5, 5, 0), Vec3(1, 0, 0)), Vec3(0.5, 5, 0));
}

TEST(Proportional, EquilibriumAndHandCase) {
  ControllerConfig cfg;
  Observation o;
  o.des.p_d = Vec3(3, 4, 0);
  o.des.psi_d = 0.2;
  o.meas = iso(o.des.p_d, 0.1, 0.2);
  ControlCommand c = proportional_command({o}, cfg);
  EXPECT_EQ(c.u, Vec3::Zero());
  EXPECT_EQ(c.omega, 0.0);

  o.des.p_d = Vec3(0, 0, 2);
  o.des.psi_d = 0.0;
  o.meas = iso(Vec3(1, 0, 2), 0.1);
  c = proportional_command({o}, cfg);
  EXPECT_TRUE(c.u.isApprox(Vec3(2.0 * cfg.k_e, 0, 0)));
  EXPECT_EQ(c.omega, 0.0);
}

TEST(Proportional, SymmetricNeighborsCancel) {
  Observation a, b;
  a.des.p_d = Vec3(5, 0, 0);
  b.des.p_d = Vec3(-5, 0, 0);
  a.meas = iso(Vec3(6, 0, 0), 0.1);
  b.meas = iso(Vec3(-6, 0, 0), 0.1);
  const ControlCommand c = proportional_command({a, b}, ControllerConfig{});
  EXPECT_LE(c.u.norm(), 1e-15);
}

TEST(Proportional, OmegaCap) {
  Observation o;
  o.des.p_d = Vec3(10, 0, 0);
  o.meas = iso(rotz(-0.5) * o.des.p_d, 0.1, 0.5);
  ControllerConfig cfg;
  cfg.omega_cap = 0.01;
  const ControlCommand free = proportional_command({o}, cfg);
  const ControlCommand capped = proportional_command({o}, cfg, 10.0);
  EXPECT_GT(std::abs(free.omega), 0.1);
  EXPECT_DOUBLE_EQ(std::abs(capped.omega), 0.1);
}

TEST(Setpoints, P1) {
  const DesiredRelativePose d{Vec3(5, 0, 0), 0.0};
  NoisyRelativePose m = iso(Vec3(7, 1, 0), 0.5);
  EXPECT_EQ(setpoint_p1(m, d, 0.5), m.p_m);

  const Vec3 diff = m.p_m - d.p_d;
  const Vec3 want = m.p_m + 0.5 * std_normal_quantile(0.2) * diff.normalized();
  EXPECT_TRUE(setpoint_p1(m, d, 0.2).isApprox(want, 1e-12));

  m.p_m = d.p_d + Vec3(2, 0, 0);
  m.cov_p = Vec3(4, 1, 1).asDiagonal();
  const Vec3 off = setpoint_p1(m, d, 0.3) - m.p_m;
  EXPECT_NEAR(off.x(), 2.0 * std_normal_quantile(0.3), 1e-12);
  EXPECT_NEAR(off.x(), -2.0 * 0.524401, 1e-5);
  EXPECT_EQ(setpoint_p1(iso(d.p_d, 1.0), d, 0.3), d.p_d);
}

TEST(RotatedDesired, Limits) {
  const DesiredRelativePose d{Vec3(5, 0, 0), 0.0};
  RotatedDesired r = approx_rotated_desired(iso(Vec3(5, 0, 0), 0.1, 0.0, 0.0), d);
  EXPECT_EQ(r.p_hat_dR, r.p_dR);
  EXPECT_LE(r.cov_t.norm(), 1e-6);

  r = approx_rotated_desired(iso(Vec3(5, 0, 0), 0.1, 0.0, 0.26 * 0.26), d);
  EXPECT_NEAR(r.p_hat_dR.x(), 5.0 * std::cos(0.26), 1e-12);
  const SymmetricEigen e = symmetric_eigen(r.cov_t);
  const double radial = 25.0 * std::pow(1.0 - std::cos(0.26), 2);
  const double tangential = 25.0 * std::pow(std::sin(0.26), 2);
  EXPECT_NEAR(e.values[0], 25.0 * 1e-8, 1e-12);
  EXPECT_NEAR(e.values[1], radial, 1e-12);
  EXPECT_NEAR(e.values[2], tangential, 1e-12);
  EXPECT_NEAR(r.cov_t(0, 0), radial, 1e-12);

  r = approx_rotated_desired(iso(Vec3(5, 0, 0), 0.1, 0.0, kPi * kPi / 4.0), d);
  EXPECT_NEAR(r.cov_t(0, 0), 25.0, 1e-9);
  EXPECT_NEAR(r.cov_t(1, 1), 25.0, 1e-9);

  r = approx_rotated_desired(iso(Vec3(0, 0, 5), 0.1, 0.0, 0.1), DesiredRelativePose{Vec3(0, 0, 5), 0});
  EXPECT_TRUE(r.cov_t.isApprox(1e-8 * Mat3::Identity()));
}

TEST(Setpoints, P2) {
  const DesiredRelativePose d{Vec3(5, 2, 0), 0.1};
  NoisyRelativePose m = iso(Vec3(6, 3, 0.5), 0.4, 0.4, 0.26 * 0.26);
  const RotatedDesired rd = approx_rotated_desired(m, d);
  EXPECT_EQ(setpoint_p2(m, rd, 0.5), m.p_m);
  const Vec3 s = setpoint_p2(m, rd, 0.3);
  const Vec3 step = s - m.p_m;
  const Mat3 cc = m.cov_p + rd.cov_t;
  EXPECT_NEAR(std::sqrt(step.dot(cc.inverse() * step)), -std_normal_quantile(0.3), 1e-10);

  NoisyRelativePose flat = iso(Vec3(6, 3, 0.5), 0.4, 0.1, 0.0);
  const RotatedDesired r0 = approx_rotated_desired(flat, d);
  const DesiredRelativePose target{r0.p_dR, 0.0};
  EXPECT_TRUE(setpoint_p2(flat, r0, 0.3).isApprox(setpoint_p1(flat, target, 0.3), 1e-6));
}

TEST(BearingSigma, IsotropicAndAxisAligned) {
  NoisyRelativePose m = iso(Vec3(3, 4, 0), 0.5);
  EXPECT_NEAR(bearing_sigma(m), 0.1, 1e-12);
  m.p_m = Vec3(10, 0, 0);
  m.cov_p = Vec3(0.25, 0.09, 0.01).asDiagonal();
  EXPECT_NEAR(bearing_sigma(m), 0.03, 1e-12);
}

TEST(BearingSigma, MatchesProjectedSamples) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    Mat3 a;
    for (int k = 0; k < 9; ++k) a(k / 3, k % 3) = 0.3 * n(rng);
    NoisyRelativePose m;
    m.cov_p = a * a.transpose() + 0.01 * Mat3::Identity();
    const double bearing = kPi * (2.0 * (trial + 0.5) / 5.0 - 1.0);
    const double sd = std::sqrt(m.cov_p.trace());
    m.p_m = 12.0 * sd * Vec3(std::cos(bearing), std::sin(bearing), 0.2);
    const Mat3 root = psd_sqrt(m.cov_p);
    double acc = 0.0;
    constexpr int samples = 200000;
    for (int s = 0; s < samples; ++s) {
      const Vec3 x = m.p_m + root * Vec3(n(rng), n(rng), n(rng));
      const double db = wrap_angle(horizontal_bearing(x) - bearing);
      acc += db * db;
    }
    // the estimator uses range, the projection uses horizontal range
    const double projected = std::sqrt(acc / samples) * horizontal_norm(m.p_m) / m.p_m.norm();
    EXPECT_NEAR(bearing_sigma(m), projected, 0.05 * projected);
  }
}

TEST(RestrainedBearing, HalfIsRaw) {
  const DesiredRelativePose d{Vec3(5, 1, 0), 0.0};
  const NoisyRelativePose m = iso(Vec3(4, 3, 0), 0.2);
  EXPECT_EQ(restrained_bearing_term(m, d, 0.5), bearing_cross(d.p_d, m.p_m));
}

TEST(RestrainedBearing, HandValue) {
  // desired bearing 0.2 rad ahead of the measurement, sigma' = 0.1
  const DesiredRelativePose d{Vec3(5.0 * std::cos(0.2), 5.0 * std::sin(0.2), 0), 0.0};
  const NoisyRelativePose m = iso(Vec3(10, 0, 0), 1.0);
  const double q = std_normal_quantile(0.3);
  const double want = -50.0 * std::sin(0.2 + 0.1 * q);
  EXPECT_NEAR(restrained_bearing_term(m, d, 0.3), want, 1e-12);
  // the factored form rotates p_m toward p_d, shrinking the cross product
  EXPECT_LT(std::abs(want), std::abs(bearing_cross(d.p_d, m.p_m)));
}

TEST(RestrainedBearing, AlignedBearingsClampToZero) {
  const DesiredRelativePose d{Vec3(5, 0, 0), 0.0};
  const NoisyRelativePose m = iso(Vec3(8, 0, 0), 0.2);
  EXPECT_EQ(bearing_cross(d.p_d, m.p_m), 0.0);
  EXPECT_EQ(restrained_terms(m, d, 0.2).psi1, 0.0);
}

TEST(SetpointPsi2, Values) {
  const DesiredRelativePose d{Vec3(5, 0, 0), 0.0};
  NoisyRelativePose m = iso(Vec3(5, 0, 0), 0.1, 0.5, 0.26 * 0.26);
  EXPECT_EQ(setpoint_psi2(m, d, 0.5), 0.5);
  EXPECT_NEAR(setpoint_psi2(m, d, 0.3), 0.5 - 0.26 * 0.524401, 1e-6);
  m.psi_m = 0.0;
  EXPECT_EQ(setpoint_psi2(m, d, 0.3), 0.0);
  EXPECT_EQ(restrained_terms(m, d, 0.3).psi2, 0.0);
}

TEST(Restrained, AtTargetAndInsideDeadZone) {
  ControllerConfig cfg;
  cfg.ell = 0.2;
  cfg.restraining = true;
  Observation o;
  o.des.p_d = Vec3(4, 3, 1);
  o.des.psi_d = 0.3;
  o.meas = iso(o.des.p_d, 0.2, 0.3, 0.01);
  ControlCommand c = restrained_command({o}, cfg);
  EXPECT_EQ(c.u, Vec3::Zero());
  EXPECT_EQ(c.omega, 0.0);

  // every error smaller than its dead-zone half width
  const double q = -std_normal_quantile(cfg.ell);
  o.meas = iso(rotz(0.2 * 0.2 * q / 5.0) * (o.des.p_d + Vec3(0, 0, 0.2 * q / 2.0)), 0.2,
               0.3 + 0.1 * q / 2.0, 0.01);
  const RestrainedTerms t = restrained_terms(o.meas, o.des, cfg.ell);
  EXPECT_EQ(t.p1, Vec3::Zero());
  EXPECT_EQ(t.p2, Vec3::Zero());
  EXPECT_EQ(t.psi1, 0.0);
  EXPECT_EQ(t.psi2, 0.0);
  c = restrained_command({o}, cfg);
  EXPECT_EQ(c.u, Vec3::Zero());
  EXPECT_EQ(c.omega, 0.0);
}

TEST(Restrained, HalfEqualsProportionalExactly) {
  std::mt19937_64 rng(1234);
  ControllerConfig prop, res;
  res.restraining = true;
  for (int i = 0; i < 10000; ++i) {
    const auto obs = random_observations(rng);
    const ControlCommand a = proportional_command(obs, prop, 10.0);
    const ControlCommand b = restrained_command(obs, res, 10.0);
    ASSERT_EQ(a.u, b.u) << "input " << i;
    ASSERT_EQ(a.omega, b.omega) << "input " << i;
  }
}

TEST(Restrained, NeverExceedsProportionalTerms) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 2000; ++i) {
    for (const auto& o : random_observations(rng)) {
      const RestrainedTerms t = restrained_terms(o.meas, o.des, 0.1);
      const Vec3 e1 = o.meas.p_m - o.des.p_d;
      EXPECT_LE(t.p1.dot(e1), e1.squaredNorm() + 1e-12);
      EXPECT_GE(t.p1.dot(e1), 0.0);
    }
  }
}

TEST(ControllerConfig, Validation) {
  ControllerConfig c;
  c.ell = 0.7;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.ell = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.ell = 0.2;
  c.k_e = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(proportional_command({}, ControllerConfig{}), std::invalid_argument);
}
