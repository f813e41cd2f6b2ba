#include <gtest/gtest.h>

#include <random>

#include <rigidflock/simulator.hpp>
#include <rigidflock/stability.hpp>

using namespace rigidflock;

namespace {

Poses random_poses(std::size_t n, std::mt19937_64& rng, double spread = 8.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> a(-kPi, kPi);
  Poses p(n);
  for (auto& q : p) {
    q.p = spread * Vec3(g(rng), g(rng), 0.3 * g(rng));
    q.psi = a(rng);
  }
  return p;
}

ObservationGraph random_connected_graph(std::size_t n, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(0.4);
  for (;;) {
    ObservationGraph g(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j && coin(rng)) g.add_edge(i, j);
    if (!g.edges().empty() && is_connected(g)) return g;
  }
}

Eigen::VectorXd pack(const Poses& p) {
  Eigen::VectorXd q(4 * static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) {
    q.segment<3>(4 * static_cast<Eigen::Index>(i)) = p[i].p;
    q[4 * static_cast<Eigen::Index>(i) + 3] = p[i].psi;
  }
  return q;
}

Poses unpack(const Eigen::VectorXd& q) {
  Poses p(static_cast<std::size_t>(q.size() / 4));
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i].p = q.segment<3>(4 * static_cast<Eigen::Index>(i));
    p[i].psi = q[4 * static_cast<Eigen::Index>(i) + 3];
  }
  return p;
}

}  // namespace

TEST(RigidityWorld, SingleEdgeStructure) {
  Poses p(2);
  p[1].p = Vec3(3, 4, 1);
  const ObservationGraph g(2, {{0, 1}});
  const RigidityMatrix h = rigidity_world(p, g);
  ASSERT_EQ(h.rows(), 4);
  ASSERT_EQ(h.cols(), 8);
  EXPECT_TRUE((h.block<3, 3>(0, 0).isApprox(-Mat3::Identity())));
  EXPECT_TRUE((h.block<3, 3>(0, 4).isApprox(Mat3::Identity())));
  EXPECT_TRUE((h.block<3, 1>(0, 3).isApprox(rotz_derivative(0.0).transpose() * p[1].p)));
  EXPECT_EQ(h.row(3).sum(), 0.0);
  EXPECT_EQ(h(3, 3), -1.0);
  EXPECT_EQ(h(3, 7), 1.0);
}

TEST(RigidityWorld, FiniteDifferences) {
  std::mt19937_64 rng(100);
  std::normal_distribution<double> g(0.0, 1.0);
  constexpr double eps = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
    const Poses p = random_poses(n, rng);
    const ObservationGraph graph = random_connected_graph(n, rng);
    const RigidityMatrix h = rigidity_world(p, graph);
    Eigen::VectorXd dir(4 * static_cast<Eigen::Index>(n));
    for (Eigen::Index k = 0; k < dir.size(); ++k) dir[k] = g(rng);
    const Eigen::VectorXd q = pack(p);
    const Eigen::VectorXd kp = stacked_relative_poses(unpack(q + eps * dir), graph);
    const Eigen::VectorXd km = stacked_relative_poses(unpack(q - eps * dir), graph);
    Eigen::VectorXd fd = (kp - km) / (2.0 * eps);
    const Eigen::VectorXd an = h * dir;
    EXPECT_LE((fd - an).norm(), 1e-5 * an.norm()) << "trial " << trial;
  }
}

TEST(RigidityLocal, Blocks) {
  Poses p(2);
  p[1].p = Vec3(2, 1, 0);
  const ObservationGraph g(2, {{0, 1}});
  const RigidityMatrix h = rigidity_local(stacked_relative_poses(p, g), g);
  EXPECT_TRUE((h.block<3, 3>(0, 0).isApprox(-Mat3::Identity())));
  EXPECT_TRUE((h.block<3, 3>(0, 4).isApprox(Mat3::Identity())));
  EXPECT_THROW(rigidity_local(Eigen::VectorXd::Zero(3), g), std::invalid_argument);
}

TEST(StackedAction, ZeroErrorGivesZero) {
  const Scenario sc = builtin_scenarios()[2];
  for (const auto& c : stacked_action(sc.desired, sc.desired, sc.graph, 0.5)) {
    EXPECT_EQ(c.u, Vec3::Zero());
    EXPECT_EQ(c.omega, 0.0);
  }
}

TEST(StackedAction, MatchesPerAgentClosedForm) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
    const Poses p = random_poses(n, rng);
    const Poses d = random_poses(n, rng);
    const ObservationGraph g = random_connected_graph(n, rng);
    const auto a = stacked_action(p, d, g, 0.5);
    const auto b = fec_raw(p, d, g, 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_LE((a[i].u - b[i].u).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(a[i].omega, b[i].omega, 1e-10);
    }
  }
}

TEST(StackedAction, MutualGraphsMatchProportionalCommand) {
  // on mutual graphs the incoming-edge terms equal the second proportional terms
  std::mt19937_64 rng(12);
  ControllerConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 4);
    const Poses p = random_poses(n, rng);
    const Poses d = random_poses(n, rng);
    const ObservationGraph g = ObservationGraph::complete(n);
    const auto raw = fec_raw(p, d, g, cfg.k_e);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Observation> obs;
      for (std::size_t j : g.out_neighbors(i)) {
        Observation o;
        const RelativePose r = relative_pose(p[i], p[j]);
        const RelativePose rd = relative_pose(d[i], d[j]);
        o.meas.p_m = r.p_rel;
        o.meas.psi_m = r.psi_rel;
        o.des.p_d = rd.p_rel;
        o.des.psi_d = rd.psi_rel;
        obs.push_back(o);
      }
      const ControlCommand c = proportional_command(obs, cfg);
      EXPECT_LE((c.u - raw[i].u).cwiseAbs().maxCoeff(), 1e-10);
      EXPECT_NEAR(c.omega, raw[i].omega, 1e-9);
    }
  }
}

TEST(TwoAgentM, EntriesAndMinors) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> g(0.0, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    Poses p(2);
    p[1].p = Vec3(g(rng), g(rng), g(rng));
    const ObservationGraph graph(2, {{0, 1}});
    const Eigen::MatrixXd m = m_matrix(p, graph);
    EXPECT_LE((m - two_agent_m(p[1].p)).cwiseAbs().maxCoeff(), 1e-9 * (1.0 + m.norm()));
    const MinorReport r = leading_minors(m);
    const std::vector<double> want = two_agent_minors(p[1].p);
    ASSERT_TRUE(r.positive_definite);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(r.minors[k], want[k], 1e-9 * want[k]);
    }
  }
}

TEST(EdgeBlocks, Catalog) {
  std::mt19937_64 rng(2);
  const Poses p = random_poses(4, rng);
  EXPECT_EQ(e_ab_block({0, 1}, {2, 3}, p), Eigen::Matrix4d::Zero());
  Poses level = p;
  for (auto& q : level) q.psi = 0.4;
  EXPECT_TRUE(e_ab_block({0, 2}, {1, 2}, level).isApprox(Eigen::Matrix4d::Identity()));
  EXPECT_EQ(classify_edges({0, 1}, {1, 0}), EdgeRelation::kOpposite);
  EXPECT_EQ(classify_edges({0, 1}, {0, 2}), EdgeRelation::kOutOut);
  EXPECT_EQ(classify_edges({0, 1}, {2, 1}), EdgeRelation::kInIn);
  EXPECT_EQ(classify_edges({0, 1}, {1, 2}), EdgeRelation::kInOut);
  EXPECT_EQ(classify_edges({1, 2}, {0, 1}), EdgeRelation::kOutIn);
}

TEST(EdgeBlocks, AssemblyMatchesProduct) {
  std::mt19937_64 rng(44);
  for (int trial = 0; trial < 50; ++trial) {
    const Poses p = random_poses(4, rng);
    const ObservationGraph g = random_connected_graph(4, rng);
    const Eigen::MatrixXd a = m_matrix(p, g);
    const Eigen::MatrixXd b = m_matrix_blocks(p, g);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + a.norm()));
  }
}

TEST(Lyapunov, SignAndFiniteDifference) {
  Poses p(2);
  p[1].p = Vec3(3, -1, 0.5);
  const ObservationGraph g(2, {{0, 1}});
  EXPECT_EQ(lyapunov_rate(p, g, Eigen::VectorXd::Zero(4), 0.5), 0.0);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    Eigen::VectorXd e(4);
    for (int k = 0; k < 4; ++k) e[k] = n(rng);
    EXPECT_LT(lyapunov_rate(p, g, e, 0.5), 0.0);
  }

  // zero-noise mutual pair at a high rate against the analytic rate
  Scenario sc = builtin_scenarios()[0];
  sc.sensor.dist_frac_sigma = sc.sensor.bearing_sigma = sc.sensor.heading_sigma = 0.0;
  sc.sensor.rate_hz = 10000.0;
  Poses start = sc.desired;
  start[1].p += Vec3(0.4, -0.3, 0.2);
  start[1].psi = 0.2;
  sc.initial = start;
  sc.horizon_steps = 2;
  const RunRecord rec = run(sc);
  const double v0 = rec.e_F[0] * rec.e_F[0];
  const double v1 = rec.e_F[1] * rec.e_F[1];
  const double fd = (v1 - v0) * sc.sensor.rate_hz;
  const Eigen::VectorXd e = formation_error_vector(start, sc.desired, sc.graph);
  const double an = lyapunov_rate(start, sc.graph, e, sc.controller.k_e);
  EXPECT_NEAR(fd, an, 0.02 * std::abs(an));
}
