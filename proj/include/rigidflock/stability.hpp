#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "controller.hpp"
#include "formation.hpp"
#include "geometry.hpp"
#include "graph.hpp"
#include "linalg.hpp"

namespace rigidflock {

using RigidityMatrix = Eigen::MatrixXd;

/// Jacobian of the stacked relative poses with respect to world poses
/// (p_0, psi_0, p_1, psi_1, ...), one 4-row band per sorted edge.
inline RigidityMatrix rigidity_world(const Poses& poses, const ObservationGraph& g) {
  require_matching(poses, g);
  const auto e = static_cast<Eigen::Index>(g.edges().size());
  const auto n = static_cast<Eigen::Index>(g.size());
  RigidityMatrix h = RigidityMatrix::Zero(4 * e, 4 * n);
  Eigen::Index row = 0;
  for (const auto& [i, j] : g.edges()) {
    const Mat3 rt = rotz(poses[i].psi).transpose();
    const auto ci = 4 * static_cast<Eigen::Index>(i);
    const auto cj = 4 * static_cast<Eigen::Index>(j);
    h.block<3, 3>(row, ci) = -rt;
    h.block<3, 1>(row, ci + 3) = rotz_derivative(poses[i].psi).transpose() * (poses[j].p - poses[i].p);
    h.block<3, 3>(row, cj) = rt;
    h(row + 3, ci + 3) = -1.0;
    h(row + 3, cj + 3) = 1.0;
    row += 4;
  }
  return h;
}

/// Rigidity matrix with every agent's columns expressed in its own body frame,
/// built from relative poses only (stacked as in stacked_relative_poses).
inline RigidityMatrix rigidity_local(const Eigen::VectorXd& kappa, const ObservationGraph& g) {
  const auto e = static_cast<Eigen::Index>(g.edges().size());
  if (kappa.size() != 4 * e) {
    throw std::invalid_argument("rigidity_local: relative pose vector size mismatch");
  }
  const auto n = static_cast<Eigen::Index>(g.size());
  RigidityMatrix h = RigidityMatrix::Zero(4 * e, 4 * n);
  const Mat3 st = skew_z().transpose();
  Eigen::Index row = 0;
  for (const auto& [i, j] : g.edges()) {
    const auto ci = 4 * static_cast<Eigen::Index>(i);
    const auto cj = 4 * static_cast<Eigen::Index>(j);
    h.block<3, 3>(row, ci) = -Mat3::Identity();
    h.block<3, 1>(row, ci + 3) = st * kappa.segment<3>(row);
    h.block<3, 3>(row, cj) = rotz(kappa[row + 3]);
    h(row + 3, ci + 3) = -1.0;
    h(row + 3, cj + 3) = 1.0;
    row += 4;
  }
  return h;
}

/// k_e H_l^T e_F unpacked into per-agent body-frame commands.
inline std::vector<ControlCommand> stacked_action(const Poses& poses, const Poses& desired,
                                                  const ObservationGraph& g, double k_e) {
  const Eigen::VectorXd kappa = stacked_relative_poses(poses, g);
  const Eigen::VectorXd e = formation_error_vector(poses, desired, g);
  const Eigen::VectorXd qdot = k_e * rigidity_local(kappa, g).transpose() * e;
  std::vector<ControlCommand> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto c = 4 * static_cast<Eigen::Index>(i);
    out[i].u = qdot.segment<3>(c);
    out[i].omega = qdot[c + 3];
  }
  return out;
}

inline Eigen::MatrixXd m_matrix(const Poses& poses, const ObservationGraph& g) {
  const RigidityMatrix h = rigidity_world(poses, g);
  return h * h.transpose();
}

/// Closed-form M for two agents and a single edge with relative world offset p.
inline Eigen::Matrix4d two_agent_m(const Vec3& p) {
  const Vec3 s = skew_z().transpose() * p;
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  m.topLeftCorner<3, 3>() = 2.0 * Mat3::Identity() + s * s.transpose();
  m.block<3, 1>(0, 3) = -s;
  m.block<1, 3>(3, 0) = -s.transpose();
  m(3, 3) = 2.0;
  return m;
}

/// Leading minors of the two-agent M as polynomials in p.
inline std::vector<double> two_agent_minors(const Vec3& p) {
  const double x2 = p.x() * p.x();
  const double y2 = p.y() * p.y();
  const double m2 = 4.0 + 2.0 * x2 + 2.0 * y2;
  return {2.0 + y2, m2, 2.0 * m2, 16.0 + 4.0 * x2 + 4.0 * y2};
}

enum class EdgeRelation { kSame, kOpposite, kOutOut, kInIn, kInOut, kOutIn, kDisjoint };

/// Relation of edge a to edge b through their shared vertex. kInOut: a enters
/// the vertex that b leaves; kOutIn: a leaves the vertex that b enters.
inline EdgeRelation classify_edges(const Edge& a, const Edge& b) {
  if (a == b) return EdgeRelation::kSame;
  if (a.first == b.second && a.second == b.first) return EdgeRelation::kOpposite;
  if (a.first == b.first) return EdgeRelation::kOutOut;
  if (a.second == b.second) return EdgeRelation::kInIn;
  if (a.second == b.first) return EdgeRelation::kInOut;
  if (a.first == b.second) return EdgeRelation::kOutIn;
  return EdgeRelation::kDisjoint;
}

/// Block E_a E_b^T of M for edges a and b, from the shared-vertex case formulas.
inline Eigen::Matrix4d e_ab_block(const Edge& a, const Edge& b, const Poses& poses) {
  const auto lever = [&](const Edge& e) -> Vec3 {
    return rotz(poses[e.first].psi).transpose() * skew_z().transpose() *
           (poses[e.second].p - poses[e.first].p);
  };
  const auto rt = [&](std::size_t v) -> Mat3 { return rotz(poses[v].psi).transpose(); };
  Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
  switch (classify_edges(a, b)) {
    case EdgeRelation::kSame: {
      const Vec3 s = lever(a);
      m.topLeftCorner<3, 3>() = 2.0 * Mat3::Identity() + s * s.transpose();
      m.block<3, 1>(0, 3) = -s;
      m.block<1, 3>(3, 0) = -s.transpose();
      m(3, 3) = 2.0;
      break;
    }
    case EdgeRelation::kOutOut: {
      const Vec3 sa = lever(a);
      const Vec3 sb = lever(b);
      m.topLeftCorner<3, 3>() = Mat3::Identity() + sa * sb.transpose();
      m.block<3, 1>(0, 3) = -sa;
      m.block<1, 3>(3, 0) = -sb.transpose();
      m(3, 3) = 1.0;
      break;
    }
    case EdgeRelation::kInIn:
      m.topLeftCorner<3, 3>() = rt(a.first) * rt(b.first).transpose();
      m(3, 3) = 1.0;
      break;
    case EdgeRelation::kInOut:
      m.topLeftCorner<3, 3>() = -rt(a.first) * rt(b.first).transpose();
      m.block<1, 3>(3, 0) = lever(b).transpose();
      m(3, 3) = -1.0;
      break;
    case EdgeRelation::kOutIn:
      m.topLeftCorner<3, 3>() = -rt(a.first) * rt(b.first).transpose();
      m.block<3, 1>(0, 3) = lever(a);
      m(3, 3) = -1.0;
      break;
    case EdgeRelation::kOpposite:
      m.topLeftCorner<3, 3>() = -2.0 * rt(a.first) * rt(b.first).transpose();
      m.block<3, 1>(0, 3) = lever(a);
      m.block<1, 3>(3, 0) = lever(b).transpose();
      m(3, 3) = -2.0;
      break;
    case EdgeRelation::kDisjoint:
      break;
  }
  return m;
}

/// M assembled block by block from e_ab_block.
inline Eigen::MatrixXd m_matrix_blocks(const Poses& poses, const ObservationGraph& g) {
  require_matching(poses, g);
  const auto& edges = g.edges();
  const auto e = static_cast<Eigen::Index>(edges.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(4 * e, 4 * e);
  for (Eigen::Index a = 0; a < e; ++a) {
    for (Eigen::Index b = 0; b < e; ++b) {
      m.block<4, 4>(4 * a, 4 * b) =
          e_ab_block(edges[static_cast<std::size_t>(a)], edges[static_cast<std::size_t>(b)], poses);
    }
  }
  return m;
}

/// Time derivative of V = e_F^T e_F under the gradient action.
inline double lyapunov_rate(const Poses& poses, const ObservationGraph& g,
                            const Eigen::VectorXd& e_f, double k_e) {
  const Eigen::MatrixXd m = m_matrix(poses, g);
  if (e_f.size() != m.rows()) {
    throw std::invalid_argument("lyapunov_rate: error vector size mismatch");
  }
  return -2.0 * k_e * e_f.dot(m * e_f);
}

}  // namespace rigidflock
