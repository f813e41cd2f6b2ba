#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "controller.hpp"
#include "geometry.hpp"
#include "graph.hpp"

namespace rigidflock {

using Poses = std::vector<AgentPose>;

inline void require_matching(const Poses& poses, const ObservationGraph& g) {
  if (poses.size() != g.size()) {
    throw std::invalid_argument("pose count does not match graph size");
  }
}

/// Stacked relative poses over the graph's sorted edge list, 4 entries per edge.
inline Eigen::VectorXd stacked_relative_poses(const Poses& poses, const ObservationGraph& g) {
  require_matching(poses, g);
  Eigen::VectorXd kappa(4 * static_cast<Eigen::Index>(g.edges().size()));
  Eigen::Index row = 0;
  for (const auto& [i, j] : g.edges()) {
    const RelativePose r = relative_pose(poses[i], poses[j]);
    kappa.segment<3>(row) = r.p_rel;
    kappa[row + 3] = r.psi_rel;
    row += 4;
  }
  return kappa;
}

/// Desired minus current stacked relative poses, headings wrapped.
inline Eigen::VectorXd formation_error_vector(const Poses& poses, const Poses& desired,
                                              const ObservationGraph& g) {
  require_matching(desired, g);
  Eigen::VectorXd e = stacked_relative_poses(desired, g) - stacked_relative_poses(poses, g);
  for (Eigen::Index row = 3; row < e.size(); row += 4) {
    e[row] = wrap_angle(e[row]);
  }
  return e;
}

struct FormationError {
  double e_F = 0.0;    // norm of the stacked error vector
  double e_p = 0.0;    // agent-averaged mean position residual norm (m)
  double e_psi = 0.0;  // agent-averaged mean absolute heading residual (rad)
};

/// Formation error summary; per-agent means run over out-edges and are then
/// averaged over agents that observe at least one neighbor.
inline FormationError formation_error(const Poses& poses, const Poses& desired,
                                      const ObservationGraph& g) {
  if (g.edges().empty()) {
    throw std::domain_error("formation_error: graph has no edges");
  }
  const Eigen::VectorXd e = formation_error_vector(poses, desired, g);
  std::vector<double> pos(g.size(), 0.0), head(g.size(), 0.0);
  std::vector<int> count(g.size(), 0);
  Eigen::Index row = 0;
  for (const auto& [i, j] : g.edges()) {
    pos[i] += e.segment<3>(row).norm();
    head[i] += std::abs(e[row + 3]);
    ++count[i];
    row += 4;
  }
  FormationError out;
  out.e_F = e.norm();
  int observers = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (count[i] > 0) {
      out.e_p += pos[i] / count[i];
      out.e_psi += head[i] / count[i];
      ++observers;
    }
  }
  out.e_p /= observers;
  out.e_psi /= observers;
  return out;
}

/// Gradient-descent command of every agent written with both outgoing and
/// incoming edge terms, from ground-truth relative poses.
inline std::vector<ControlCommand> fec_raw(const Poses& poses, const Poses& desired,
                                           const ObservationGraph& g, double k_e) {
  require_matching(poses, g);
  require_matching(desired, g);
  const Mat3 s = skew_z();
  std::vector<ControlCommand> out(g.size());
  for (const auto& [i, j] : g.edges()) {
    const RelativePose r = relative_pose(poses[i], poses[j]);
    const RelativePose rd = relative_pose(desired[i], desired[j]);
    const Vec3 dp = r.p_rel - rd.p_rel;
    const double dpsi = wrap_angle(r.psi_rel - rd.psi_rel);
    // Observer side.
    out[i].u += dp;
    out[i].omega += -r.p_rel.dot(s * dp) + dpsi;
    // Observed side: the edge (i, j) seen from agent j as an incoming edge.
    out[j].u -= rotz(r.psi_rel).transpose() * dp;
    out[j].omega -= dpsi;
  }
  for (auto& c : out) {
    c.u *= k_e;
    c.omega *= k_e;
  }
  return out;
}

}  // namespace rigidflock
