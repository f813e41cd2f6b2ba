#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "controller.hpp"
#include "formation.hpp"
#include "geometry.hpp"
#include "graph.hpp"
#include "oned.hpp"
#include "parallel.hpp"
#include "sensor.hpp"

namespace rigidflock {

/// Raised when a scenario violates one or more invariants; what() lists them all.
class scenario_error : public std::invalid_argument {
 public:
  explicit scenario_error(const std::vector<std::string>& violations)
      : std::invalid_argument(join(violations)), violations_(violations) {}
  const std::vector<std::string>& violations() const { return violations_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out = "invalid scenario:";
    for (const auto& s : v) {
      out += " " + s + ";";
    }
    return out;
  }
  std::vector<std::string> violations_;
};

struct Scenario {
  std::string name;
  Poses desired;
  ObservationGraph graph;
  ControllerConfig controller;
  SensorSpec sensor;
  double init_radius = 20.0;
  std::size_t horizon_steps = 2000;
  std::uint64_t seed = 1;
  std::optional<Poses> initial;  // explicit start poses; random when absent

  std::vector<std::string> violations() const {
    std::vector<std::string> v;
    if (desired.empty()) v.push_back("at least one agent is required");
    if (graph.size() != desired.size()) v.push_back("graph size must equal agent count");
    if (count_passive_sinks(graph) > 1) v.push_back("at most one passive sink is allowed");
    if (!is_connected(graph)) v.push_back("observation graph must be connected");
    if (initial && initial->size() != desired.size()) {
      v.push_back("initial pose count must equal agent count");
    }
    if (!(init_radius >= 0.0)) v.push_back("init_radius must be nonnegative");
    try {
      controller.validate();
    } catch (const std::exception& e) {
      v.emplace_back(e.what());
    }
    try {
      sensor.validate();
    } catch (const std::exception& e) {
      v.emplace_back(e.what());
    }
    for (const auto& p : desired) {
      if (!p.p.allFinite() || !std::isfinite(p.psi)) {
        v.push_back("desired poses must be finite");
        break;
      }
    }
    return v;
  }

  void validate() const {
    const auto v = violations();
    if (!v.empty()) {
      throw scenario_error(v);
    }
  }

  /// Smallest pairwise distance in the desired formation.
  double min_desired_distance() const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < desired.size(); ++i) {
      for (std::size_t j = i + 1; j < desired.size(); ++j) {
        best = std::min(best, (desired[i].p - desired[j].p).norm());
      }
    }
    return best;
  }
};

struct RunSummary {
  double t_cp = 0.0;
  double t_cpsi = 0.0;
  double sigma_tp = 0.0;
  double sigma_tpsi = 0.0;
  double mean_dv = 0.0;      // mean |world velocity change| between command segments (m/s)
  double mean_domega = 0.0;  // mean |heading rate change| (rad/s)
  double a_p = 0.0;          // mean_dv * f (m/s^2)
  double v_psi = 0.0;        // mean |omega| (rad/s)
  double final_e_p = 0.0;    // RMS of e_p over the last quarter of the run
  double final_e_psi = 0.0;
  double fiedler = 0.0;
  bool converged = false;
};

struct RunRecord {
  double rate_hz = 0.0;
  std::vector<Poses> poses;                          // size horizon + 1 when recorded
  std::vector<std::vector<ControlCommand>> commands;  // size horizon when recorded
  std::vector<double> e_F, e_p, e_psi, fiedler;      // size horizon + 1
  RunSummary summary;
};

/// Final-quarter RMS of e_p below this fraction of the closest desired
/// distance marks a run as converged.
inline constexpr double kConvergedFraction = 0.5;

/// Random start: uniform in a ball of the given radius, uniform headings.
inline Poses random_initial_poses(std::size_t n, double radius, std::uint64_t seed) {
  auto rng = make_stream(seed, 0, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Poses out(n);
  for (auto& p : out) {
    Vec3 dir(normal(rng), normal(rng), normal(rng));
    while (dir.norm() == 0.0) {
      dir = Vec3(normal(rng), normal(rng), normal(rng));
    }
    p.p = dir.normalized() * (radius * std::cbrt(unit(rng)));
    p.psi = wrap_angle(kPi - 2.0 * kPi * unit(rng));
  }
  return out;
}

/// Noise stream of one agent; independent of the controller settings so that
/// runs differing only in ell or gains share their noise.
inline std::mt19937_64 agent_stream(std::uint64_t seed, std::size_t agent) {
  return make_stream(seed, agent + 1, 0);
}

/// Commands of all agents for one synchronous measurement round.
template <class Rng>
std::vector<ControlCommand> compute_commands(const Poses& state, const Scenario& sc,
                                             std::vector<Rng>& streams) {
  const std::size_t n = state.size();
  std::vector<ControlCommand> cmds(n);
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < n; ++i) {
    obs.clear();
    for (const std::size_t j : sc.graph.out_neighbors(i)) {
      Observation o;
      o.meas = sample_measurement(streams[i], relative_pose(state[i], state[j]), sc.sensor);
      const RelativePose rd = relative_pose(sc.desired[i], sc.desired[j]);
      o.des.p_d = rd.p_rel;
      o.des.psi_d = rd.psi_rel;
      obs.push_back(o);
    }
    if (!obs.empty()) {
      cmds[i] = compute_command(obs, sc.controller, sc.sensor.rate_hz);
    }
  }
  return cmds;
}

/// Constant body-frame velocity and turn rate for one period.
inline Poses integrate(const Poses& state, const std::vector<ControlCommand>& cmds, double rate_hz) {
  Poses next = state;
  for (std::size_t i = 0; i < state.size(); ++i) {
    next[i].p += rotz(state[i].psi) * cmds[i].u / rate_hz;
    next[i].psi = wrap_angle(state[i].psi + cmds[i].omega / rate_hz);
  }
  return next;
}

/// One synchronous step: every agent measures, decides and moves.
template <class Rng>
Poses step(const Poses& state, const Scenario& sc, std::vector<Rng>& streams) {
  return integrate(state, compute_commands(state, sc, streams), sc.sensor.rate_hz);
}

/// Norms of the stacked position and heading residuals over all edges.
inline std::pair<double, double> residual_norms(const Poses& poses, const Scenario& sc) {
  const Eigen::VectorXd e = formation_error_vector(poses, sc.desired, sc.graph);
  double pos = 0.0;
  double head = 0.0;
  for (Eigen::Index row = 0; row < e.size(); row += 4) {
    pos += e.segment<3>(row).squaredNorm();
    head += e[row + 3] * e[row + 3];
  }
  return {std::sqrt(pos), std::sqrt(head)};
}

inline RunRecord run(const Scenario& sc, bool record_states = true) {
  sc.validate();
  const std::size_t n = sc.desired.size();
  const std::size_t m = sc.horizon_steps;
  const double f = sc.sensor.rate_hz;
  RunRecord rec;
  rec.rate_hz = f;
  if (m == 0) {
    return rec;
  }

  Poses state = sc.initial ? *sc.initial : random_initial_poses(n, sc.init_radius, sc.seed);
  std::vector<std::mt19937_64> streams;
  streams.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    streams.push_back(agent_stream(sc.seed, i));
  }
  const double fiedler = n >= 2 ? fiedler_value(sc.graph) : 0.0;

  std::vector<double> pos_series, head_series;
  pos_series.reserve(m + 1);
  head_series.reserve(m + 1);
  auto observe = [&](const Poses& s) {
    const FormationError fe = formation_error(s, sc.desired, sc.graph);
    rec.e_F.push_back(fe.e_F);
    rec.e_p.push_back(fe.e_p);
    rec.e_psi.push_back(fe.e_psi);
    rec.fiedler.push_back(fiedler);
    const auto [pn, hn] = residual_norms(s, sc);
    pos_series.push_back(pn);
    head_series.push_back(hn);
    if (record_states) {
      rec.poses.push_back(s);
    }
  };
  observe(state);

  std::vector<ControlCommand> prev(n);
  Poses prev_state = state;
  double dv = 0.0, dw = 0.0, w = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const std::vector<ControlCommand> cmds = compute_commands(state, sc, streams);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 v = rotz(state[i].psi) * cmds[i].u;
      w += std::abs(cmds[i].omega);
      if (k > 0) {
        dv += (v - rotz(prev_state[i].psi) * prev[i].u).norm();
        dw += std::abs(cmds[i].omega - prev[i].omega);
      }
    }
    if (record_states) {
      rec.commands.push_back(cmds);
    }
    prev = cmds;
    prev_state = state;
    state = integrate(state, cmds, f);
    observe(state);
  }

  RunSummary& s = rec.summary;
  const double agent_steps = static_cast<double>(n) * static_cast<double>(m);
  const double change_steps = static_cast<double>(n) * static_cast<double>(m > 1 ? m - 1 : 1);
  s.mean_dv = dv / change_steps;
  s.mean_domega = dw / change_steps;
  s.a_p = s.mean_dv * f;
  s.v_psi = w / agent_steps;
  s.fiedler = fiedler;
  if (pos_series.size() >= 10) {
    const ConvergenceMetrics cp = convergence_metrics_1d(pos_series, 0.0, f);
    const ConvergenceMetrics ch = convergence_metrics_1d(head_series, 0.0, f);
    s.t_cp = cp.t_c;
    s.sigma_tp = cp.sigma_t;
    s.t_cpsi = ch.t_c;
    s.sigma_tpsi = ch.sigma_t;
  }
  const std::size_t tail = std::max<std::size_t>(1, (m + 1) / 4);
  double ep2 = 0.0, eh2 = 0.0;
  for (std::size_t k = rec.e_p.size() - tail; k < rec.e_p.size(); ++k) {
    ep2 += rec.e_p[k] * rec.e_p[k];
    eh2 += rec.e_psi[k] * rec.e_psi[k];
  }
  s.final_e_p = std::sqrt(ep2 / static_cast<double>(tail));
  s.final_e_psi = std::sqrt(eh2 / static_cast<double>(tail));
  s.converged = std::isfinite(s.final_e_p) &&
                s.final_e_p < kConvergedFraction * sc.min_desired_distance();
  return rec;
}

struct SweepRow {
  std::string scenario;
  double rate_hz = 0.0;
  double ell = 0.0;
  std::uint64_t seed = 0;
  RunSummary summary;
};

/// Runs every (rate, ell, seed) cell; rows come out in grid order regardless
/// of the worker count.
inline std::vector<SweepRow> sweep(const Scenario& base, const std::vector<double>& rates,
                                   const std::vector<double>& ells,
                                   const std::vector<std::uint64_t>& seeds) {
  std::vector<SweepRow> rows;
  for (double f : rates) {
    for (double ell : ells) {
      for (std::uint64_t seed : seeds) {
        SweepRow r;
        r.scenario = base.name;
        r.rate_hz = f;
        r.ell = ell;
        r.seed = seed;
        rows.push_back(r);
      }
    }
  }
  parallel_for(rows.size(), [&](std::size_t idx) {
    Scenario sc = base;
    sc.sensor.rate_hz = rows[idx].rate_hz;
    sc.controller.ell = rows[idx].ell;
    sc.controller.restraining = rows[idx].ell < 0.5;
    sc.seed = rows[idx].seed;
    rows[idx].summary = run(sc, false).summary;
  });
  return rows;
}

// ---- builtin scenarios ------------------------------------------------------

inline Scenario make_scenario(std::string name, Poses desired, ObservationGraph graph) {
  Scenario sc;
  sc.name = std::move(name);
  sc.desired = std::move(desired);
  sc.graph = std::move(graph);
  return sc;
}

inline Poses flat_triangle_layout() {
  // Vertices of a side-10 triangle plus edge midpoints; neighbors sit 5 m apart.
  const double h = 10.0 * std::sqrt(3.0) / 2.0;
  const Vec3 a(0.0, 0.0, 0.0), b(10.0, 0.0, 0.0), c(5.0, h, 0.0);
  Poses p(6);
  p[0].p = a;
  p[1].p = b;
  p[2].p = c;
  p[3].p = 0.5 * (a + b);
  p[4].p = 0.5 * (b + c);
  p[5].p = 0.5 * (c + a);
  return p;
}

/// Seed used to thin the six-agent graph for the fourth builtin scenario.
inline constexpr std::uint64_t kThinningSeed = 4;

/// The four reference scenarios: two agents, a triangle, six agents with a
/// full graph, and six agents with half of the observation pairs removed.
inline std::vector<Scenario> builtin_scenarios() {
  std::vector<Scenario> out;
  {
    Poses p(2);
    p[1].p = Vec3(5.0, 0.0, 0.0);
    out.push_back(make_scenario("pair", p, ObservationGraph::complete(2)));
  }
  {
    Poses p(3);
    p[1].p = Vec3(5.0, 0.0, 0.0);
    p[2].p = Vec3(2.5, 5.0 * std::sqrt(3.0) / 2.0, 0.0);
    out.push_back(make_scenario("triangle", p, ObservationGraph::complete(3)));
  }
  out.push_back(make_scenario("six_full", flat_triangle_layout(), ObservationGraph::complete(6)));
  {
    auto rng = make_stream(kThinningSeed, 0, 2);
    ObservationGraph g = remove_random_edges_keep_connected(ObservationGraph::complete(6), 0.5, rng);
    out.push_back(make_scenario("six_sparse", flat_triangle_layout(), g));
  }
  return out;
}

}  // namespace rigidflock
