#pragma once

#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "oned.hpp"
#include "simulator.hpp"

namespace rigidflock {

using json = nlohmann::json;

inline constexpr const char* kToolVersion = "0.1.0";

/// Raised for malformed configuration files; the message names the field.
class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---- formatting -------------------------------------------------------------

/// Locale-independent shortest-safe rendering with 17 significant digits.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return {buf, res.ptr};
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void header(const std::vector<std::string>& cols) {
    row_strings(cols);
  }

  CsvWriter& operator<<(double v) {
    sep();
    os_ << format_number(v);
    return *this;
  }
  CsvWriter& operator<<(std::uint64_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& operator<<(const std::string& s) {
    sep();
    os_ << s;
    return *this;
  }
  /// Empty cell.
  CsvWriter& blank() {
    sep();
    return *this;
  }
  void end_row() {
    os_ << '\n';
    first_ = true;
  }

 private:
  void row_strings(const std::vector<std::string>& cells) {
    for (const auto& c : cells) {
      *this << c;
    }
    end_row();
  }
  void sep() {
    if (!first_) {
      os_ << ',';
    }
    first_ = false;
  }
  std::ostream& os_;
  bool first_ = true;
};

// ---- canonical hashing --------------------------------------------------------

/// FNV-1a over the canonical dump; object keys are sorted by the json type,
/// so the hash is independent of the key order in the source file.
inline std::uint64_t config_hash(const json& j) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// ---- field access -------------------------------------------------------------

namespace detail {

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw config_error("missing field '" + path + key + "'");
  }
  return obj.at(key);
}

inline double number(const json& v, const std::string& name) {
  if (!v.is_number()) {
    throw config_error("field '" + name + "' must be a number");
  }
  return v.get<double>();
}

inline double number_or(const json& obj, const std::string& key, double fallback,
                        const std::string& path) {
  return obj.contains(key) ? number(obj.at(key), path + key) : fallback;
}

inline std::uint64_t unsigned_or(const json& obj, const std::string& key, std::uint64_t fallback,
                                 const std::string& path) {
  if (!obj.contains(key)) {
    return fallback;
  }
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw config_error("field '" + path + key + "' must be a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline Vec3 vec3(const json& v, const std::string& name) {
  if (!v.is_array() || v.size() != 3) {
    throw config_error("field '" + name + "' must be an array of 3 numbers");
  }
  return {number(v[0], name + "[0]"), number(v[1], name + "[1]"), number(v[2], name + "[2]")};
}

inline Poses poses(const json& arr, const std::string& name) {
  if (!arr.is_array()) {
    throw config_error("field '" + name + "' must be an array");
  }
  Poses out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string here = name + "[" + std::to_string(i) + "]";
    AgentPose p;
    p.p = vec3(field(arr[i], "p", here + "."), here + ".p");
    p.psi = number_or(arr[i], "psi", 0.0, here + ".");
    if (!std::isfinite(p.psi)) {
      throw config_error("field '" + here + ".psi' must be finite");
    }
    p.psi = wrap_angle(p.psi);
    out.push_back(p);
  }
  return out;
}

inline json poses_json(const Poses& poses) {
  json arr = json::array();
  for (const auto& p : poses) {
    arr.push_back({{"p", {p.p.x(), p.p.y(), p.p.z()}}, {"psi", p.psi}});
  }
  return arr;
}

}  // namespace detail

// ---- scenario -----------------------------------------------------------------

/// Builds a validated scenario from JSON; missing optional fields take defaults.
inline Scenario scenario_from_json(const json& j) {
  if (!j.is_object()) {
    throw config_error("scenario must be a JSON object");
  }
  Scenario sc;
  sc.name = j.value("name", std::string("scenario"));
  sc.desired = detail::poses(detail::field(j, "agents", ""), "agents");
  const std::size_t n = sc.desired.size();

  if (j.contains("edges")) {
    const json& edges = j.at("edges");
    if (!edges.is_array()) {
      throw config_error("field 'edges' must be an array of [i, j] pairs");
    }
    sc.graph = ObservationGraph(n);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const json& e = edges[k];
      const std::string here = "edges[" + std::to_string(k) + "]";
      if (!e.is_array() || e.size() != 2 || !e[0].is_number_unsigned() || !e[1].is_number_unsigned()) {
        throw config_error("field '" + here + "' must be a pair of agent indices");
      }
      try {
        sc.graph.add_edge(e[0].get<std::size_t>(), e[1].get<std::size_t>());
      } catch (const std::invalid_argument& ex) {
        throw config_error("field '" + here + "': " + ex.what());
      }
    }
  } else {
    sc.graph = ObservationGraph::complete(n);
  }

  const json ctrl = j.value("controller", json::object());
  sc.controller.k_e = detail::number_or(ctrl, "k_e", 0.5, "controller.");
  sc.controller.ell = detail::number_or(ctrl, "ell", 0.5, "controller.");
  sc.controller.omega_cap = detail::number_or(ctrl, "omega_cap", kPi, "controller.");
  if (ctrl.contains("restraining")) {
    if (!ctrl.at("restraining").is_boolean()) {
      throw config_error("field 'controller.restraining' must be a boolean");
    }
    sc.controller.restraining = ctrl.at("restraining").get<bool>();
  } else {
    sc.controller.restraining = sc.controller.ell < 0.5;
  }

  const json sens = j.value("sensor", json::object());
  sc.sensor.dist_frac_sigma = detail::number_or(sens, "dist_frac_sigma", 0.10, "sensor.");
  sc.sensor.bearing_sigma = detail::number_or(sens, "bearing_sigma", 0.03, "sensor.");
  sc.sensor.heading_sigma = detail::number_or(sens, "heading_sigma", 0.26, "sensor.");
  sc.sensor.rate_hz = detail::number_or(sens, "rate_hz", 10.0, "sensor.");

  sc.init_radius = detail::number_or(j, "init_radius", 20.0, "");
  sc.horizon_steps = detail::unsigned_or(j, "horizon_steps", 2000, "");
  sc.seed = detail::unsigned_or(j, "seed", 1, "");
  if (j.contains("initial")) {
    sc.initial = detail::poses(j.at("initial"), "initial");
  }
  sc.validate();
  return sc;
}

/// Full scenario with every default spelled out.
inline json scenario_to_json(const Scenario& sc) {
  json edges = json::array();
  for (const auto& [a, b] : sc.graph.edges()) {
    edges.push_back({a, b});
  }
  json j = {
      {"name", sc.name},
      {"agents", detail::poses_json(sc.desired)},
      {"edges", edges},
      {"controller",
       {{"k_e", sc.controller.k_e},
        {"ell", sc.controller.ell},
        {"restraining", sc.controller.restraining},
        {"omega_cap", sc.controller.omega_cap}}},
      {"sensor",
       {{"dist_frac_sigma", sc.sensor.dist_frac_sigma},
        {"bearing_sigma", sc.sensor.bearing_sigma},
        {"heading_sigma", sc.sensor.heading_sigma},
        {"rate_hz", sc.sensor.rate_hz}}},
      {"init_radius", sc.init_radius},
      {"horizon_steps", sc.horizon_steps},
      {"seed", sc.seed},
  };
  if (sc.initial) {
    j["initial"] = detail::poses_json(*sc.initial);
  }
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw config_error("cannot open '" + path + "'");
  }
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw config_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline Scenario parse_scenario(const std::string& path) {
  return scenario_from_json(read_json_file(path));
}

inline bool same_scenario(const Scenario& a, const Scenario& b) {
  return scenario_to_json(a) == scenario_to_json(b);
}

// ---- 1D configuration -----------------------------------------------------------

inline OneDConfig oned_from_json(const json& j) {
  if (!j.is_object()) {
    throw config_error("1D configuration must be a JSON object");
  }
  OneDConfig c;
  c.k_ef = detail::number_or(j, "k_ef", c.k_ef, "");
  c.ell = detail::number_or(j, "ell", c.ell, "");
  c.sigma_m = detail::number_or(j, "sigma_m", c.sigma_m, "");
  c.f = detail::number_or(j, "f", c.f, "");
  c.d = detail::number_or(j, "d", c.d, "");
  c.sigma_init = detail::number_or(j, "sigma_init", c.sigma_init, "");
  c.n_agents = detail::unsigned_or(j, "n_agents", c.n_agents, "");
  c.horizon = detail::unsigned_or(j, "horizon", c.horizon, "");
  c.seed = detail::unsigned_or(j, "seed", c.seed, "");
  c.record_agents = detail::unsigned_or(j, "record_agents", c.record_agents, "");
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw config_error(e.what());
  }
  return c;
}

inline json oned_to_json(const OneDConfig& c) {
  return {{"k_ef", c.k_ef},       {"ell", c.ell},         {"sigma_m", c.sigma_m},
          {"f", c.f},             {"d", c.d},             {"sigma_init", c.sigma_init},
          {"n_agents", c.n_agents}, {"horizon", c.horizon}, {"seed", c.seed},
          {"record_agents", c.record_agents}};
}

// ---- outputs --------------------------------------------------------------------

inline json summary_to_json(const RunSummary& s) {
  return {{"t_cp", s.t_cp},
          {"t_cpsi", s.t_cpsi},
          {"sigma_tp", s.sigma_tp},
          {"sigma_tpsi", s.sigma_tpsi},
          {"mean_dv", s.mean_dv},
          {"mean_domega", s.mean_domega},
          {"a_p", s.a_p},
          {"v_psi", s.v_psi},
          {"final_e_p", s.final_e_p},
          {"final_e_psi", s.final_e_psi},
          {"fiedler", s.fiedler},
          {"converged", s.converged}};
}

/// Per-step run table: errors, then pose and command columns per agent. The
/// command cells of the final row are empty since no command follows it.
inline void write_run_csv(std::ostream& os, const RunRecord& rec, std::size_t n_agents) {
  CsvWriter csv(os);
  std::vector<std::string> cols = {"step", "time_s", "e_F", "e_p", "e_psi", "fiedler"};
  for (std::size_t i = 0; i < n_agents; ++i) {
    const std::string a = "a" + std::to_string(i) + "_";
    for (const char* c : {"x", "y", "z", "psi", "ux", "uy", "uz", "omega"}) {
      cols.push_back(a + c);
    }
  }
  csv.header(cols);
  for (std::size_t k = 0; k < rec.e_F.size(); ++k) {
    csv << static_cast<std::uint64_t>(k) << static_cast<double>(k) / rec.rate_hz << rec.e_F[k]
        << rec.e_p[k] << rec.e_psi[k] << rec.fiedler[k];
    for (std::size_t i = 0; i < n_agents; ++i) {
      if (k < rec.poses.size()) {
        const AgentPose& p = rec.poses[k][i];
        csv << p.p.x() << p.p.y() << p.p.z() << p.psi;
      } else {
        csv.blank().blank().blank().blank();
      }
      if (k < rec.commands.size()) {
        const ControlCommand& c = rec.commands[k][i];
        csv << c.u.x() << c.u.y() << c.u.z() << c.omega;
      } else {
        csv.blank().blank().blank().blank();
      }
    }
    csv.end_row();
  }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  CsvWriter csv(os);
  csv.header({"scenario", "rate_hz", "ell", "seed", "t_cp", "t_cpsi", "sigma_tp", "sigma_tpsi",
              "mean_dv", "mean_domega", "a_p", "v_psi", "final_e_p", "final_e_psi", "fiedler",
              "converged"});
  for (const auto& r : rows) {
    const RunSummary& s = r.summary;
    csv << r.scenario << r.rate_hz << r.ell << r.seed << s.t_cp << s.t_cpsi << s.sigma_tp
        << s.sigma_tpsi << s.mean_dv << s.mean_domega << s.a_p << s.v_psi << s.final_e_p
        << s.final_e_psi << s.fiedler << static_cast<std::uint64_t>(s.converged ? 1 : 0);
    csv.end_row();
  }
}

inline void write_trace_csv(std::ostream& os, const EnsembleTrace& t) {
  CsvWriter csv(os);
  csv.header({"step", "mean_abs_dd", "sigma_a", "mean_abs_dv"});
  for (std::size_t k = 0; k < t.sigma_a.size(); ++k) {
    csv << static_cast<std::uint64_t>(k + 1) << t.mean_abs_dd[k] << t.sigma_a[k]
        << t.mean_abs_dv[k];
    csv.end_row();
  }
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Provenance record written next to the outputs it describes.
inline json make_manifest(const json& config, std::uint64_t seed,
                          const std::vector<std::string>& outputs) {
  return {{"tool_version", kToolVersion},
          {"config_hash", hex64(config_hash(config))},
          {"master_seed", seed},
          {"created_utc", utc_timestamp()},
          {"outputs", outputs}};
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write '" + path + "'");
  }
  out << text;
}

}  // namespace rigidflock
