#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <rigidflock/rigidflock.hpp>

namespace rf = rigidflock;
using rf::json;

namespace {

struct ScenarioSource {
  std::string path;
  int builtin = 0;

  rf::Scenario load() const {
    if (!path.empty() && builtin != 0) {
      throw rf::config_error("give either --scenario or --builtin, not both");
    }
    if (!path.empty()) {
      return rf::parse_scenario(path);
    }
    const auto all = rf::builtin_scenarios();
    if (builtin < 1 || builtin > static_cast<int>(all.size())) {
      throw rf::config_error("--builtin must lie in 1.." + std::to_string(all.size()));
    }
    return all[static_cast<std::size_t>(builtin - 1)];
  }
};

void add_source(CLI::App* cmd, ScenarioSource& src) {
  cmd->add_option("--scenario", src.path, "scenario JSON file");
  cmd->add_option("--builtin", src.builtin, "builtin scenario 1..4 (pair, triangle, six_full, six_sparse)");
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw rf::config_error("not a number: '" + s + "'");
  }
  return v;
}

/// "a:b:step" expands to an inclusive range, anything else is a comma list.
std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  std::vector<double> out;
  if (text.find(':') != std::string::npos) {
    while (std::getline(ss, item, ':')) parts.push_back(item);
    if (parts.size() != 3) {
      throw rf::config_error("range must look like start:stop:step, got '" + text + "'");
    }
    const double a = parse_double(parts[0]);
    const double b = parse_double(parts[1]);
    const double h = parse_double(parts[2]);
    if (!(h > 0.0) || b < a) {
      throw rf::config_error("empty or malformed range '" + text + "'");
    }
    const auto n = static_cast<std::size_t>(std::floor((b - a) / h + 1e-9));
    for (std::size_t i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * h);
    return out;
  }
  while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
  if (out.empty()) throw rf::config_error("empty list");
  return out;
}

void write_outputs(const std::string& out, const std::string& text, const json& config,
                   std::uint64_t seed, std::vector<std::string> extra = {}) {
  rf::write_text_file(out, text);
  extra.insert(extra.begin(), out);
  rf::write_text_file(out + ".manifest.json", rf::make_manifest(config, seed, extra).dump(2) + "\n");
}

int cmd_sim1d(const std::string& config_path, const std::string& out, const std::string& metrics_path,
              std::int64_t seed) {
  rf::OneDConfig cfg = rf::oned_from_json(rf::read_json_file(config_path));
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (cfg.record_agents == 0) cfg.record_agents = 1;
  const rf::EnsembleTrace trace = rf::run_1d_ensemble(cfg);

  json metrics;
  double t_c = 0.0, sigma_t = 0.0, mean_dv = 0.0;
  for (const auto& h : trace.histories) {
    const auto cm = rf::convergence_metrics_1d(h, cfg.d, cfg.f);
    t_c += cm.t_c;
    sigma_t += cm.sigma_t;
    mean_dv += cm.mean_dv;
  }
  const double nh = static_cast<double>(trace.histories.size());
  metrics["t_c"] = t_c / nh;
  metrics["sigma_t"] = sigma_t / nh;
  metrics["mean_dv"] = mean_dv / nh;
  metrics["final_sigma_a"] = trace.sigma_a.back();
  metrics["sigma_ss_pred"] = rf::sigma_ss_proportional(cfg.k_ef, cfg.sigma_m);
  if (cfg.ell < 0.5 && cfg.k_ef >= 0.1 && cfg.k_ef <= 1.9) {
    metrics["sigma_ss_res_pred"] = rf::sigma_ss_restrained(cfg.k_ef, cfg.sigma_m, cfg.ell);
  } else if (cfg.ell == 0.5) {
    metrics["sigma_ss_res_pred"] = metrics["sigma_ss_pred"];
  } else {
    metrics["sigma_ss_res_pred"] = nullptr;
  }
  metrics["seed"] = cfg.seed;

  std::ostringstream csv;
  rf::write_trace_csv(csv, trace);
  const json config = rf::oned_to_json(cfg);
  std::vector<std::string> extra;
  if (!metrics_path.empty()) {
    rf::write_text_file(metrics_path, metrics.dump(2) + "\n");
    extra.push_back(metrics_path);
  }
  if (!out.empty()) {
    write_outputs(out, csv.str(), config, cfg.seed, extra);
  }
  std::cout << metrics.dump(2) << "\n";
  return 0;
}

int cmd_sim4d(const ScenarioSource& src, const std::string& out, const std::string& summary_path,
              std::int64_t seed, double rate, double ell) {
  rf::Scenario sc = src.load();
  if (seed >= 0) sc.seed = static_cast<std::uint64_t>(seed);
  if (rate > 0.0) sc.sensor.rate_hz = rate;
  if (ell > 0.0) {
    sc.controller.ell = ell;
    sc.controller.restraining = ell < 0.5;
  }
  sc.validate();
  const rf::RunRecord rec = rf::run(sc, !out.empty());
  const json summary = rf::summary_to_json(rec.summary);
  const json config = rf::scenario_to_json(sc);
  std::vector<std::string> extra;
  if (!summary_path.empty()) {
    rf::write_text_file(summary_path, summary.dump(2) + "\n");
    extra.push_back(summary_path);
  }
  if (!out.empty()) {
    std::ostringstream csv;
    rf::write_run_csv(csv, rec, sc.desired.size());
    write_outputs(out, csv.str(), config, sc.seed, extra);
  }
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const ScenarioSource& src, const std::string& rates_text, const std::string& ells_text,
              std::uint64_t n_seeds, std::uint64_t first_seed, const std::string& out) {
  const rf::Scenario base = src.load();
  const std::vector<double> rates = parse_grid(rates_text);
  const std::vector<double> ells = parse_grid(ells_text);
  if (n_seeds == 0) throw rf::config_error("--seeds must be positive");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < n_seeds; ++s) seeds.push_back(first_seed + s);
  for (double f : rates) {
    if (!(f > 0.0)) throw rf::config_error("rates must be positive");
  }
  for (double l : ells) {
    if (!(l > 0.0 && l <= 0.5)) throw rf::config_error("ells must lie in (0, 0.5]");
  }

  const auto rows = rf::sweep(base, rates, ells, seeds);
  std::ostringstream csv;
  rf::write_sweep_csv(csv, rows);
  json config = rf::scenario_to_json(base);
  config["sweep"] = {{"rates", rates}, {"ells", ells}, {"seeds", seeds}};
  if (out.empty()) {
    std::cout << csv.str();
  } else {
    write_outputs(out, csv.str(), config, first_seed);
    std::cout << json{{"rows", rows.size()}, {"out", out}}.dump() << "\n";
  }
  return 0;
}

int cmd_audit(const ScenarioSource& src, std::uint64_t samples) {
  const rf::Scenario sc = src.load();
  const std::size_t n = sc.desired.size();
  const Eigen::MatrixXd m = rf::m_matrix(sc.desired, sc.graph);
  const rf::MinorReport minors = rf::leading_minors(m);
  const rf::SymmetricEigen eig = rf::symmetric_eigen(m);

  double max_residual = 0.0;
  double max_block_residual = 0.0;
  std::size_t pd_count = 0;
  for (std::uint64_t s = 0; s < samples; ++s) {
    const rf::Poses poses = rf::random_initial_poses(n, sc.init_radius, sc.seed + s);
    const auto stacked = rf::stacked_action(poses, sc.desired, sc.graph, sc.controller.k_e);
    const auto raw = rf::fec_raw(poses, sc.desired, sc.graph, sc.controller.k_e);
    for (std::size_t i = 0; i < n; ++i) {
      max_residual = std::max(max_residual, (stacked[i].u - raw[i].u).cwiseAbs().maxCoeff());
      max_residual = std::max(max_residual, std::abs(stacked[i].omega - raw[i].omega));
    }
    const Eigen::MatrixXd ms = rf::m_matrix(poses, sc.graph);
    max_block_residual = std::max(
        max_block_residual, (ms - rf::m_matrix_blocks(poses, sc.graph)).cwiseAbs().maxCoeff());
    if (rf::leading_minors(ms).positive_definite) ++pd_count;
  }

  const json report = {
      {"scenario", sc.name},
      {"agents", n},
      {"edges", sc.graph.edges().size()},
      {"fiedler", n >= 2 ? rf::fiedler_value(sc.graph) : 0.0},
      {"minors", minors.minors},
      {"positive_definite", minors.positive_definite},
      {"min_eigenvalue", eig.values.minCoeff()},
      {"samples", samples},
      {"positive_definite_samples", pd_count},
      {"gradient_residual_max", max_residual},
      {"block_assembly_residual_max", max_block_residual}};
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_analyze(double k_ef, double ell, double sigma_m) {
  rf::require_stable_gain(k_ef);
  if (!(ell > 0.0 && ell <= 0.5)) throw rf::config_error("--ell must lie in (0, 0.5]");
  if (!(sigma_m > 0.0)) throw rf::config_error("--sigma-m must be positive");
  const double ss = rf::sigma_ss_proportional(k_ef, sigma_m);
  json r = {{"k_ef", k_ef},
            {"ell", ell},
            {"sigma_m", sigma_m},
            {"sigma_ss", ss},
            {"stopping_probability_at_target", rf::stopping_probability(0.0, sigma_m, ell)},
            {"effective_gain", rf::effective_gain(k_ef, ell, sigma_m)},
            {"conditional_variance_at_target", rf::conditional_variance_at_target(k_ef, ell, sigma_m)}};
  if (k_ef >= 0.1 && k_ef <= 1.9) {
    const double res = rf::sigma_ss_restrained(k_ef, sigma_m, ell);
    r["beta"] = rf::beta_coefficient(k_ef);
    r["sigma_ss_restrained"] = res;
    r["ratio"] = res / ss;
    if (ell < 0.5) r["coherence_time"] = rf::expected_coherence_time(k_ef, ell, sigma_m);
  }
  std::cout << r.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rigidflock: noise-aware formation control simulator"};
  app.set_version_flag("--version", std::string(rf::kToolVersion));
  app.require_subcommand(1);

  std::string config_path, out, metrics_path, summary_path;
  std::int64_t seed = -1;
  auto* sim1d = app.add_subcommand("sim1d", "1D ensemble simulation");
  sim1d->add_option("--config", config_path, "OneDConfig JSON file")->required();
  sim1d->add_option("--out", out, "trace CSV");
  sim1d->add_option("--metrics", metrics_path, "metrics JSON");
  sim1d->add_option("--seed", seed, "override the master seed");

  ScenarioSource src;
  double rate = 0.0, ell_override = 0.0;
  auto* sim4d = app.add_subcommand("sim4d", "single formation run");
  add_source(sim4d, src);
  sim4d->add_option("--out", out, "run CSV");
  sim4d->add_option("--summary", summary_path, "summary JSON");
  sim4d->add_option("--seed", seed, "override the scenario seed");
  sim4d->add_option("--rate", rate, "override the measurement rate (Hz)");
  sim4d->add_option("--ell", ell_override, "override ell; below 0.5 enables restraining");

  std::string rates_text = "10:200:10", ells_text = "0.05,0.2,0.35,0.5";
  std::uint64_t n_seeds = 1, first_seed = 1;
  auto* sweep = app.add_subcommand("sweep", "grid over rates, ell and seeds");
  add_source(sweep, src);
  sweep->add_option("--rates", rates_text, "start:stop:step or comma list");
  sweep->add_option("--ells", ells_text, "comma list or range");
  sweep->add_option("--seeds", n_seeds, "number of seeds");
  sweep->add_option("--first-seed", first_seed, "first seed");
  sweep->add_option("--out", out, "table CSV (stdout if omitted)");

  std::uint64_t samples = 100;
  auto* audit = app.add_subcommand("audit", "rigidity and Lyapunov audit");
  add_source(audit, src);
  audit->add_option("--samples", samples, "random pose samples");

  double k_ef = 0.5, ell = 0.5, sigma_m = 3.0;
  auto* analyze = app.add_subcommand("analyze", "closed-form 1D predictions");
  analyze->add_option("--k-ef", k_ef, "per-step gain");
  analyze->add_option("--ell", ell, "overshoot probability");
  analyze->add_option("--sigma-m", sigma_m, "measurement standard deviation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", "usage"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }

  try {
    if (*sim1d) return cmd_sim1d(config_path, out, metrics_path, seed);
    if (*sim4d) return cmd_sim4d(src, out, summary_path, seed, rate, ell_override);
    if (*sweep) return cmd_sweep(src, rates_text, ells_text, n_seeds, first_seed, out);
    if (*audit) return cmd_audit(src, samples);
    if (*analyze) return cmd_analyze(k_ef, ell, sigma_m);
  } catch (const rf::scenario_error& e) {
    std::cerr << json{{"error", "scenario"}, {"violations", e.violations()}}.dump() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << json{{"error", "config"}, {"message", e.what()}}.dump() << "\n";
    return 3;
  } catch (const rf::numerical_error& e) {
    std::cerr << json{{"error", "numerical"}, {"message", e.what()}}.dump() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "runtime"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
