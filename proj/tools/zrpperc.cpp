// zrpperc command-line driver.
//
// Exit codes: 0 success, 2 invalid input or configuration, 3 solver failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "zrpperc/zrpperc.hpp"

using namespace zrpperc;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 2;
constexpr int kSolver = 3;

std::vector<int> parse_int_list(const std::string& s, const std::string& what) {
  std::vector<int> out;
  for (const auto& t : detail::split_list(s, ',')) out.push_back(static_cast<int>(detail::parse_int(what, t)));
  if (out.empty()) throw ValidationError(what + " is empty");
  return out;
}

std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& t : detail::split_list(s, ',')) out.push_back(detail::parse_double(what, t));
  return out;
}

/// "1,2,5" or "1-10" (inclusive) or a mix.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& t : detail::split_list(s, ',')) {
    const auto dash = t.find('-');
    if (dash == std::string::npos) {
      out.push_back(detail::parse_u64("--seeds", t));
      continue;
    }
    const auto a = detail::parse_u64("--seeds", t.substr(0, dash)), b = detail::parse_u64("--seeds", t.substr(dash + 1));
    if (b < a) throw ValidationError("--seeds: empty range " + t);
    for (auto v = a; v <= b; ++v) out.push_back(v);
  }
  if (out.empty()) throw ValidationError("--seeds is empty");
  return out;
}

std::vector<int> parse_dims(const std::string& s) {
  auto d = parse_int_list(s, "--dims");
  if (d.size() == 1) d.push_back(d[0]);
  return d;
}

void print_written(const std::vector<fs::path>& files) {
  for (const auto& f : files) std::cout << f.string() << '\n';
}

struct LawOptions {
  std::string law = "bernoulli";
  double p = 0.7;
  double c = 1.0;
  double c_low = 0.0;
  double c0 = 0.0;
  std::string dims = "128";
  std::string boundary = "periodic";

  void add(CLI::App* cmd) {
    cmd->add_option("--law", law, "bond law: bernoulli|uniform|two_point")->capture_default_str();
    cmd->add_option("--p", p, "open-bond probability")->capture_default_str();
    cmd->add_option("--c", c, "open (or high) conductance")->capture_default_str();
    cmd->add_option("--c-low", c_low, "low conductance of the two-point law")->capture_default_str();
    cmd->add_option("--c0", c0, "upper conductance bound (default: c)");
    cmd->add_option("--dims", dims, "side lengths, e.g. 256 or 256,256")->capture_default_str();
    cmd->add_option("--boundary", boundary, "periodic|free")->capture_default_str();
  }
  BondLaw bond_law() const { return make_law(law, p, c, c_low, c0); }
  Boundary bc() const { return parse_boundary(boundary); }
};

// ---------------------------------------------------------------------------

int cmd_gen_env(const LawOptions& lo, std::uint64_t seed, const std::string& out) {
  const auto field = generate_field(lo.bond_law(), parse_dims(lo.dims), lo.bc(), seed);
  if (!out.empty()) {
    std::ostringstream os;
    save_field(os, field);
    write_atomic(out, os.str());
  }
  const auto bonds = threshold_field(field, 0.0);
  const auto lab = label_clusters(bonds);
  const auto dst = cluster_diameter_stats(lab, bonds);
  Json j{{"law", field.law().describe()},
         {"dims", field.lattice().dims()},
         {"boundary", to_string(field.lattice().boundary())},
         {"seed", seed},
         {"m_hat", estimate_m(lab)},
         {"clusters", lab.num_clusters()},
         {"giant_size", lab.giant_size()},
         {"max_finite_diameter", dst.max_diameter}};
  std::cout << j.dump(2) << '\n';
  return kOk;
}

int cmd_effective_d(const std::string& env, const LawOptions& lo, const std::string& seeds, const std::string& method,
                    const MsdOptions& msd, int threads, const std::string& out) {
  EffectiveDEnsemble ens;
  if (!env.empty()) {
    ens = run_effective_d(load_field(env), method, msd);
  } else {
    ens = run_effective_d(lo.bond_law(), parse_dims(lo.dims), lo.bc(), parse_seeds(seeds), method, msd, threads);
  }
  const auto j = to_json(ens);
  if (!out.empty()) write_atomic(out, dump_json(j));
  std::cout << j["summary"].dump(2) << '\n';
  for (const auto& r : ens.records)
    for (const auto& w : r.D.warnings) std::cerr << "warning (seed " << r.seed << "): " << w << '\n';
  return kOk;
}

int cmd_pde(const std::string& rho0, double m, double sigma, const std::string& g, double t_end, int grid, int dim,
            const std::string& snaps, double cfl, const std::string& out) {
  const auto prof = Profile::parse(rho0, dim);
  const FugacityTable table(JumpRateFn::parse(g));
  PdeParams p{m, sigma, phi_table_for(table, prof.upper_bound(), m)};
  p.validate();
  auto times = snaps.empty() ? std::vector<double>{t_end} : parse_double_list(snaps, "--snapshots");
  auto init = sample_grid(dim, grid, [&](const std::vector<double>& x) { return prof(x); });
  const double mass0 = init.mass();
  const auto res = solve_to_time(std::move(init), p, t_end, times, SolveOptions{cfl, std::nullopt});
  Json meta{{"rho0", rho0}, {"m", m},       {"sigma", sigma},     {"g", g},
            {"t_end", t_end}, {"grid", grid}, {"dim", dim},       {"cfl", cfl},
            {"initial_mass", mass0}, {"dt_max", max_stable_dt(res.front(), p)}};
  meta["snapshots"] = Json::array();
  const fs::path dir(out);
  for (std::size_t i = 0; i < res.size(); ++i) {
    const auto& s = res[i];
    std::ostringstream os;
    for (int k = 0; k < dim; ++k) os << 'i' << k << ',';
    os << "value\n";
    for (std::size_t n = 0; n < s.size(); ++n) {
      std::size_t rest = n;
      for (int k = 0; k < dim; ++k) {
        os << rest % static_cast<std::size_t>(s.n) << ',';
        rest /= static_cast<std::size_t>(s.n);
      }
      os << format_number(s.values[n]) << '\n';
    }
    const std::string name = "pde_" + std::to_string(i) + ".csv";
    if (!out.empty()) write_atomic(dir / name, os.str());
    meta["snapshots"].push_back({{"file", name}, {"t", s.time}, {"mass", s.mass()}, {"min", s.min()}, {"max", s.max()}});
  }
  if (!out.empty()) write_atomic(dir / "pde.json", dump_json(meta));
  std::cout << meta.dump(2) << '\n';
  return kOk;
}

int cmd_simulate(const std::string& env, const std::string& g, const std::string& rho0, double N, double t_end,
                 const std::string& obs, std::uint64_t seed, const std::string& region, const std::string& tests,
                 const std::string& out) {
  const auto field = load_field(env);
  const auto lab = label_clusters(field);
  const auto graph = region == "all" ? full_lattice_graph(field) : giant_cluster_graph(field, lab);
  if (region != "all" && region != "giant") throw ValidationError("--region must be giant|all");
  if (graph.size() == 0) throw ValidationError("the selected region has no sites");
  const auto rate = JumpRateFn::parse(g);
  const FugacityTable table(rate);
  const auto prof = Profile::parse(rho0, field.lattice().dim());
  const double divisor = region == "all" ? 1.0 : estimate_m(lab);
  const auto cfg = sample_product_measure(table, prof, graph, N, divisor, seed);
  auto times = obs.empty() ? std::vector<double>{t_end} : parse_double_list(obs, "--obs-times");
  const auto snaps = simulate_kmc(graph, cfg, rate, N, t_end, times, seed);
  std::vector<TestFunction> Gs;
  std::vector<std::string> names = detail::split_list(tests, '|');
  for (const auto& s : names) Gs.push_back(TestFunction::parse(s, field.lattice().dim()));
  std::vector<std::vector<double>> weights;
  for (const auto& G : Gs) weights.push_back(empirical_weights(graph, G, N));
  std::ostringstream csv;
  csv << "t,events,particles";
  for (const auto& n : names) csv << ',' << detail::csv_field("pi[" + n + "]");
  csv << '\n';
  const fs::path dir(out);
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    const auto& s = snaps[i];
    csv << format_number(s.time) << ',' << s.event_count << ',' << s.config.total();
    for (const auto& w : weights) csv << ',' << format_number(empirical_measure(s.config, w));
    csv << '\n';
    if (!out.empty()) {
      std::ostringstream bin;
      save_snapshot(bin, s, N, seed);
      write_atomic(dir / ("snapshot_" + std::to_string(i) + ".bin"), bin.str());
    }
  }
  if (!out.empty()) write_atomic(dir / "observables.csv", csv.str());
  std::cout << csv.str();
  return kOk;
}

ExperimentSpec load_with_overrides(const std::string& config, const std::string& out, int threads) {
  auto s = load_experiment(config);
  if (!out.empty()) s.output_dir = out;
  else s.output_dir = s.resolve_path(s.output_dir).string();
  if (threads > 0) s.threads = threads;
  s.validate();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-range dynamics on percolation clusters: simulation, homogenization and hydrodynamic checks"};
  app.require_subcommand(1);

  // gen-env
  auto* gen = app.add_subcommand("gen-env", "generate a conductance field");
  LawOptions gen_law;
  gen_law.add(gen);
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "field seed")->capture_default_str();
  gen->add_option("--out", gen_out, "binary field file");

  // effective-d
  auto* eff = app.add_subcommand("effective-d", "estimate the effective diffusivity and cluster density");
  LawOptions eff_law;
  eff_law.add(eff);
  std::string eff_env, eff_seeds = "1", eff_method = "variational", eff_out;
  MsdOptions msd;
  int eff_threads = 1;
  eff->add_option("--env", eff_env, "field file (otherwise an ensemble is generated)");
  eff->add_option("--seeds", eff_seeds, "ensemble seeds, e.g. 1-10 or 3,5,8")->capture_default_str();
  eff->add_option("--method", eff_method, "variational|msd")->capture_default_str();
  eff->add_option("--walkers", msd.walkers, "walkers per field (msd)")->capture_default_str();
  eff->add_option("--walk-time", msd.time, "walk duration (msd)")->capture_default_str();
  eff->add_option("--walker-seed", msd.seed, "walker seed (msd)")->capture_default_str();
  eff->add_option("--threads", eff_threads, "worker threads")->capture_default_str();
  eff->add_option("--out", eff_out, "JSON output (usable as a cache)");

  // pde
  auto* pde = app.add_subcommand("pde", "solve the limiting nonlinear heat equation");
  std::string pde_rho0 = "gauss:0.5,1,0.1", pde_g = "indicator", pde_snaps, pde_out;
  double pde_m = 1.0, pde_sigma = 1.0, pde_t = 0.05, pde_cfl = 0.9;
  int pde_grid = 128, pde_dim = 2;
  pde->add_option("--rho0", pde_rho0, "initial profile")->capture_default_str();
  pde->add_option("--m", pde_m, "cluster density")->capture_default_str();
  pde->add_option("--sigma", pde_sigma, "scalar diffusivity")->capture_default_str();
  pde->add_option("--g", pde_g, "rate function")->capture_default_str();
  pde->add_option("--t-end", pde_t, "final time")->capture_default_str();
  pde->add_option("--grid", pde_grid, "cells per side")->capture_default_str();
  pde->add_option("--dim", pde_dim, "dimension")->capture_default_str();
  pde->add_option("--snapshots", pde_snaps, "snapshot times (default: t-end)");
  pde->add_option("--cfl", pde_cfl, "fraction of the stable step")->capture_default_str();
  pde->add_option("--out", pde_out, "output directory");

  // simulate
  auto* sim = app.add_subcommand("simulate", "run the particle system on a stored environment");
  std::string sim_env, sim_g = "indicator", sim_rho0 = "const:1", sim_obs, sim_out, sim_region = "giant",
                       sim_tests = "const:1";
  double sim_N = 0.0, sim_t = 0.01;
  std::uint64_t sim_seed = 1;
  sim->add_option("--env", sim_env, "field file")->required();
  sim->add_option("--g", sim_g, "rate function")->capture_default_str();
  sim->add_option("--rho0", sim_rho0, "initial profile")->capture_default_str();
  sim->add_option("--N", sim_N, "diffusive scale (default: lattice side)");
  sim->add_option("--t-end", sim_t, "final macroscopic time")->capture_default_str();
  sim->add_option("--obs-times", sim_obs, "observation times (default: t-end)");
  sim->add_option("--seed", sim_seed, "particle seed")->capture_default_str();
  sim->add_option("--region", sim_region, "giant|all")->capture_default_str();
  sim->add_option("--test-functions", sim_tests, "observables separated by '|'")->capture_default_str();
  sim->add_option("--out", sim_out, "output directory");

  // experiments
  struct ExperimentCmd {
    CLI::App* cmd;
    std::string config, out;
    int threads = 0;
  };
  std::vector<ExperimentCmd> exps;
  for (auto [name, help] : {std::pair{"hydro", "hydrodynamic comparison on the giant cluster"},
                            std::pair{"bulk", "all-site comparison with trapped mass"},
                            std::pair{"diag-replacement", "block-replacement ladder"},
                            std::pair{"diag-corrected", "corrected test-function gap"}})
    exps.push_back({app.add_subcommand(name, help), "", "", 0});
  for (auto& e : exps) {
    e.cmd->add_option("--config", e.config, "INI experiment file")->required();
    e.cmd->add_option("--out", e.out, "output directory (overrides output.dir)");
    e.cmd->add_option("--threads", e.threads, "worker threads (overrides dynamics.threads)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalid;
  }

  try {
    if (*gen) return cmd_gen_env(gen_law, gen_seed, gen_out);
    if (*eff) return cmd_effective_d(eff_env, eff_law, eff_seeds, eff_method, msd, eff_threads, eff_out);
    if (*pde) return cmd_pde(pde_rho0, pde_m, pde_sigma, pde_g, pde_t, pde_grid, pde_dim, pde_snaps, pde_cfl, pde_out);
    if (*sim) {
      const double N = sim_N > 0.0 ? sim_N : load_field(sim_env).lattice().side(0);
      return cmd_simulate(sim_env, sim_g, sim_rho0, N, sim_t, sim_obs, sim_seed, sim_region, sim_tests, sim_out);
    }
    for (auto& e : exps) {
      if (!*e.cmd) continue;
      const auto s = load_with_overrides(e.config, e.out, e.threads);
      const fs::path dir(s.output_dir);
      const std::string name = e.cmd->get_name();
      if (name == "hydro") print_written(write_report(dir, run_hydrodynamic_experiment(s)));
      else if (name == "bulk") print_written(write_report(dir, run_bulk_experiment(s)));
      else if (name == "diag-replacement") print_written(write_report(dir, run_replacement_diagnostic(s)));
      else print_written(write_report(dir, run_corrected_measure_diagnostic(s)));
      return kOk;
    }
  } catch (const SolverError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const DivergenceError& e) {
    std::cerr << "solver failure: " << e.what() << '\n';
    return kSolver;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalid;
  }
  return kInvalid;
}
