#pragma once

// End-to-end experiments: environment -> initial measure -> dynamics ->
// observables, compared against the limiting equation.
//
// Seeding: replica r at scale N draws its environment from
// derive_key(derive_key(env_seed, N), r) and its particles and dynamics
// from derive_key(derive_key(seed, N), r), so results do not depend on
// thread count or scheduling.

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include "zrpperc/config.hpp"
#include "zrpperc/environment.hpp"
#include "zrpperc/fugacity.hpp"
#include "zrpperc/homogenization.hpp"
#include "zrpperc/kmc.hpp"
#include "zrpperc/observables.hpp"
#include "zrpperc/particles.hpp"
#include "zrpperc/pde.hpp"
#include "zrpperc/report.hpp"

namespace zrpperc {

/// Run fn(0..n-1) on up to `threads` workers. The first exception is
/// rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next.store(n);
      }
    }
  };
  std::vector<std::thread> pool;
  const auto count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Effective diffusivity ensembles and their cache file

struct EffectiveDRecord {
  std::uint64_t seed = 0;
  int L = 0;
  EffectiveDiffusivity D;
};

struct EffectiveDEnsemble {
  BondLaw law;
  std::vector<int> dims;
  std::string method;
  std::vector<EffectiveDRecord> records;
  double sigma = 0.0;
  double sigma_se = 0.0;
  double m_hat = 0.0;
  double m_hat_se = 0.0;
  double offdiag = 0.0;
  double offdiag_se = 0.0;

  void summarize_records() {
    std::vector<double> s, m, o;
    for (const auto& r : records) {
      s.push_back(r.D.sigma());
      m.push_back(r.D.m_hat);
      o.push_back(r.D.dim > 1 ? r.D.at(0, 1) : 0.0);
    }
    const auto a = summarize(s), b = summarize(m), c = summarize(o);
    sigma = a.mean;
    sigma_se = a.se;
    m_hat = b.mean;
    m_hat_se = b.se;
    offdiag = c.mean;
    offdiag_se = c.se;
  }
};

struct MsdOptions {
  std::size_t walkers = 1000;
  double time = 1000.0;
  std::uint64_t seed = 1;
};

inline EffectiveDiffusivity estimate_D(const ConductanceField& f, const std::string& method, const MsdOptions& msd) {
  const auto lab = label_clusters(f);
  if (method == "variational") return estimate_D_variational(f, lab);
  if (method == "msd") return estimate_D_msd(f, lab, msd.walkers, msd.time, derive_key(msd.seed, f.seed()));
  throw ValidationError("unknown method '" + method + "' (expected variational|msd)");
}

inline EffectiveDEnsemble run_effective_d(const BondLaw& law, const std::vector<int>& dims, Boundary boundary,
                                          const std::vector<std::uint64_t>& seeds, const std::string& method,
                                          const MsdOptions& msd = {}, int threads = 1) {
  EffectiveDEnsemble e;
  e.law = law;
  e.dims = dims;
  e.method = method;
  e.records.resize(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t i) {
    const auto f = generate_field(law, dims, boundary, seeds[i]);
    e.records[i] = {seeds[i], dims[0], estimate_D(f, method, msd)};
  });
  e.summarize_records();
  return e;
}

inline EffectiveDEnsemble run_effective_d(const ConductanceField& field, const std::string& method,
                                          const MsdOptions& msd = {}) {
  EffectiveDEnsemble e;
  e.law = field.law();
  e.dims = field.lattice().dims();
  e.method = method;
  e.records.push_back({field.seed(), field.lattice().side(0), estimate_D(field, method, msd)});
  e.summarize_records();
  return e;
}

inline Json to_json(const EffectiveDEnsemble& e) {
  Json j;
  j["law"] = {{"kind", law_name(e.law.kind)}, {"p", e.law.p}, {"c", e.law.c}, {"c_low", e.law.c_low}, {"c0", e.law.c0}};
  j["dims"] = e.dims;
  j["method"] = e.method;
  j["records"] = Json::array();
  for (const auto& r : e.records)
    j["records"].push_back({{"seed", r.seed},
                            {"L", r.L},
                            {"p", e.law.p},
                            {"method", r.D.method},
                            {"matrix", r.D.matrix},
                            {"stderr", r.D.stderr_matrix},
                            {"m_hat", r.D.m_hat},
                            {"residual", r.D.residual},
                            {"iterations", r.D.iterations},
                            {"warnings", r.D.warnings}});
  j["summary"] = {{"sigma", e.sigma},       {"sigma_se", e.sigma_se}, {"m_hat", e.m_hat},
                  {"m_hat_se", e.m_hat_se}, {"offdiag", e.offdiag},   {"offdiag_se", e.offdiag_se},
                  {"seeds", e.records.size()}};
  return j;
}

struct Homogenized {
  double sigma = 1.0;
  double m = 1.0;
  std::string source;
};

/// sigma and m for the configured environment: explicit values, the exact
/// full-lattice case, or an effective-d cache file.
inline Homogenized resolve_homogenization(const ExperimentSpec& s) {
  if (s.sigma && s.m_hat) return {*s.sigma, *s.m_hat, "config"};
  const auto law = s.bond_law();
  if (law.kind == BondLaw::Kind::bernoulli && law.p == 1.0) return {law.c, 1.0, "full lattice"};
  if (!s.cache.empty()) {
    const auto path = s.resolve_path(s.cache);
    std::ifstream in(path);
    if (!in)
      throw ValidationError("effective diffusivity cache " + path.string() +
                            " not found; run `zrpperc effective-d --out " + path.string() + "` first");
    Json j;
    try {
      j = Json::parse(in);
    } catch (const std::exception& e) {
      throw ValidationError("unreadable effective diffusivity cache " + path.string() + ": " + e.what());
    }
    if (!j.contains("summary") || !j.contains("law")) throw ValidationError("cache " + path.string() + " lacks a summary");
    if (j["law"].value("kind", "") != law_name(law.kind) || j["law"].value("p", -1.0) != law.p)
      throw ValidationError("cache " + path.string() + " was computed for a different bond law");
    Homogenized h{j["summary"].value("sigma", 0.0), j["summary"].value("m_hat", 0.0), "cache:" + path.string()};
    if (s.sigma) h.sigma = *s.sigma;
    if (s.m_hat) h.m = *s.m_hat;
    if (!(h.sigma > 0.0) || !(h.m > 0.0 && h.m <= 1.0)) throw ValidationError("cache " + path.string() + " holds invalid values");
    return h;
  }
  throw ValidationError(
      "no effective diffusivity for this environment: run `zrpperc effective-d` and set homogenization.cache, "
      "or give homogenization.sigma and homogenization.m_hat");
}

// ---------------------------------------------------------------------------
// Shared pieces

inline ConductanceField replica_field(const ExperimentSpec& s, int N, int replica) {
  const std::vector<int> dims(static_cast<std::size_t>(s.dim), s.side_for(N));
  return generate_field(s.bond_law(), dims, s.boundary,
                        derive_key(derive_key(s.env_seed, static_cast<std::uint64_t>(N)), static_cast<std::uint64_t>(replica)));
}

inline std::uint64_t replica_key(const ExperimentSpec& s, int N, int replica) {
  return derive_key(derive_key(s.seed, static_cast<std::uint64_t>(N)), static_cast<std::uint64_t>(replica));
}

/// Solution of the limiting equation at each observation time.
inline std::vector<DensityGrid> limit_snapshots(const ExperimentSpec& s, const FugacityTable& table, const Profile& prof,
                                                double m, double sigma) {
  auto rho0 = sample_grid(s.dim, s.grid, [&](const std::vector<double>& x) { return prof(x); });
  PdeParams p{m, sigma, phi_table_for(table, prof.upper_bound(), m)};
  return solve_to_time(std::move(rho0), p, s.max_time(), s.times, SolveOptions{s.cfl, std::nullopt});
}

/// Weights G(x/N) / (N^d * periods^d), so that a dot product with the
/// occupations estimates the integral over one unit torus.
inline std::vector<double> torus_weights(const SiteGraph& g, const TestFunction& G, const ExperimentSpec& s, int N) {
  auto w = empirical_weights(g, G, N);
  const double copies = std::pow(static_cast<double>(s.periods(N)), s.dim);
  for (auto& v : w) v /= copies;
  return w;
}

inline int block_radius(const ExperimentSpec& s, int N) { return std::max(1, static_cast<int>(std::floor(s.epsilon * N))); }

inline std::vector<int> usable_ells(const ExperimentSpec& s, int N, std::vector<std::string>& warnings) {
  std::vector<int> out;
  for (int l : s.ells) {
    if (2 * l + 1 <= s.side_for(N)) out.push_back(l);
    else warnings.push_back("ell=" + std::to_string(l) + " skipped at N=" + std::to_string(N) + ": window smaller than 2l+1");
  }
  return out;
}

/// L1 distance N^{-d} sum_x |eta^l(x) - rho(x/N)| per unit torus.
inline double smoothed_l1(const SiteGraph& g, const ParticleConfig& cfg, int ell, const DensityGrid& rho, int N) {
  const auto blocks = block_density_field(g, cfg, ell);
  double acc = 0.0;
  for (std::size_t x = 0; x < blocks.size(); ++x)
    acc += std::abs(blocks[x] - rho.interpolate(macro_position(g.lattice, x, N)));
  return acc / static_cast<double>(blocks.size());
}

// ---------------------------------------------------------------------------
// Hydrodynamic comparison on the giant cluster

inline ComparisonReport run_hydrodynamic_experiment(const ExperimentSpec& s) {
  s.validate();
  const auto hom = resolve_homogenization(s);
  const auto rate = s.rate_fn();
  const FugacityTable table(rate);
  const auto prof = s.initial_profile();
  const auto Gs = s.functions();
  const auto pde = limit_snapshots(s, table, prof, hom.m, hom.sigma);
  const std::size_t nt = s.times.size(), ng = Gs.size();

  ComparisonReport rep;
  rep.experiment = "hydro";
  rep.config = s.resolved();
  rep.sigma = hom.sigma;
  rep.m = hom.m;
  rep.homogenization_source = hom.source;
  rep.replicas = s.replicas;

  for (int N : s.scales) {
    const auto ells = usable_ells(s, N, rep.warnings);
    int ell_smooth = block_radius(s, N);
    const bool smooth_ok = 2 * ell_smooth + 1 <= s.side_for(N);
    const auto R = static_cast<std::size_t>(s.replicas);
    std::vector<std::vector<double>> val(nt * ng, std::vector<double>(R));
    std::vector<std::vector<double>> l1(nt, std::vector<double>(R));
    std::vector<std::vector<double>> vl(nt * ells.size(), std::vector<double>(R));
    std::vector<std::size_t> clamped(nt * ells.size(), 0);
    std::mutex mu;
    parallel_for(R, s.threads, [&](std::size_t r) {
      const auto field = replica_field(s, N, static_cast<int>(r));
      const auto lab = label_clusters(field);
      if (lab.giant_size() == 0) throw ValidationError("replica environment has an empty giant cluster");
      const auto g = giant_cluster_graph(field, lab);
      const double m_w = estimate_m(lab);
      const auto key = replica_key(s, N, static_cast<int>(r));
      const auto cfg = sample_product_measure(table, prof, g, N, m_w, key);
      const auto snaps = simulate_kmc(g, cfg, rate, N, s.max_time(), s.times, key);
      const PhiTable phi(table, std::max(8.0, 4.0 * prof.upper_bound() / m_w));
      for (std::size_t ig = 0; ig < ng; ++ig) {
        const auto w = torus_weights(g, Gs[ig], s, N);
        for (std::size_t it = 0; it < nt; ++it) val[it * ng + ig][r] = empirical_measure(snaps[it].config, w);
      }
      for (std::size_t it = 0; it < nt; ++it) {
        if (smooth_ok) l1[it][r] = smoothed_l1(g, snaps[it].config, ell_smooth, pde[it], N);
        for (std::size_t il = 0; il < ells.size(); ++il) {
          const auto v = replacement_statistic(g, snaps[it].config, rate, ells[il], m_w, phi);
          vl[it * ells.size() + il][r] = v.value;
          std::lock_guard lock(mu);
          clamped[it * ells.size() + il] += v.clamped;
        }
      }
    });
    for (std::size_t it = 0; it < nt; ++it) {
      for (std::size_t ig = 0; ig < ng; ++ig) {
        ComparisonRow row;
        row.N = N;
        row.t = s.times[it];
        row.G = s.test_functions[ig];
        row.replica_values = val[it * ng + ig];
        row.prediction = integrate(pde[it], Gs[ig]);
        row.finish();
        rep.rows.push_back(std::move(row));
      }
      if (smooth_ok) rep.density_l1.push_back({N, s.times[it], ell_smooth, l1[it], summarize(l1[it]), 0});
      for (std::size_t il = 0; il < ells.size(); ++il) {
        const auto& v = vl[it * ells.size() + il];
        rep.replacement.push_back({N, s.times[it], ells[il], v, summarize(v), clamped[it * ells.size() + il]});
      }
    }
    if (!smooth_ok) rep.warnings.push_back("smoothed density skipped at N=" + std::to_string(N));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Bulk experiment over every site: giant cluster plus traps

/// Largest observed ratio max finite diameter / ln(1 + L) over a
/// calibration ensemble independent of the experiment's replicas.
inline double fit_diameter_gamma(const ExperimentSpec& s) {
  double gamma = 0.0;
  for (int N : s.scales) {
    const int L = s.side_for(N);
    for (int i = 0; i < s.calibration_fields; ++i) {
      const std::vector<int> dims(static_cast<std::size_t>(s.dim), L);
      const auto f = generate_field(s.bond_law(), dims, s.boundary,
                                    derive_key(derive_key(s.env_seed ^ 0xd1a3e7e5ULL, static_cast<std::uint64_t>(L)),
                                               static_cast<std::uint64_t>(i)));
      const auto bonds = threshold_field(f, 0.0);
      const auto st = cluster_diameter_stats(label_clusters(bonds), bonds);
      gamma = std::max(gamma, st.max_diameter / std::log1p(static_cast<double>(L)));
    }
  }
  return gamma;
}

inline ComparisonReport run_bulk_experiment(const ExperimentSpec& s) {
  s.validate();
  const auto law = s.bond_law();
  if (!(law.open_probability() < 1.0)) throw ValidationError("bulk experiment needs p < 1 so that finite clusters exist");
  const auto hom = resolve_homogenization(s);
  const auto rate = s.rate_fn();
  const FugacityTable table(rate);
  const auto prof = s.initial_profile();
  const auto Gs = s.functions();
  // every particle on a cluster of density one: rho_tilde
  const auto tilde = limit_snapshots(s, table, prof, 1.0, hom.sigma);
  const auto rho0 = sample_grid(s.dim, s.grid, [&](const std::vector<double>& x) { return prof(x); });
  const std::size_t nt = s.times.size(), ng = Gs.size();

  ComparisonReport rep;
  rep.experiment = "bulk";
  rep.config = s.resolved();
  rep.sigma = hom.sigma;
  rep.m = hom.m;
  rep.homogenization_source = hom.source;
  rep.replicas = s.replicas;
  rep.diameter_gamma = fit_diameter_gamma(s);

  for (int N : s.scales) {
    const auto ells = usable_ells(s, N, rep.warnings);
    const auto R = static_cast<std::size_t>(s.replicas);
    std::vector<std::vector<double>> all(nt * ng, std::vector<double>(R)), giant(nt * ng, std::vector<double>(R));
    std::vector<std::vector<double>> vl(nt * ells.size(), std::vector<double>(R));
    std::vector<std::vector<TrapRow>> traps(R);
    std::vector<std::size_t> violations(R, 0), checked(R, 0);
    const double scale = std::log1p(static_cast<double>(N)) / std::pow(static_cast<double>(N), s.dim + 1) /
                         std::pow(static_cast<double>(s.periods(N)), s.dim);
    parallel_for(R, s.threads, [&](std::size_t r) {
      const auto field = replica_field(s, N, static_cast<int>(r));
      const auto bonds = threshold_field(field, 0.0);
      const auto lab = label_clusters(bonds);
      const auto dstats = cluster_diameter_stats(lab, bonds);
      const auto g = full_lattice_graph(field);
      const auto key = replica_key(s, N, static_cast<int>(r));
      const auto cfg = sample_product_measure(table, prof, g, N, 1.0, key);
      const auto snaps = simulate_kmc(g, cfg, rate, N, s.max_time(), s.times, key);
      const PhiTable phi(table, std::max(8.0, 4.0 * prof.upper_bound()));
      // trapped particles: every site off the giant cluster
      double off_mass = 0.0;
      for (std::size_t x = 0; x < g.size(); ++x)
        if (!lab.in_giant(x)) off_mass += cfg.occupancy[x];
      // conservation per finite cluster and per isolated site
      std::vector<std::int64_t> at0(lab.num_clusters(), 0);
      for (std::size_t x = 0; x < g.size(); ++x)
        if (lab.label[x] >= 0 && !lab.in_giant(x)) at0[static_cast<std::size_t>(lab.label[x])] += cfg.occupancy[x];
      for (std::size_t it = 0; it < nt; ++it) {
        const auto& c = snaps[it].config;
        std::vector<std::int64_t> now(lab.num_clusters(), 0);
        for (std::size_t x = 0; x < g.size(); ++x) {
          if (lab.label[x] == ClusterLabeling::kIsolated) {
            ++checked[r];
            if (c.occupancy[x] != cfg.occupancy[x]) ++violations[r];
          } else if (!lab.in_giant(x)) {
            now[static_cast<std::size_t>(lab.label[x])] += c.occupancy[x];
          }
        }
        for (std::size_t id = 0; id < now.size(); ++id) {
          if (static_cast<std::int32_t>(id) == lab.giant_id) continue;
          ++checked[r];
          if (now[id] != at0[id]) ++violations[r];
        }
      }
      for (std::size_t ig = 0; ig < ng; ++ig) {
        const auto w = torus_weights(g, Gs[ig], s, N);
        std::vector<double> w_giant(w.size(), 0.0), w_off(w.size(), 0.0);
        for (std::size_t x = 0; x < w.size(); ++x) (lab.in_giant(x) ? w_giant : w_off)[x] = w[x];
        const double off0 = empirical_measure(cfg, w_off);
        const double lip = Gs[ig].lipschitz_linf();
        for (std::size_t it = 0; it < nt; ++it) {
          const auto& c = snaps[it].config;
          all[it * ng + ig][r] = empirical_measure(c, w);
          giant[it * ng + ig][r] = empirical_measure(c, w_giant);
          TrapRow tr;
          tr.N = N;
          tr.replica = static_cast<int>(r);
          tr.t = s.times[it];
          tr.G = s.test_functions[ig];
          tr.change = std::abs(empirical_measure(c, w_off) - off0);
          tr.off_giant_mass = off_mass;
          tr.bound = lip * rep.diameter_gamma * scale * off_mass;
          tr.bound_observed = lip * dstats.max_diameter / std::pow(static_cast<double>(N), s.dim + 1) /
                              std::pow(static_cast<double>(s.periods(N)), s.dim) * off_mass;
          tr.holds = tr.change <= tr.bound * (1.0 + 1e-12) + 1e-15;
          traps[r].push_back(tr);
        }
      }
      for (std::size_t it = 0; it < nt; ++it)
        for (std::size_t il = 0; il < ells.size(); ++il)
          vl[it * ells.size() + il][r] = replacement_statistic(g, snaps[it].config, rate, ells[il], 1.0, phi).value;
    });
    for (std::size_t r = 0; r < R; ++r) {
      rep.conservation_violations += violations[r];
      rep.finite_clusters_checked += checked[r];
      rep.traps.insert(rep.traps.end(), traps[r].begin(), traps[r].end());
    }
    for (std::size_t it = 0; it < nt; ++it) {
      const auto composite = bulk_profile(tilde[it], rho0, hom.m);
      for (std::size_t ig = 0; ig < ng; ++ig) {
        ComparisonRow row;
        row.N = N;
        row.t = s.times[it];
        row.G = s.test_functions[ig];
        row.replica_values = all[it * ng + ig];
        row.prediction = integrate(composite, Gs[ig]);
        row.naive_prediction = integrate(tilde[it], Gs[ig]);
        row.finish();
        rep.rows.push_back(std::move(row));
        ComparisonRow gr;
        gr.N = N;
        gr.t = s.times[it];
        gr.G = s.test_functions[ig];
        gr.replica_values = giant[it * ng + ig];
        gr.prediction = hom.m * integrate(tilde[it], Gs[ig]);
        gr.finish();
        rep.giant_rows.push_back(std::move(gr));
      }
      for (std::size_t il = 0; il < ells.size(); ++il) {
        const auto& v = vl[it * ells.size() + il];
        rep.replacement.push_back({N, s.times[it], ells[il], v, summarize(v), 0});
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Replacement ladder along trajectories

inline ReplacementReport run_replacement_diagnostic(const ExperimentSpec& s) {
  s.validate();
  for (int N : s.scales)
    for (int l : s.ells)
      if (2 * l + 1 > s.side_for(N))
        throw ValidationError("window of side " + std::to_string(s.side_for(N)) + " is smaller than the block 2l+1 = " +
                              std::to_string(2 * l + 1));
  const auto rate = s.rate_fn();
  const FugacityTable table(rate);
  const auto prof = s.initial_profile();
  ReplacementReport rep;
  rep.config = s.resolved();
  rep.replicas = s.replicas;
  const auto R = static_cast<std::size_t>(s.replicas);
  const std::size_t nl = s.ells.size();
  for (int N : s.scales) {
    std::vector<std::vector<double>> avg(nl, std::vector<double>(R));
    std::vector<std::vector<std::size_t>> clamp(nl, std::vector<std::size_t>(R, 0));
    parallel_for(R, s.threads, [&](std::size_t r) {
      const auto field = replica_field(s, N, static_cast<int>(r));
      const auto lab = label_clusters(field);
      if (lab.giant_size() == 0) throw ValidationError("replica environment has an empty giant cluster");
      const auto g = giant_cluster_graph(field, lab);
      const double m_w = estimate_m(lab);
      const auto key = replica_key(s, N, static_cast<int>(r));
      const auto cfg = sample_product_measure(table, prof, g, N, m_w, key);
      const auto snaps = simulate_kmc(g, cfg, rate, N, s.max_time(), s.times, key);
      const PhiTable phi(table, std::max(8.0, 4.0 * prof.upper_bound() / m_w));
      for (std::size_t il = 0; il < nl; ++il) {
        double acc = 0.0;
        for (const auto& sn : snaps) {
          const auto v = replacement_statistic(g, sn.config, rate, s.ells[il], m_w, phi);
          acc += v.value;
          clamp[il][r] += v.clamped;
        }
        avg[il][r] = acc / static_cast<double>(snaps.size());
      }
    });
    ReplacementLadder lad;
    lad.N = N;
    lad.identically_zero = true;
    for (std::size_t il = 0; il < nl; ++il) {
      LadderRow row{N, s.max_time(), s.ells[il], avg[il], summarize(avg[il]), 0};
      for (auto c : clamp[il]) row.clamped += c;
      for (double v : avg[il]) lad.identically_zero = lad.identically_zero && std::abs(v) < 1e-13;
      lad.entries.push_back(std::move(row));
    }
    lad.strictly_decreasing = nl > 1;
    for (std::size_t il = 1; il < nl; ++il)
      lad.strictly_decreasing = lad.strictly_decreasing && s.ells[il] > s.ells[il - 1] &&
                                lad.entries[il].summary.ci_high < lad.entries[il - 1].summary.ci_low;
    if (lad.identically_zero) rep.warnings.push_back("replacement statistic vanishes identically for this rate function");
    rep.ladders.push_back(std::move(lad));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Corrected test functions along trajectories

inline CorrectedReport run_corrected_measure_diagnostic(const ExperimentSpec& s) {
  s.validate();
  const auto hom = resolve_homogenization(s);
  const auto rate = s.rate_fn();
  const FugacityTable table(rate);
  const auto prof = s.initial_profile();
  const auto Gs = s.functions();
  const std::size_t ng = Gs.size();
  std::vector<double> D(static_cast<std::size_t>(s.dim * s.dim), 0.0);
  for (int k = 0; k < s.dim; ++k) D[static_cast<std::size_t>(k * s.dim + k)] = hom.sigma;

  CorrectedReport rep;
  rep.config = s.resolved();
  rep.lambda = s.lambda;
  rep.sigma = hom.sigma;
  rep.homogenization_source = hom.source;
  rep.replicas = s.replicas;
  const auto R = static_cast<std::size_t>(s.replicas);
  for (int N : s.scales) {
    std::vector<std::vector<double>> sup(ng, std::vector<double>(R)), l2(ng, std::vector<double>(R)),
        l1(ng, std::vector<double>(R)), resid(ng, std::vector<double>(R));
    parallel_for(R, s.threads, [&](std::size_t r) {
      const auto field = replica_field(s, N, static_cast<int>(r));
      const auto lab = label_clusters(field);
      const auto cg = build_cluster_graph(field, lab, N);
      const double m_w = estimate_m(lab);
      const auto key = replica_key(s, N, static_cast<int>(r));
      const auto cfg = sample_product_measure(table, prof, cg.graph, N, m_w, key);
      const auto snaps = simulate_kmc(cg.graph, cfg, rate, N, s.max_time(), s.times, key);
      const double copies = std::pow(static_cast<double>(s.periods(N)), s.dim);
      for (std::size_t ig = 0; ig < ng; ++ig) {
        const auto sol = solve_resolvent(cg, s.lambda, Gs[ig], D);
        const auto gap = corrected_function_gap(cg, sol.values, Gs[ig]);
        l2[ig][r] = gap.l2;
        l1[ig][r] = gap.l1;
        resid[ig][r] = sol.residual_norm;
        const auto wG = torus_weights(cg.graph, Gs[ig], s, N);
        std::vector<double> wC(sol.values.size());
        const double vol = std::pow(static_cast<double>(N), s.dim) * copies;
        for (std::size_t i = 0; i < wC.size(); ++i) wC[i] = sol.values[i] / vol;
        double m = 0.0;
        for (const auto& sn : snaps)
          m = std::max(m, std::abs(empirical_measure(sn.config, wC) - empirical_measure(sn.config, wG)));
        sup[ig][r] = m;
      }
    });
    for (std::size_t ig = 0; ig < ng; ++ig) {
      CorrectedRow row;
      row.N = N;
      row.G = s.test_functions[ig];
      row.sup_gaps = sup[ig];
      row.summary = summarize(sup[ig]);
      row.function_gap_l2 = summarize(l2[ig]).mean;
      row.function_gap_l1 = summarize(l1[ig]).mean;
      row.max_residual = *std::max_element(resid[ig].begin(), resid[ig].end());
      rep.rows.push_back(std::move(row));
    }
  }
  for (std::size_t ig = 0; ig < ng; ++ig) {
    bool dec = s.scales.size() > 1;
    double prev = 0.0;
    bool first = true;
    for (const auto& row : rep.rows) {
      if (row.G != s.test_functions[ig]) continue;
      if (!first) dec = dec && row.summary.mean < prev;
      prev = row.summary.mean;
      first = false;
    }
    rep.decreasing[s.test_functions[ig]] = dec;
  }
  return rep;
}

}  // namespace zrpperc
