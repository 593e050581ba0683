#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <tuple>

#include "stats.hpp"
#include "zrpperc/zrpperc.hpp"

using namespace zrpperc;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("zrpperc_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentSpec small_spec() {
  return parse_experiment(R"(
[environment]
law = bernoulli
p = 0.7
seed = 11

[dynamics]
rate = indicator
profile = smoothstep:1,0.5,3
scales = 16,32
times = 0,0.005,0.01
replicas = 3
seed = 5

[observables]
test_functions = cos:1,1,0|bump:1,0.5,0.5,0.3
ells = 1,2

[homogenization]
sigma = 0.6
m_hat = 0.99

[pde]
grid = 32
)");
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, DefaultsAreRecorded) {
  auto s = parse_experiment("[dynamics]\nscales = 8\n");
  auto r = s.resolved();
  EXPECT_EQ(r.at("pde.grid"), "128");
  EXPECT_EQ(r.at("environment.p"), "0.7");
  EXPECT_EQ(r.at("environment.side"), "N");
  EXPECT_EQ(r.at("dynamics.scales"), "8");
  EXPECT_EQ(r.at("observables.epsilon"), "0.1");
  EXPECT_EQ(r.size(), 27u);
}

TEST(Config, ParsesEverySection) {
  auto s = small_spec();
  EXPECT_EQ(s.scales, (std::vector<int>{16, 32}));
  EXPECT_EQ(s.times, (std::vector<double>{0, 0.005, 0.01}));
  EXPECT_EQ(s.test_functions.size(), 2u);
  EXPECT_EQ(s.replicas, 3);
  EXPECT_EQ(*s.sigma, 0.6);
  EXPECT_EQ(s.grid, 32);
  EXPECT_EQ(s.env_seed, 11u);
}

TEST(Config, RejectsInvalidSettings) {
  const std::vector<std::string> bad = {
      "[dynamics]\nscales = 16,24\n[environment]\nside = 32\n",  // 24 does not divide 32
      "[dynamics]\nrate = quadratic\n",
      "[dynamics]\nprofile = wave:1\n",
      "[observables]\ntest_functions = cos:1\n",
      "[dynamics]\nreplicas = zero\n",
      "[dynamics]\ntimes = 0.1,0.05\n",
      "[dynamics]\nscales = 32,16\n",
      "[environment]\nlaw = gamma\n",
      "[environment]\np = 1.5\n",
      "[environment]\nboundary = free\n",
      "[environment]\ncolour = blue\n",
      "[extras]\nx = 1\n",
      "[homogenization]\nm_hat = 1.5\n",
      "[observables]\nepsilon = 0.7\n",
      "[dynamics\n",
  };
  for (const auto& text : bad) EXPECT_THROW(parse_experiment(text), ValidationError) << text;
}

TEST(Config, SideMustBeDivisibleByEveryScale) {
  auto s = parse_experiment("[environment]\nside = 64\n[dynamics]\nscales = 16,32,64\n");
  EXPECT_EQ(s.periods(16), 4);
  EXPECT_EQ(s.periods(64), 1);
}

TEST(Config, LoadsFromFileRelativeToItsDirectory) {
  auto dir = scratch("load");
  std::ofstream(dir / "exp.ini") << "[homogenization]\ncache = d.json\n";
  auto s = load_experiment(dir / "exp.ini");
  EXPECT_EQ(s.resolve_path(s.cache), dir / "d.json");
  EXPECT_THROW(load_experiment(dir / "missing.ini"), ValidationError);
}

// ---------------------------------------------------------------------------
// Homogenization inputs

TEST(Homogenization, MissingCacheInstructsToRunEffectiveD) {
  auto s = parse_experiment("[environment]\np = 0.7\n");
  try {
    resolve_homogenization(s);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("effective-d"), std::string::npos);
  }
  s.cache = "/nonexistent/cache.json";
  EXPECT_THROW(resolve_homogenization(s), ValidationError);
}

TEST(Homogenization, FullLatticeIsExact) {
  auto s = parse_experiment("[environment]\np = 1\n");
  auto h = resolve_homogenization(s);
  EXPECT_EQ(h.sigma, 1.0);
  EXPECT_EQ(h.m, 1.0);
}

TEST(Homogenization, CacheRoundTrip) {
  auto dir = scratch("cache");
  auto ens = run_effective_d(BondLaw::bernoulli(0.8), {32, 32}, Boundary::periodic, {1, 2, 3}, "variational");
  write_atomic(dir / "d.json", dump_json(to_json(ens)));
  auto s = parse_experiment("[environment]\np = 0.8\n[homogenization]\ncache = d.json\n", dir);
  auto h = resolve_homogenization(s);
  EXPECT_EQ(h.sigma, ens.sigma);
  EXPECT_EQ(h.m, ens.m_hat);
  s.p = 0.7;
  EXPECT_THROW(resolve_homogenization(s), ValidationError);
}

TEST(EffectiveD, RecordsCarryRequiredFields) {
  auto ens = run_effective_d(BondLaw::bernoulli(1.0), {16, 16}, Boundary::periodic, {4, 5}, "variational");
  EXPECT_NEAR(ens.sigma, 1.0, 1e-12);
  EXPECT_EQ(ens.m_hat, 1.0);
  auto j = to_json(ens);
  ASSERT_EQ(j["records"].size(), 2u);
  for (const char* key : {"matrix", "method", "L", "p", "seed", "residual"}) EXPECT_TRUE(j["records"][0].contains(key)) << key;
  EXPECT_EQ(j["records"][1]["seed"], 5);
  EXPECT_THROW(run_effective_d(BondLaw::bernoulli(1.0), {8, 8}, Boundary::periodic, {1}, "spectral"), ValidationError);
}

TEST(EffectiveD, MsdCalibratesOnUnitLattice) {
  MsdOptions o{4000, 100.0, 9};
  auto ens = run_effective_d(BondLaw::bernoulli(1.0), {64, 64}, Boundary::periodic, {1}, "msd", o);
  const auto& D = ens.records[0].D;
  EXPECT_NEAR(ens.sigma, 1.0, 4.0 * std::hypot(D.stderr_matrix[0], D.stderr_matrix[3]) / 2.0);
}

// ---------------------------------------------------------------------------
// Output

TEST(Output, AtomicWriteLeavesNoTemporary) {
  auto dir = scratch("atomic");
  write_atomic(dir / "sub" / "a.txt", "hello");
  write_atomic(dir / "sub" / "a.txt", "again");
  EXPECT_EQ(slurp(dir / "sub" / "a.txt"), "again");
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir / "sub")) {
    (void)e;
    ++n;
  }
  EXPECT_EQ(n, 1u);
}

TEST(Output, SummaryInterval) {
  auto s = summarize({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_NEAR(s.ci_high - s.mean, 3.182446305284263 * s.se, 1e-9);
  auto one = summarize({7.0});
  EXPECT_EQ(one.se, 0.0);
  EXPECT_EQ(one.ci_low, 7.0);
}

TEST(Output, ParallelForPropagatesErrors) {
  std::vector<int> hit(50, 0);
  parallel_for(50, 3, [&](std::size_t i) { hit[i] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 50);
  EXPECT_THROW(parallel_for(10, 2, [](std::size_t i) {
                 if (i == 7) throw SolverError("boom");
               }),
               SolverError);
}

// ---------------------------------------------------------------------------
// Hydrodynamic experiment

TEST(Hydro, ReportIsConsistentAndCoversTheCrossProduct) {
  auto s = small_spec();
  auto rep = run_hydrodynamic_experiment(s);
  auto j = Json::parse(dump_json(to_json(rep)));
  std::set<std::tuple<int, double, std::string>> seen;
  for (const auto& row : j["rows"]) {
    const double mean = row["empirical_mean"], pred = row["prediction"], gap = row["gap"];
    EXPECT_EQ(gap, std::abs(mean - pred));
    EXPECT_GE(gap, 0.0);
    EXPECT_EQ(row["replica_values"].size(), static_cast<std::size_t>(s.replicas));
    seen.insert({row["N"].get<int>(), row["t"].get<double>(), row["G"].get<std::string>()});
  }
  std::set<std::tuple<int, double, std::string>> expect;
  for (int N : s.scales)
    for (double t : s.times)
      for (const auto& G : s.test_functions) expect.insert({N, t, G});
  EXPECT_EQ(seen, expect);
  EXPECT_EQ(j["rows"].size(), expect.size());
  EXPECT_EQ(j["config"]["dynamics.profile"], "smoothstep:1,0.5,3");
  EXPECT_EQ(rep.density_l1.size(), s.scales.size() * s.times.size());
  EXPECT_EQ(rep.replacement.size(), s.scales.size() * s.times.size() * 2);
}

TEST(Hydro, ByteIdenticalAcrossRunsAndThreadCounts) {
  auto s = small_spec();
  auto a = dump_json(to_json(run_hydrodynamic_experiment(s)));
  auto b = dump_json(to_json(run_hydrodynamic_experiment(s)));
  s.threads = 3;
  auto c = to_json(run_hydrodynamic_experiment(s));
  c["config"]["dynamics.threads"] = "1";
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, dump_json(c));
  auto d1 = scratch("det1"), d2 = scratch("det2");
  s.threads = 1;
  auto rep = run_hydrodynamic_experiment(s);
  auto f1 = write_report(d1, rep);
  auto f2 = write_report(d2, rep);
  ASSERT_EQ(f1.size(), 4u);
  for (std::size_t i = 0; i < f1.size(); ++i) EXPECT_EQ(slurp(f1[i]), slurp(f2[i]));
}

TEST(Hydro, ConstantProfileIsStationary) {
  auto s = parse_experiment(R"(
[environment]
p = 0.7
[dynamics]
profile = const:0.8
scales = 32
times = 0,0.01
replicas = 12
[observables]
test_functions = const:1|cos:1,1,1
[homogenization]
sigma = 0.6
m_hat = 0.99
[pde]
grid = 16
)");
  auto rep = run_hydrodynamic_experiment(s);
  for (const auto& row : rep.rows) {
    const double expect = row.G == "const:1" ? 0.8 : 0.0;
    EXPECT_NEAR(row.prediction, expect, 1e-12);
    EXPECT_LE(row.gap, 4.0 * row.empirical_se + 0.01 * 0.8) << row.G << " t=" << row.t;
  }
}

TEST(Hydro, InitialSamplingErrorScalesLikeCentralLimit) {
  auto s = parse_experiment(R"(
[environment]
p = 1
[dynamics]
rate = linear
profile = trig:1,0.5,1,0
scales = 16,32,64,128
times = 0
replicas = 24
[observables]
test_functions = cos:1,1,0
[pde]
grid = 32
)");
  auto rep = run_hydrodynamic_experiment(s);
  std::vector<double> lx, ly;
  for (const auto& row : rep.rows) {
    lx.push_back(std::log(row.N));
    ly.push_back(std::log(row.mean_abs_gap));
  }
  EXPECT_NEAR(testsupport::slope(lx, ly), -1.0, 0.3);
}

TEST(Hydro, FullLatticeLinearGapsShrink) {
  auto s = parse_experiment(R"(
[environment]
p = 1
[dynamics]
rate = linear
profile = gauss:0.5,1,0.15
scales = 16,32,64
times = 0.02
replicas = 8
[observables]
test_functions = cos:1,1,0|bump:1,0.5,0.5,0.3
[pde]
grid = 64
)");
  auto rep = run_hydrodynamic_experiment(s);
  for (const auto& G : s.test_functions) {
    std::vector<double> gaps;
    for (const auto& row : rep.rows)
      if (row.G == G) gaps.push_back(row.mean_abs_gap);
    ASSERT_EQ(gaps.size(), 3u);
    EXPECT_LT(gaps[1], gaps[0]) << G;
    EXPECT_LT(gaps[2], gaps[1]) << G;
  }
}

// ---------------------------------------------------------------------------
// Bulk experiment

TEST(Bulk, FiniteClustersConserveAndTrapBoundHolds) {
  auto s = small_spec();
  s.profile = "step:1.5,0.5";
  auto rep = run_bulk_experiment(s);
  EXPECT_GT(rep.finite_clusters_checked, 0u);
  EXPECT_EQ(rep.conservation_violations, 0u);
  EXPECT_GT(rep.diameter_gamma, 0.0);
  ASSERT_EQ(rep.traps.size(), s.scales.size() * s.replicas * s.times.size() * s.test_functions.size());
  for (const auto& t : rep.traps) {
    EXPECT_TRUE(t.holds);
    EXPECT_LE(t.change, t.bound_observed * (1 + 1e-12) + 1e-15);
    if (t.t == 0.0) { EXPECT_EQ(t.change, 0.0); }
  }
  for (const auto& row : rep.rows) {
    ASSERT_TRUE(row.naive_prediction.has_value());
    EXPECT_EQ(*row.naive_gap, std::abs(row.empirical_mean - *row.naive_prediction));
    if (row.t == 0.0) { EXPECT_NEAR(row.prediction, *row.naive_prediction, 1e-12); }
  }
  EXPECT_EQ(rep.giant_rows.size(), rep.rows.size());
  auto j = to_json(rep);
  EXPECT_EQ(j["conservation"]["violations"], 0);
}

TEST(Bulk, NeedsFiniteClusters) {
  auto s = small_spec();
  s.p = 1.0;
  EXPECT_THROW(run_bulk_experiment(s), ValidationError);
}

// ---------------------------------------------------------------------------
// Replacement diagnostic

TEST(Replacement, EmptyTrajectoryGivesZeroLadder) {
  auto s = small_spec();
  s.profile = "const:0";
  auto rep = run_replacement_diagnostic(s);
  for (const auto& lad : rep.ladders) {
    EXPECT_TRUE(lad.identically_zero);
    EXPECT_FALSE(lad.strictly_decreasing);
    for (const auto& e : lad.entries) EXPECT_EQ(e.summary.mean, 0.0);
  }
}

TEST(Replacement, WindowSmallerThanBlockIsConfigurationError) {
  auto s = small_spec();
  s.ells = {1, 8};
  EXPECT_THROW(run_replacement_diagnostic(s), ValidationError);
}

TEST(Replacement, LinearRateVanishesIdentically) {
  auto s = small_spec();
  s.rate = "linear";
  s.profile = "const:1";
  auto rep = run_replacement_diagnostic(s);
  for (const auto& lad : rep.ladders) EXPECT_TRUE(lad.identically_zero);
  EXPECT_FALSE(rep.warnings.empty());
}

TEST(Replacement, StationaryLadderDecreases) {
  auto s = parse_experiment(R"(
[environment]
p = 0.7
[dynamics]
rate = indicator
profile = const:0.8
scales = 64
times = 0,0.002,0.004
replicas = 4
[observables]
ells = 1,2,4,8
)");
  auto rep = run_replacement_diagnostic(s);
  ASSERT_EQ(rep.ladders.size(), 1u);
  EXPECT_TRUE(rep.ladders[0].strictly_decreasing);
  EXPECT_FALSE(rep.ladders[0].identically_zero);
}

// ---------------------------------------------------------------------------
// Corrected-measure diagnostic

TEST(Corrected, ConstantFunctionAndEmptyConfigurationGiveZero) {
  auto s = small_spec();
  s.test_functions = {"const:2"};
  auto rep = run_corrected_measure_diagnostic(s);
  for (const auto& r : rep.rows) EXPECT_LT(r.summary.mean, 1e-9);
  s.test_functions = {"cos:1,1,0"};
  s.profile = "const:0";
  rep = run_corrected_measure_diagnostic(s);
  for (const auto& r : rep.rows) EXPECT_EQ(r.summary.mean, 0.0);
}

TEST(Corrected, FullLatticeGapDecreases) {
  auto s = parse_experiment(R"(
[environment]
p = 1
[dynamics]
rate = indicator
profile = smoothstep:1,0.5,3
scales = 16,32,64
times = 0,0.005,0.01
replicas = 3
[observables]
test_functions = cos:1,1,0+sin:0.5,1,1
)");
  auto rep = run_corrected_measure_diagnostic(s);
  EXPECT_TRUE(rep.decreasing.at("cos:1,1,0+sin:0.5,1,1"));
  for (const auto& r : rep.rows) EXPECT_LE(r.max_residual, 1e-10);
  auto d = scratch("corr");
  auto files = write_report(d, rep);
  EXPECT_EQ(files.size(), 2u);
  EXPECT_NE(slurp(files[1]).find("N,G,sup_gap_mean"), std::string::npos);
}
