#pragma once

// Experiment configuration read from INI files:
//
//   [environment]  law, p, c, c_low, c0, dim, boundary, seed, side
//   [dynamics]     rate, profile, scales, times, replicas, seed, threads
//   [observables]  test_functions (separated by '|'), epsilon, ells
//   [homogenization] sigma, m_hat, cache, lambda
//   [pde]          grid, cfl
//   [bulk]         calibration_fields
//   [output]       dir
//
// Every key has a default; resolved() lists all of them so reports can
// record exactly what ran.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "zrpperc/environment.hpp"
#include "zrpperc/errors.hpp"
#include "zrpperc/functions.hpp"
#include "zrpperc/rate_function.hpp"

namespace zrpperc {

/// Shortest round-trip decimal form of a double.
inline std::string format_number(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& s) {
  double v = 0.0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ValidationError(key + ": '" + s + "' is not a number");
  return v;
}

inline long long parse_int(const std::string& key, const std::string& s) {
  long long v = 0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ValidationError(key + ": '" + s + "' is not an integer");
  return v;
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto t = trim(s);
  auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ValidationError(key + ": '" + s + "' is not a seed");
  return v;
}

inline std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string tok; std::getline(ss, tok, sep);) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

template <class T>
std::string join(const std::vector<T>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    if constexpr (std::is_same_v<T, std::string>) out += v[i];
    else if constexpr (std::is_floating_point_v<T>) out += format_number(v[i]);
    else out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace detail

inline BondLaw make_law(const std::string& name, double p, double c, double c_low, double c0) {
  if (name == "bernoulli") return BondLaw::bernoulli(p, c, c0);
  if (name == "uniform") return BondLaw::uniform(c0 > 0.0 ? c0 : c);
  if (name == "two_point") return BondLaw::two_point(p, c, c_low, c0);
  throw ValidationError("unknown bond law '" + name + "' (expected bernoulli|uniform|two_point)");
}

struct ExperimentSpec {
  // environment
  std::string law = "bernoulli";
  double p = 0.7;
  double c = 1.0;
  double c_low = 0.0;
  double c0 = 0.0;  // 0: same as c
  int dim = 2;
  Boundary boundary = Boundary::periodic;
  std::uint64_t env_seed = 1;
  int side = 0;  // 0: side equals the scale N
  // dynamics
  std::string rate = "indicator";
  std::string profile = "const:1";
  std::vector<int> scales = {32};
  std::vector<double> times = {0.01};
  int replicas = 4;
  std::uint64_t seed = 1;
  int threads = 1;
  // observables
  std::vector<std::string> test_functions = {"cos:1,1,0"};
  double epsilon = 0.1;
  std::vector<int> ells = {1, 2, 4};
  // homogenization
  std::optional<double> sigma;
  std::optional<double> m_hat;
  std::string cache;
  double lambda = 1.0;
  // pde
  int grid = 128;
  double cfl = 0.9;
  // bulk
  int calibration_fields = 16;
  // output
  std::string output_dir = ".";
  std::filesystem::path base_dir = ".";  // directory of the config file

  BondLaw bond_law() const { return make_law(law, p, c, c_low, c0); }
  JumpRateFn rate_fn() const { return JumpRateFn::parse(rate); }
  Profile initial_profile() const { return Profile::parse(profile, dim); }
  std::vector<TestFunction> functions() const {
    std::vector<TestFunction> out;
    for (const auto& s : test_functions) out.push_back(TestFunction::parse(s, dim));
    return out;
  }

  /// Lattice side used at scale N.
  int side_for(int N) const { return side > 0 ? side : N; }
  /// Copies of the unit torus per lattice direction at scale N.
  int periods(int N) const { return side_for(N) / N; }
  double max_time() const { return times.empty() ? 0.0 : times.back(); }

  std::filesystem::path resolve_path(const std::string& p) const {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base_dir / q;
  }

  void validate() const {
    try {
      bond_law().validate();
      rate_fn();
      initial_profile();
      functions();
    } catch (const ValidationError&) {
      throw;
    } catch (const Error& e) {
      throw ValidationError(e.what());
    } catch (const std::exception& e) {
      throw ValidationError(std::string("bad parameter: ") + e.what());
    }
    if (dim < 2) throw ValidationError("environment.dim must be at least 2");
    if (boundary != Boundary::periodic) throw ValidationError("experiments need a periodic environment");
    if (scales.empty()) throw ValidationError("dynamics.scales is empty");
    for (int N : scales) {
      if (N < 3) throw ValidationError("every scale N must be at least 3");
      if (side > 0 && side % N != 0)
        throw ValidationError("scale N=" + std::to_string(N) + " does not divide environment.side=" + std::to_string(side));
    }
    for (std::size_t i = 1; i < scales.size(); ++i)
      if (!(scales[i] > scales[i - 1])) throw ValidationError("dynamics.scales must be strictly increasing");
    if (times.empty()) throw ValidationError("dynamics.times is empty");
    for (std::size_t i = 0; i < times.size(); ++i) {
      if (!(times[i] >= 0.0)) throw ValidationError("observation times must be nonnegative");
      if (i > 0 && !(times[i] > times[i - 1])) throw ValidationError("observation times must be strictly increasing");
    }
    if (replicas < 1) throw ValidationError("dynamics.replicas must be positive");
    if (threads < 1) throw ValidationError("dynamics.threads must be positive");
    if (test_functions.empty()) throw ValidationError("observables.test_functions is empty");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ValidationError("observables.epsilon must lie in (0, 1/2)");
    for (int l : ells)
      if (l < 1) throw ValidationError("observables.ells must be positive");
    if (sigma && !(*sigma > 0.0)) throw ValidationError("homogenization.sigma must be positive");
    if (m_hat && !(*m_hat > 0.0 && *m_hat <= 1.0)) throw ValidationError("homogenization.m_hat must lie in (0, 1]");
    if (!(lambda > 0.0)) throw ValidationError("homogenization.lambda must be positive");
    if (grid < 3) throw ValidationError("pde.grid must be at least 3");
    if (!(cfl > 0.0 && cfl <= 1.0)) throw ValidationError("pde.cfl must lie in (0, 1]");
    if (calibration_fields < 1) throw ValidationError("bulk.calibration_fields must be positive");
  }

  /// Every setting, defaults included, as section.key -> value.
  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> m;
    m["environment.law"] = law;
    m["environment.p"] = format_number(p);
    m["environment.c"] = format_number(c);
    m["environment.c_low"] = format_number(c_low);
    m["environment.c0"] = format_number(bond_law().c0);
    m["environment.dim"] = std::to_string(dim);
    m["environment.boundary"] = to_string(boundary);
    m["environment.seed"] = std::to_string(env_seed);
    m["environment.side"] = side > 0 ? std::to_string(side) : "N";
    m["dynamics.rate"] = rate;
    m["dynamics.profile"] = profile;
    m["dynamics.scales"] = detail::join(scales, ",");
    m["dynamics.times"] = detail::join(times, ",");
    m["dynamics.replicas"] = std::to_string(replicas);
    m["dynamics.seed"] = std::to_string(seed);
    m["dynamics.threads"] = std::to_string(threads);
    m["observables.test_functions"] = detail::join(test_functions, "|");
    m["observables.epsilon"] = format_number(epsilon);
    m["observables.ells"] = detail::join(ells, ",");
    m["homogenization.sigma"] = sigma ? format_number(*sigma) : "";
    m["homogenization.m_hat"] = m_hat ? format_number(*m_hat) : "";
    m["homogenization.cache"] = cache;
    m["homogenization.lambda"] = format_number(lambda);
    m["pde.grid"] = std::to_string(grid);
    m["pde.cfl"] = format_number(cfl);
    m["bulk.calibration_fields"] = std::to_string(calibration_fields);
    m["output.dir"] = output_dir;
    return m;
  }
};

/// Parse an INI document. Unknown sections or keys are rejected.
inline ExperimentSpec parse_experiment(std::istream& in, const std::filesystem::path& base_dir = ".") {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> known = {
      {"environment", {"law", "p", "c", "c_low", "c0", "dim", "boundary", "seed", "side"}},
      {"dynamics", {"rate", "profile", "scales", "times", "replicas", "seed", "threads"}},
      {"observables", {"test_functions", "epsilon", "ells"}},
      {"homogenization", {"sigma", "m_hat", "cache", "lambda"}},
      {"pde", {"grid", "cfl"}},
      {"bulk", {"calibration_fields"}},
      {"output", {"dir"}},
  };
  ExperimentSpec s;
  s.base_dir = base_dir;
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw ValidationError("unknown config section [" + section + "]");
    for (const auto& [key, node] : body) {
      if (!it->second.count(key)) throw ValidationError("unknown config key " + section + "." + key);
      const std::string name = section + "." + key;
      const std::string v = detail::trim(node.get_value<std::string>());
      auto as_int = [&] { return static_cast<int>(detail::parse_int(name, v)); };
      auto as_double = [&] { return detail::parse_double(name, v); };
      if (name == "environment.law") s.law = v;
      else if (name == "environment.p") s.p = as_double();
      else if (name == "environment.c") s.c = as_double();
      else if (name == "environment.c_low") s.c_low = as_double();
      else if (name == "environment.c0") s.c0 = as_double();
      else if (name == "environment.dim") s.dim = as_int();
      else if (name == "environment.boundary") {
        try {
          s.boundary = parse_boundary(v);
        } catch (const Error& e) {
          throw ValidationError(e.what());
        }
      } else if (name == "environment.seed") s.env_seed = detail::parse_u64(name, v);
      else if (name == "environment.side") s.side = v == "N" ? 0 : as_int();
      else if (name == "dynamics.rate") s.rate = v;
      else if (name == "dynamics.profile") s.profile = v;
      else if (name == "dynamics.scales") {
        s.scales.clear();
        for (const auto& t : detail::split_list(v, ',')) s.scales.push_back(static_cast<int>(detail::parse_int(name, t)));
      } else if (name == "dynamics.times") {
        s.times.clear();
        for (const auto& t : detail::split_list(v, ',')) s.times.push_back(detail::parse_double(name, t));
      } else if (name == "dynamics.replicas") s.replicas = as_int();
      else if (name == "dynamics.seed") s.seed = detail::parse_u64(name, v);
      else if (name == "dynamics.threads") s.threads = as_int();
      else if (name == "observables.test_functions") s.test_functions = detail::split_list(v, '|');
      else if (name == "observables.epsilon") s.epsilon = as_double();
      else if (name == "observables.ells") {
        s.ells.clear();
        for (const auto& t : detail::split_list(v, ',')) s.ells.push_back(static_cast<int>(detail::parse_int(name, t)));
      } else if (name == "homogenization.sigma") s.sigma = as_double();
      else if (name == "homogenization.m_hat") s.m_hat = as_double();
      else if (name == "homogenization.cache") s.cache = v;
      else if (name == "homogenization.lambda") s.lambda = as_double();
      else if (name == "pde.grid") s.grid = as_int();
      else if (name == "pde.cfl") s.cfl = as_double();
      else if (name == "bulk.calibration_fields") s.calibration_fields = as_int();
      else if (name == "output.dir") s.output_dir = v;
    }
  }
  s.validate();
  return s;
}

inline ExperimentSpec parse_experiment(const std::string& text, const std::filesystem::path& base_dir = ".") {
  std::istringstream in(text);
  return parse_experiment(in, base_dir);
}

inline ExperimentSpec load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file " + path.string());
  return parse_experiment(in, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace zrpperc
