#pragma once

// Report records produced by the experiment drivers, their JSON and CSV
// renderings, and atomic file output.

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "zrpperc/config.hpp"
#include "zrpperc/errors.hpp"

namespace zrpperc {

using Json = nlohmann::json;

struct Summary {
  double mean = 0.0;
  double se = 0.0;
  double ci_low = 0.0;   // 95% Student-t interval
  double ci_high = 0.0;
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    const boost::math::students_t dist(static_cast<double>(v.size() - 1));
    const double q = boost::math::quantile(boost::math::complement(dist, 0.025));
    s.ci_low = s.mean - q * s.se;
    s.ci_high = s.mean + q * s.se;
  } else {
    s.ci_low = s.ci_high = s.mean;
  }
  return s;
}

/// One (N, t, G) comparison. `gap` is |empirical_mean - prediction|;
/// `mean_abs_gap` averages the per-replica gaps.
struct ComparisonRow {
  int N = 0;
  double t = 0.0;
  std::string G;
  std::vector<double> replica_values;
  double empirical_mean = 0.0;
  double empirical_se = 0.0;
  double prediction = 0.0;
  double gap = 0.0;
  double mean_abs_gap = 0.0;
  std::optional<double> naive_prediction;  // bulk runs: all particles mobile
  std::optional<double> naive_gap;
  std::optional<double> naive_mean_abs_gap;

  void finish() {
    const auto s = summarize(replica_values);
    empirical_mean = s.mean;
    empirical_se = s.se;
    gap = std::abs(empirical_mean - prediction);
    mean_abs_gap = 0.0;
    for (double v : replica_values) mean_abs_gap += std::abs(v - prediction);
    mean_abs_gap /= static_cast<double>(replica_values.size());
    if (naive_prediction) {
      naive_gap = std::abs(empirical_mean - *naive_prediction);
      double a = 0.0;
      for (double v : replica_values) a += std::abs(v - *naive_prediction);
      naive_mean_abs_gap = a / static_cast<double>(replica_values.size());
    }
  }
};

/// Per-(N, t, ell) summary of a replica statistic.
struct LadderRow {
  int N = 0;
  double t = 0.0;
  int ell = 0;
  std::vector<double> replica_values;
  Summary summary;
  std::size_t clamped = 0;
};

/// Trapped-mass check for one replica, time and test function:
/// |off-giant pi_t[G] - off-giant pi_0[G]| <= bound.
struct TrapRow {
  int N = 0;
  int replica = 0;
  double t = 0.0;
  std::string G;
  double change = 0.0;
  double bound = 0.0;         // fitted diameter law
  double bound_observed = 0.0; // largest diameter in this replica
  double off_giant_mass = 0.0;
  bool holds = true;
};

struct ComparisonReport {
  std::string experiment;
  std::map<std::string, std::string> config;
  double sigma = 0.0;
  double m = 0.0;
  std::string homogenization_source;
  int replicas = 0;
  std::vector<ComparisonRow> rows;
  std::vector<LadderRow> density_l1;
  std::vector<LadderRow> replacement;
  // bulk runs
  std::vector<ComparisonRow> giant_rows;
  std::vector<TrapRow> traps;
  std::size_t conservation_violations = 0;
  std::size_t finite_clusters_checked = 0;
  double diameter_gamma = 0.0;
  std::vector<std::string> warnings;
};

struct ReplacementLadder {
  int N = 0;
  std::vector<LadderRow> entries;  // one per ell, time-averaged
  bool strictly_decreasing = false;
  bool identically_zero = false;
};

struct ReplacementReport {
  std::map<std::string, std::string> config;
  int replicas = 0;
  std::vector<ReplacementLadder> ladders;
  std::vector<std::string> warnings;
};

struct CorrectedRow {
  int N = 0;
  std::string G;
  std::vector<double> sup_gaps;  // per replica
  Summary summary;
  double function_gap_l2 = 0.0;  // replica mean of ||G_N - G||
  double function_gap_l1 = 0.0;
  double max_residual = 0.0;
};

struct CorrectedReport {
  std::map<std::string, std::string> config;
  double lambda = 1.0;
  double sigma = 0.0;
  std::string homogenization_source;
  int replicas = 0;
  std::vector<CorrectedRow> rows;
  std::map<std::string, bool> decreasing;  // per G, along the N ladder
  std::vector<std::string> warnings;
};

// ---------------------------------------------------------------------------
// JSON

inline Json summary_json(const Summary& s) {
  return Json{{"mean", s.mean}, {"se", s.se}, {"ci_low", s.ci_low}, {"ci_high", s.ci_high}};
}

inline Json row_json(const ComparisonRow& r) {
  Json j{{"N", r.N},
         {"t", r.t},
         {"G", r.G},
         {"replica_values", r.replica_values},
         {"empirical_mean", r.empirical_mean},
         {"empirical_se", r.empirical_se},
         {"prediction", r.prediction},
         {"gap", r.gap},
         {"mean_abs_gap", r.mean_abs_gap}};
  if (r.naive_prediction) {
    j["naive_prediction"] = *r.naive_prediction;
    j["naive_gap"] = *r.naive_gap;
    j["naive_mean_abs_gap"] = *r.naive_mean_abs_gap;
  }
  return j;
}

inline Json ladder_json(const LadderRow& r) {
  return Json{{"N", r.N},          {"t", r.t},
              {"ell", r.ell},      {"replica_values", r.replica_values},
              {"summary", summary_json(r.summary)}, {"clamped", r.clamped}};
}

inline Json to_json(const ComparisonReport& r) {
  Json j;
  j["experiment"] = r.experiment;
  j["config"] = r.config;
  j["homogenization"] = {{"sigma", r.sigma}, {"m", r.m}, {"source", r.homogenization_source}};
  j["replicas"] = r.replicas;
  j["rows"] = Json::array();
  for (const auto& x : r.rows) j["rows"].push_back(row_json(x));
  j["density_l1"] = Json::array();
  for (const auto& x : r.density_l1) j["density_l1"].push_back(ladder_json(x));
  j["replacement"] = Json::array();
  for (const auto& x : r.replacement) j["replacement"].push_back(ladder_json(x));
  if (r.experiment == "bulk") {
    j["giant_rows"] = Json::array();
    for (const auto& x : r.giant_rows) j["giant_rows"].push_back(row_json(x));
    j["traps"] = Json::array();
    for (const auto& x : r.traps)
      j["traps"].push_back({{"N", x.N}, {"replica", x.replica}, {"t", x.t}, {"G", x.G}, {"change", x.change},
                            {"bound", x.bound}, {"bound_observed", x.bound_observed},
                            {"off_giant_mass", x.off_giant_mass}, {"holds", x.holds}});
    j["conservation"] = {{"finite_clusters_checked", r.finite_clusters_checked},
                         {"violations", r.conservation_violations}};
    j["diameter_gamma"] = r.diameter_gamma;
  }
  j["warnings"] = r.warnings;
  return j;
}

inline Json to_json(const ReplacementReport& r) {
  Json j;
  j["experiment"] = "replacement";
  j["config"] = r.config;
  j["replicas"] = r.replicas;
  j["ladders"] = Json::array();
  for (const auto& l : r.ladders) {
    Json e{{"N", l.N}, {"strictly_decreasing", l.strictly_decreasing}, {"identically_zero", l.identically_zero}};
    e["entries"] = Json::array();
    for (const auto& x : l.entries) e["entries"].push_back(ladder_json(x));
    j["ladders"].push_back(e);
  }
  j["warnings"] = r.warnings;
  return j;
}

inline Json to_json(const CorrectedReport& r) {
  Json j;
  j["experiment"] = "corrected";
  j["config"] = r.config;
  j["lambda"] = r.lambda;
  j["homogenization"] = {{"sigma", r.sigma}, {"source", r.homogenization_source}};
  j["replicas"] = r.replicas;
  j["rows"] = Json::array();
  for (const auto& x : r.rows)
    j["rows"].push_back({{"N", x.N}, {"G", x.G}, {"sup_gaps", x.sup_gaps}, {"summary", summary_json(x.summary)},
                         {"function_gap_l2", x.function_gap_l2}, {"function_gap_l1", x.function_gap_l1},
                         {"max_residual", x.max_residual}});
  j["decreasing"] = r.decreasing;
  j["warnings"] = r.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
  return out + "\"";
}

}  // namespace detail

inline std::string rows_csv(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << "N,t,G,empirical_mean,empirical_se,prediction,gap,mean_abs_gap,naive_prediction,naive_gap\n";
  for (const auto& r : rows) {
    os << r.N << ',' << format_number(r.t) << ',' << detail::csv_field(r.G) << ',' << format_number(r.empirical_mean)
       << ',' << format_number(r.empirical_se) << ',' << format_number(r.prediction) << ',' << format_number(r.gap)
       << ',' << format_number(r.mean_abs_gap) << ',';
    if (r.naive_prediction) os << format_number(*r.naive_prediction) << ',' << format_number(*r.naive_gap);
    else os << ',';
    os << '\n';
  }
  return os.str();
}

inline std::string ladder_csv(const std::vector<LadderRow>& rows) {
  std::ostringstream os;
  os << "N,t,ell,mean,se,ci_low,ci_high,clamped\n";
  for (const auto& r : rows)
    os << r.N << ',' << format_number(r.t) << ',' << r.ell << ',' << format_number(r.summary.mean) << ','
       << format_number(r.summary.se) << ',' << format_number(r.summary.ci_low) << ','
       << format_number(r.summary.ci_high) << ',' << r.clamped << '\n';
  return os.str();
}

inline std::string traps_csv(const std::vector<TrapRow>& rows) {
  std::ostringstream os;
  os << "N,replica,t,G,change,bound,bound_observed,off_giant_mass,holds\n";
  for (const auto& r : rows)
    os << r.N << ',' << r.replica << ',' << format_number(r.t) << ',' << detail::csv_field(r.G) << ','
       << format_number(r.change) << ',' << format_number(r.bound) << ',' << format_number(r.bound_observed) << ','
       << format_number(r.off_giant_mass) << ',' << (r.holds ? 1 : 0) << '\n';
  return os.str();
}

inline std::string corrected_csv(const std::vector<CorrectedRow>& rows) {
  std::ostringstream os;
  os << "N,G,sup_gap_mean,sup_gap_se,function_gap_l2,function_gap_l1,max_residual\n";
  for (const auto& r : rows)
    os << r.N << ',' << detail::csv_field(r.G) << ',' << format_number(r.summary.mean) << ','
       << format_number(r.summary.se) << ',' << format_number(r.function_gap_l2) << ','
       << format_number(r.function_gap_l1) << ',' << format_number(r.max_residual) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Output

/// Write to a sibling temporary file, then rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw ValidationError("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw ValidationError("cannot rename onto " + path.string() + ": " + ec.message());
  }
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

/// dir/stem.json plus dir/stem_<name>.csv for every table.
inline std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const std::string& stem,
                                                       const Json& json,
                                                       const std::map<std::string, std::string>& tables) {
  std::vector<std::filesystem::path> written;
  written.push_back(dir / (stem + ".json"));
  write_atomic(written.back(), dump_json(json));
  for (const auto& [name, csv] : tables) {
    written.push_back(dir / (stem + "_" + name + ".csv"));
    write_atomic(written.back(), csv);
  }
  return written;
}

inline std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const ComparisonReport& r) {
  std::map<std::string, std::string> tables{
      {"rows", rows_csv(r.rows)}, {"density", ladder_csv(r.density_l1)}, {"replacement", ladder_csv(r.replacement)}};
  if (r.experiment == "bulk") {
    tables["giant"] = rows_csv(r.giant_rows);
    tables["traps"] = traps_csv(r.traps);
  }
  return write_report(dir, r.experiment, to_json(r), tables);
}

inline std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const ReplacementReport& r) {
  std::vector<LadderRow> all;
  for (const auto& l : r.ladders) all.insert(all.end(), l.entries.begin(), l.entries.end());
  return write_report(dir, "replacement", to_json(r), {{"ladder", ladder_csv(all)}});
}

inline std::vector<std::filesystem::path> write_report(const std::filesystem::path& dir, const CorrectedReport& r) {
  return write_report(dir, "corrected", to_json(r), {{"rows", corrected_csv(r.rows)}});
}

}  // namespace zrpperc
