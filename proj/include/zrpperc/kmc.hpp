#pragma once

// Rejection-free event-driven simulation of the zero range process with
// generator N^2 L: a particle leaves x toward a neighbor y at rate
// N^2 g(eta(x)) w(x,y).

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "zrpperc/environment.hpp"
#include "zrpperc/errors.hpp"
#include "zrpperc/particles.hpp"
#include "zrpperc/rate_function.hpp"
#include "zrpperc/rng.hpp"

namespace zrpperc {

struct Snapshot {
  double time = 0.0;  // macroscopic
  std::uint64_t event_count = 0;
  ParticleConfig config;
};

class ZeroRangeSimulator {
 public:
  ZeroRangeSimulator(const SiteGraph& graph, JumpRateFn rate, ParticleConfig config, double N, std::uint64_t seed)
      : graph_(&graph),
        rate_(std::move(rate)),
        config_(std::move(config)),
        speedup_(N * N),
        rng_(derive_key(seed, 0x6b6d63ULL)),
        tree_(graph.size()) {
    if (config_.size() != graph.size()) throw DimensionError("configuration does not match the graph");
    if (!(N > 0.0)) throw ParameterError("scale N must be positive");
    for (auto v : config_.occupancy)
      if (v < 0) throw ParameterError("negative occupancy");
    tree_.assign(exit_rates());
  }

  double time() const noexcept { return time_; }
  std::uint64_t events() const noexcept { return events_; }
  const ParticleConfig& config() const noexcept { return config_; }
  const SumTree& rate_index() const noexcept { return tree_; }

  /// Exit rates g(eta(x)) W(x), recomputed from scratch.
  std::vector<double> exit_rates() const {
    std::vector<double> r(graph_->size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rate_(config_.occupancy[i]) * graph_->total_weight[i];
    return r;
  }

  /// Rebuild the sum tree from occupancies and compare node by node.
  bool rate_index_consistent() const {
    SumTree fresh(graph_->size());
    fresh.assign(exit_rates());
    return fresh.nodes() == tree_.nodes();
  }

  /// Advance to macroscopic time t. A waiting time that overshoots t is
  /// discarded, which is exact by memorylessness.
  void advance_to(double t) {
    while (time_ < t) {
      const double total = tree_.total();
      if (!(total > 0.0)) {
        time_ = t;
        return;
      }
      const double dt = rng_.exponential(speedup_ * total);
      if (time_ + dt >= t) {
        time_ = t;
        return;
      }
      time_ += dt;
      fire(total);
    }
  }

  /// Perform exactly one event without touching the clock (used by
  /// property tests that count events rather than time).
  void step() {
    const double total = tree_.total();
    if (total > 0.0) fire(total);
  }

 private:
  void fire(double total) {
    const std::size_t x = tree_.find(rng_.uniform() * total);
    const auto begin = graph_->offsets[x], end = graph_->offsets[x + 1];
    const double u = rng_.uniform() * graph_->total_weight[x];
    auto it = std::upper_bound(graph_->cumulative.begin() + static_cast<std::ptrdiff_t>(begin),
                               graph_->cumulative.begin() + static_cast<std::ptrdiff_t>(end), u);
    auto e = static_cast<std::size_t>(it - graph_->cumulative.begin());
    if (e >= end) e = end - 1;
    const std::size_t y = graph_->nbr[e];
    auto& ex = config_.occupancy[x];
    auto& ey = config_.occupancy[y];
    if (ey == std::numeric_limits<std::int32_t>::max()) throw SolverError("occupancy overflow");
    --ex;
    ++ey;
    tree_.set(x, rate_(ex) * graph_->total_weight[x]);
    tree_.set(y, rate_(ey) * graph_->total_weight[y]);
    ++events_;
  }

  const SiteGraph* graph_;
  JumpRateFn rate_;
  ParticleConfig config_;
  double speedup_;
  CounterRng rng_;
  SumTree tree_;
  double time_ = 0.0;
  std::uint64_t events_ = 0;
};

/// Run to t_end and record the configuration at each requested
/// macroscopic time (sorted, within [0, t_end]).
inline std::vector<Snapshot> simulate_kmc(const SiteGraph& graph, const ParticleConfig& config, const JumpRateFn& rate,
                                          double N, double t_end, std::vector<double> observation_times,
                                          std::uint64_t seed) {
  if (!(t_end >= 0.0)) throw ParameterError("t_end must be nonnegative");
  std::sort(observation_times.begin(), observation_times.end());
  for (double t : observation_times)
    if (t < 0.0 || t > t_end) throw ParameterError("observation times must lie in [0, t_end]");
  ZeroRangeSimulator sim(graph, rate, config, N, seed);
  std::vector<Snapshot> out;
  out.reserve(observation_times.size());
  for (double t : observation_times) {
    sim.advance_to(t);
    out.push_back({t, sim.events(), sim.config()});
  }
  sim.advance_to(t_end);
  return out;
}

// ---------------------------------------------------------------------------
// Snapshot file: char[8] "ZRPSNAP1" | f64 N | f64 time | u64 seed |
//   u64 event_count | u64 n | i32 occupancy[n]   (little-endian)

inline constexpr char kSnapshotMagic[8] = {'Z', 'R', 'P', 'S', 'N', 'A', 'P', '1'};

inline void save_snapshot(std::ostream& os, const Snapshot& s, double N, std::uint64_t seed) {
  detail::require_little_endian();
  os.write(kSnapshotMagic, 8);
  detail::put(os, N);
  detail::put(os, s.time);
  detail::put<std::uint64_t>(os, seed);
  detail::put<std::uint64_t>(os, s.event_count);
  detail::put<std::uint64_t>(os, s.config.occupancy.size());
  os.write(reinterpret_cast<const char*>(s.config.occupancy.data()),
           static_cast<std::streamsize>(s.config.occupancy.size() * sizeof(std::int32_t)));
  if (!os) throw FormatError("failed writing snapshot");
}

struct SnapshotRecord {
  double N = 0.0;
  std::uint64_t seed = 0;
  Snapshot snapshot;
};

inline SnapshotRecord load_snapshot(std::istream& is) {
  detail::require_little_endian();
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kSnapshotMagic, 8) != 0) throw FormatError("not a snapshot file");
  SnapshotRecord r;
  r.N = detail::get<double>(is);
  r.snapshot.time = detail::get<double>(is);
  r.seed = detail::get<std::uint64_t>(is);
  r.snapshot.event_count = detail::get<std::uint64_t>(is);
  const auto n = detail::get<std::uint64_t>(is);
  if (n > (std::uint64_t{1} << 34)) throw FormatError("implausible snapshot size");
  r.snapshot.config.occupancy.resize(n);
  if (!is.read(reinterpret_cast<char*>(r.snapshot.config.occupancy.data()),
               static_cast<std::streamsize>(n * sizeof(std::int32_t))))
    throw FormatError("truncated snapshot");
  return r;
}

}  // namespace zrpperc
