#pragma once

// Macroscopic observables of a particle configuration: empirical measure
// against test functions, block densities, and the local replacement
// statistic comparing block averages of g(eta) with m * phi(eta^l / m).

#include <cmath>
#include <cstdint>
#include <vector>

#include "zrpperc/environment.hpp"
#include "zrpperc/errors.hpp"
#include "zrpperc/fugacity.hpp"
#include "zrpperc/particles.hpp"
#include "zrpperc/rate_function.hpp"

namespace zrpperc {

/// Macroscopic position x/N of a lattice site.
inline std::vector<double> macro_position(const Lattice& lat, std::size_t site, double N) {
  std::vector<double> x(static_cast<std::size_t>(lat.dim()));
  for (int k = 0; k < lat.dim(); ++k) x[k] = lat.coord(site, k) / N;
  return x;
}

/// Per-site weights G(x/N) / N^d, so that pi^N[G] is a dot product.
template <class Fn>
std::vector<double> empirical_weights(const SiteGraph& graph, const Fn& G, double N) {
  const double vol = std::pow(N, graph.lattice.dim());
  std::vector<double> w(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) w[i] = G(macro_position(graph.lattice, graph.sites[i], N)) / vol;
  return w;
}

inline double empirical_measure(const ParticleConfig& cfg, const std::vector<double>& weights) {
  if (weights.size() != cfg.size()) throw DimensionError("weights do not match configuration");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * cfg.occupancy[i];
  return s;
}

/// pi^N[G] = N^{-d} sum_x G(x/N) eta(x) over the graph's sites.
template <class Fn>
double empirical_measure(const SiteGraph& graph, const ParticleConfig& cfg, const Fn& G, double N) {
  return empirical_measure(cfg, empirical_weights(graph, G, N));
}

/// Lattice-indexed copy of per-graph-site values (zero off the graph).
template <class T>
std::vector<double> scatter(const SiteGraph& graph, const std::vector<T>& local) {
  std::vector<double> out(graph.lattice.num_sites(), 0.0);
  for (std::size_t i = 0; i < graph.size(); ++i) out[graph.sites[i]] = static_cast<double>(local[i]);
  return out;
}

/// Sum of `values` over the periodic box x + [-l, l]^d, for every x.
inline std::vector<double> box_sums(const Lattice& lat, std::vector<double> values, int ell) {
  if (ell < 0) throw ParameterError("box radius must be nonnegative");
  if (!lat.periodic()) throw ValidationError("box sums over the whole window need a periodic lattice");
  for (int k = 0; k < lat.dim(); ++k)
    if (2 * ell + 1 > lat.side(k)) throw ValidationError("window smaller than the block 2l+1");
  std::vector<double> line, prefix;
  std::vector<double> next(values.size());
  for (int k = 0; k < lat.dim(); ++k) {
    const int L = lat.side(k);
    const auto stride = lat.stride(k);
    line.resize(static_cast<std::size_t>(L));
    prefix.resize(static_cast<std::size_t>(3 * L + 1));
    for (std::size_t s = 0; s < lat.num_sites(); ++s) {
      if (lat.coord(s, k) != 0) continue;
      for (int j = 0; j < L; ++j) line[j] = values[s + static_cast<std::size_t>(j) * stride];
      prefix[0] = 0.0;
      for (int j = 0; j < 3 * L; ++j) prefix[j + 1] = prefix[j] + line[j % L];
      for (int j = 0; j < L; ++j)
        next[s + static_cast<std::size_t>(j) * stride] = prefix[L + j + ell + 1] - prefix[L + j - ell];
    }
    values.swap(next);
  }
  return values;
}

/// eta^l(x) = (2l+1)^{-d} sum over the box around lattice site x of the
/// occupations of graph sites. Divides by the full box volume.
inline double block_density(const SiteGraph& graph, const ParticleConfig& cfg, std::size_t x, int ell) {
  const auto& lat = graph.lattice;
  const int d = lat.dim();
  if (ell < 0) throw ParameterError("box radius must be nonnegative");
  const auto c = lat.coords(x);
  for (int k = 0; k < d; ++k) {
    if (lat.periodic() && 2 * ell + 1 > lat.side(k)) throw ValidationError("window smaller than the block 2l+1");
    if (!lat.periodic() && (c[k] - ell < 0 || c[k] + ell >= lat.side(k)))
      throw ValidationError("block leaves the free-boundary window");
  }
  std::vector<int> off(static_cast<std::size_t>(d), -ell);
  double sum = 0.0;
  for (;;) {
    std::vector<int> y(c);
    for (int k = 0; k < d; ++k) y[k] += off[k];
    const auto local = graph.local_of[lat.site(y)];
    if (local >= 0) sum += cfg.occupancy[static_cast<std::size_t>(local)];
    int k = 0;
    while (k < d && ++off[k] > ell) off[k++] = -ell;
    if (k == d) break;
  }
  return sum / std::pow(2.0 * ell + 1.0, d);
}

/// eta^l at every lattice site.
inline std::vector<double> block_density_field(const SiteGraph& graph, const ParticleConfig& cfg, int ell) {
  auto sums = box_sums(graph.lattice, scatter(graph, cfg.occupancy), ell);
  const double vol = std::pow(2.0 * ell + 1.0, graph.lattice.dim());
  for (auto& v : sums) v /= vol;
  return sums;
}

struct ReplacementValue {
  double value = 0.0;         // spatial average of V_l
  std::size_t clamped = 0;    // sites where eta^l / m left the table range
};

/// Average over all window sites x of
///   | (2l+1)^{-d} sum_{y in box(x), y in graph} g(eta(y)) - m phi(eta^l(x)/m) |.
inline ReplacementValue replacement_statistic(const SiteGraph& graph, const ParticleConfig& cfg,
                                              const JumpRateFn& rate, int ell, double m_hat, const PhiTable& phi) {
  if (ell < 1) throw ParameterError("replacement statistic needs l >= 1");
  if (!(m_hat > 0.0)) throw ParameterError("cluster density estimate must be positive");
  std::vector<double> gval(cfg.size());
  for (std::size_t i = 0; i < cfg.size(); ++i) gval[i] = rate(cfg.occupancy[i]);
  const auto eta_sum = box_sums(graph.lattice, scatter(graph, cfg.occupancy), ell);
  const auto g_sum = box_sums(graph.lattice, scatter(graph, gval), ell);
  const double vol = std::pow(2.0 * ell + 1.0, graph.lattice.dim());
  ReplacementValue out;
  double acc = 0.0;
  for (std::size_t x = 0; x < eta_sum.size(); ++x) {
    double arg = eta_sum[x] / vol / m_hat;
    if (arg > phi.rho_max()) {
      arg = phi.rho_max();
      ++out.clamped;
    }
    acc += std::abs(g_sum[x] / vol - m_hat * phi(arg));
  }
  out.value = acc / static_cast<double>(eta_sum.size());
  return out;
}

}  // namespace zrpperc
