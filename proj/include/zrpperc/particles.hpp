#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "zrpperc/environment.hpp"
#include "zrpperc/errors.hpp"
#include "zrpperc/fugacity.hpp"
#include "zrpperc/rng.hpp"

namespace zrpperc {

/// Occupation numbers on the sites of a SiteGraph (local order).
struct ParticleConfig {
  std::vector<std::int32_t> occupancy;

  std::int64_t total() const noexcept {
    return std::accumulate(occupancy.begin(), occupancy.end(), std::int64_t{0});
  }
  std::size_t size() const noexcept { return occupancy.size(); }
  bool operator==(const ParticleConfig&) const = default;
};

/// Complete binary sum tree over nonnegative leaf weights. Internal nodes
/// are always recomputed as left + right, so a rebuild from the leaves
/// reproduces every node bit for bit.
class SumTree {
 public:
  SumTree() = default;
  explicit SumTree(std::size_t n) : n_(n), cap_(std::bit_ceil(std::max<std::size_t>(n, 1))), node_(2 * cap_, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  double total() const noexcept { return node_[1]; }
  double leaf(std::size_t i) const noexcept { return node_[cap_ + i]; }
  const std::vector<double>& nodes() const noexcept { return node_; }

  void set(std::size_t i, double w) noexcept {
    std::size_t p = cap_ + i;
    node_[p] = w;
    for (p >>= 1; p >= 1; p >>= 1) node_[p] = node_[2 * p] + node_[2 * p + 1];
  }

  void assign(const std::vector<double>& w) {
    std::fill(node_.begin(), node_.end(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) node_[cap_ + i] = w[i];
    for (std::size_t p = cap_ - 1; p >= 1; --p) node_[p] = node_[2 * p] + node_[2 * p + 1];
  }

  /// Leaf whose cumulative interval contains u, u in [0, total). Never
  /// returns a zero-weight leaf while total > 0.
  std::size_t find(double u) const noexcept {
    std::size_t p = 1;
    while (p < cap_) {
      const double left = node_[2 * p];
      if ((u < left && left > 0.0) || node_[2 * p + 1] <= 0.0) {
        p = 2 * p;
      } else {
        u -= left;
        p = 2 * p + 1;
      }
    }
    return p - cap_;
  }

 private:
  std::size_t n_ = 0;
  std::size_t cap_ = 1;
  std::vector<double> node_ = std::vector<double>(2, 0.0);
};

/// Sample a product measure with slowly varying parameter: the occupation at
/// graph site x is drawn from nu_rho with rho = profile(x/N) / m_divisor,
/// by inverse CDF on the truncated pmf. Pass m_divisor = 1 for a plain
/// product over the graph's sites. Site draws are keyed by lattice index.
template <class ProfileFn>
ParticleConfig sample_product_measure(const FugacityTable& table, const ProfileFn& profile, const SiteGraph& graph,
                                      double N, double m_divisor, std::uint64_t seed) {
  if (!(m_divisor > 0.0)) throw ParameterError("cluster density estimate must be positive");
  if (!(N > 0.0)) throw ParameterError("scale N must be positive");
  const auto& lat = graph.lattice;
  const CounterRng rng(derive_key(seed, 0x73616d70ULL));
  std::unordered_map<std::uint64_t, std::vector<double>> cdf_cache;
  ParticleConfig cfg;
  cfg.occupancy.resize(graph.size(), 0);
  std::vector<double> x(static_cast<std::size_t>(lat.dim()));
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto s = graph.sites[i];
    for (int k = 0; k < lat.dim(); ++k) x[k] = lat.coord(s, k) / N;
    const double rho = profile(x) / m_divisor;
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw RangeError("profile is negative or not finite at a sampled site");
    if (rho == 0.0) continue;
    auto [it, fresh] = cdf_cache.try_emplace(std::bit_cast<std::uint64_t>(rho));
    if (fresh) {
      double phi;
      try {
        phi = table.fugacity_of_density(rho);
      } catch (const Error& e) {
        std::ostringstream os;
        os << "density " << rho << " at site (";
        for (int k = 0; k < lat.dim(); ++k) os << (k ? "," : "") << lat.coord(s, k);
        os << ") outside invertible range: " << e.what();
        throw RangeError(os.str());
      }
      auto p = table.pmf(phi);
      std::partial_sum(p.begin(), p.end(), p.begin());
      it->second = std::move(p);
    }
    const auto& cdf = it->second;
    const double u = CounterRng::to_unit(rng.at(s)) * cdf.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    cfg.occupancy[i] = static_cast<std::int32_t>(std::min(k, cdf.size() - 1));
  }
  return cfg;
}

}  // namespace zrpperc
