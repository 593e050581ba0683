#pragma once

// Random conductance environment on a finite box: i.i.d. bond fields,
// thresholding, cluster decomposition and percolation statistics.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "zrpperc/errors.hpp"
#include "zrpperc/lattice.hpp"
#include "zrpperc/rng.hpp"

namespace zrpperc {

/// Law of a single bond conductance. Every law is driven by one uniform U
/// per bond, so fields generated with the same seed are monotonically
/// coupled in p.
struct BondLaw {
  enum class Kind : std::uint8_t { bernoulli = 0, uniform = 1, two_point = 2 };

  Kind kind = Kind::bernoulli;
  double p = 1.0;      // success probability (bernoulli, two_point)
  double c = 1.0;      // open value (bernoulli) or high value (two_point)
  double c_low = 0.0;  // low value (two_point)
  double c0 = 1.0;     // upper conductance bound

  static BondLaw bernoulli(double p, double c = 1.0, double c0 = 0.0) {
    return BondLaw{Kind::bernoulli, p, c, 0.0, c0 > 0.0 ? c0 : c};
  }
  static BondLaw uniform(double c0 = 1.0) { return BondLaw{Kind::uniform, 1.0, c0, 0.0, c0}; }
  static BondLaw two_point(double p, double high, double low, double c0 = 0.0) {
    return BondLaw{Kind::two_point, p, high, low, c0 > 0.0 ? c0 : high};
  }

  void validate() const {
    if (!(c0 > 0.0) || !std::isfinite(c0)) throw ParameterError("c0 must be a positive finite real");
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("bond law: p must lie in [0,1]");
    switch (kind) {
      case Kind::bernoulli:
        if (!(c > 0.0 && c <= c0)) throw ParameterError("bond law: c must lie in (0, c0]");
        break;
      case Kind::uniform:
        if (c != c0) throw ParameterError("uniform law: c must equal c0");
        break;
      case Kind::two_point:
        if (!(c > 0.0 && c <= c0)) throw ParameterError("two-point law: high value must lie in (0, c0]");
        if (!(c_low >= 0.0 && c_low <= c)) throw ParameterError("two-point law: low value must lie in [0, high]");
        break;
    }
  }

  double sample(double u) const noexcept {
    switch (kind) {
      case Kind::bernoulli: return u < p ? c : 0.0;
      case Kind::uniform: return c0 * u;
      case Kind::two_point: return u < p ? c : c_low;
    }
    return 0.0;
  }

  /// Probability that a bond is open (positive conductance).
  double open_probability() const noexcept {
    switch (kind) {
      case Kind::bernoulli: return p;
      case Kind::uniform: return 1.0;
      case Kind::two_point: return c_low > 0.0 ? 1.0 : p;
    }
    return 0.0;
  }

  std::string describe() const {
    std::ostringstream os;
    switch (kind) {
      case Kind::bernoulli: os << "bernoulli(p=" << p << ",c=" << c << ")"; break;
      case Kind::uniform: os << "uniform[0," << c0 << "]"; break;
      case Kind::two_point: os << "two_point(p=" << p << ",high=" << c << ",low=" << c_low << ")"; break;
    }
    return os.str();
  }

  bool operator==(const BondLaw&) const = default;
};

inline std::string law_name(BondLaw::Kind k) {
  switch (k) {
    case BondLaw::Kind::bernoulli: return "bernoulli";
    case BondLaw::Kind::uniform: return "uniform";
    case BondLaw::Kind::two_point: return "two_point";
  }
  return "?";
}

/// Quenched conductances, one value per unoriented bond slot (site, k).
/// Slots that cross a free boundary hold 0 and are not real bonds.
class ConductanceField {
 public:
  ConductanceField() = default;
  ConductanceField(Lattice lattice, BondLaw law, std::uint64_t seed, std::vector<double> values)
      : lattice_(std::move(lattice)), law_(law), seed_(seed), values_(std::move(values)) {
    if (values_.size() != lattice_.bond_slots()) throw FormatError("conductance array has wrong length");
  }

  const Lattice& lattice() const noexcept { return lattice_; }
  const BondLaw& law() const noexcept { return law_; }
  double c0() const noexcept { return law_.c0; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<double>& values() const noexcept { return values_; }

  /// Conductance of bond (site, site + e_k).
  double bond(std::size_t site, int k) const noexcept { return values_[lattice_.bond_index(site, k)]; }

  /// Conductance between `site` and its neighbor in direction sign*e_k;
  /// zero across a free boundary.
  double conductance(std::size_t site, int k, int sign) const noexcept {
    if (sign > 0) return lattice_.bond_exists(site, k) ? bond(site, k) : 0.0;
    auto n = lattice_.neighbor(site, k, -1);
    if (!n) return 0.0;
    return bond(*n, k);
  }

  bool operator==(const ConductanceField& o) const {
    return lattice_ == o.lattice_ && law_ == o.law_ && seed_ == o.seed_ && values_ == o.values_;
  }

 private:
  Lattice lattice_;
  BondLaw law_;
  std::uint64_t seed_ = 0;
  std::vector<double> values_;
};

/// One i.i.d. draw per real bond. Draw for slot b is U(seed, b), independent
/// of traversal order.
inline ConductanceField generate_field(const BondLaw& law, const std::vector<int>& dims, Boundary boundary,
                                       std::uint64_t seed) {
  law.validate();
  Lattice lat(dims, boundary);
  std::vector<double> values(lat.bond_slots(), 0.0);
  const CounterRng rng(derive_key(seed, 0x656e76ULL));
  for (std::size_t s = 0; s < lat.num_sites(); ++s)
    for (int k = 0; k < lat.dim(); ++k) {
      if (!lat.bond_exists(s, k)) continue;
      const auto b = lat.bond_index(s, k);
      values[b] = law.sample(CounterRng::to_unit(rng.at(b)));
    }
  return ConductanceField(std::move(lat), law, seed, std::move(values));
}

/// Indicator bond field; slot layout matches ConductanceField.
struct BinaryBondField {
  Lattice lattice;
  std::vector<std::uint8_t> open;

  bool is_open(std::size_t site, int k) const noexcept { return open[lattice.bond_index(site, k)] != 0; }
  std::size_t count_open() const { return static_cast<std::size_t>(std::count(open.begin(), open.end(), 1)); }
};

/// Bonds with conductance strictly above c. c = 0 gives the positive-bond
/// indicator; c above c0 gives the all-closed field.
inline BinaryBondField threshold_field(const ConductanceField& field, double c) {
  if (!(c >= 0.0)) throw ParameterError("threshold must be nonnegative");
  BinaryBondField out{field.lattice(), std::vector<std::uint8_t>(field.values().size(), 0)};
  const auto& lat = field.lattice();
  for (std::size_t s = 0; s < lat.num_sites(); ++s)
    for (int k = 0; k < lat.dim(); ++k)
      if (lat.bond_exists(s, k) && field.bond(s, k) > c) out.open[lat.bond_index(s, k)] = 1;
  return out;
}

/// Connected components of the open-bond graph. Sites touching no open bond
/// are not vertices and carry kIsolated.
struct ClusterLabeling {
  static constexpr std::int32_t kIsolated = -1;

  Lattice lattice;
  std::vector<std::int32_t> label;  // per lattice site
  std::vector<std::size_t> sizes;   // per cluster id
  std::int32_t giant_id = kIsolated;
  double giant_fraction = 0.0;

  std::size_t num_clusters() const noexcept { return sizes.size(); }
  std::size_t num_vertices() const { return std::accumulate(sizes.begin(), sizes.end(), std::size_t{0}); }
  bool in_giant(std::size_t site) const noexcept { return giant_id != kIsolated && label[site] == giant_id; }
  std::size_t giant_size() const noexcept {
    return giant_id == kIsolated ? 0 : sizes[static_cast<std::size_t>(giant_id)];
  }
};

namespace detail {

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), rank_(n, 0) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::uint8_t> rank_;
};

}  // namespace detail

/// Cluster ids are assigned in order of each cluster's smallest site index;
/// the giant is the largest cluster, ties to the smallest id.
inline ClusterLabeling label_clusters(const BinaryBondField& bonds) {
  const auto& lat = bonds.lattice;
  const std::size_t n = lat.num_sites();
  detail::UnionFind uf(n);
  std::vector<std::uint8_t> touched(n, 0);
  for (std::size_t s = 0; s < n; ++s)
    for (int k = 0; k < lat.dim(); ++k) {
      if (!bonds.is_open(s, k)) continue;
      const auto t = *lat.neighbor(s, k, +1);
      touched[s] = touched[t] = 1;
      uf.unite(s, t);
    }

  ClusterLabeling out;
  out.lattice = lat;
  out.label.assign(n, ClusterLabeling::kIsolated);
  std::vector<std::int32_t> id_of_root(n, ClusterLabeling::kIsolated);
  for (std::size_t s = 0; s < n; ++s) {
    if (!touched[s]) continue;
    const auto r = uf.find(s);
    if (id_of_root[r] == ClusterLabeling::kIsolated) {
      id_of_root[r] = static_cast<std::int32_t>(out.sizes.size());
      out.sizes.push_back(0);
    }
    out.label[s] = id_of_root[r];
    ++out.sizes[static_cast<std::size_t>(id_of_root[r])];
  }
  for (std::size_t id = 0; id < out.sizes.size(); ++id)
    if (out.giant_id == ClusterLabeling::kIsolated || out.sizes[id] > out.giant_size())
      out.giant_id = static_cast<std::int32_t>(id);
  out.giant_fraction = static_cast<double>(out.giant_size()) / static_cast<double>(n);
  return out;
}

inline ClusterLabeling label_clusters(const ConductanceField& field) {
  return label_clusters(threshold_field(field, 0.0));
}

/// Finite-window estimator of the infinite-cluster density: the giant
/// cluster's share of all box sites (0 when no bond is open).
inline double estimate_m(const ClusterLabeling& labeling) noexcept { return labeling.giant_fraction; }

/// Spatial extent of one cluster, measured on unwrapped coordinates.
struct ClusterExtent {
  int diameter = 0;                // l-infinity diameter
  std::vector<bool> wraps;         // per dimension, cluster winds around the torus
  bool wraps_any() const { return std::find(wraps.begin(), wraps.end(), true) != wraps.end(); }
};

/// BFS each cluster from its smallest site, carrying unwrapped coordinates.
/// A cluster that winds around direction k gets diameter >= side(k) in k.
inline std::vector<ClusterExtent> cluster_extents(const ClusterLabeling& labeling, const BinaryBondField& bonds) {
  const auto& lat = labeling.lattice;
  const int d = lat.dim();
  const std::size_t n = lat.num_sites();
  std::vector<ClusterExtent> ext(labeling.num_clusters());
  std::vector<std::int64_t> unwrapped(n * static_cast<std::size_t>(d), 0);
  std::vector<std::uint8_t> seen(n, 0);
  std::vector<std::size_t> queue;
  for (std::size_t root = 0; root < n; ++root) {
    const auto id = labeling.label[root];
    if (id == ClusterLabeling::kIsolated || seen[root]) continue;
    auto& e = ext[static_cast<std::size_t>(id)];
    e.wraps.assign(static_cast<std::size_t>(d), false);
    std::vector<std::int64_t> lo(static_cast<std::size_t>(d)), hi(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) lo[k] = hi[k] = unwrapped[root * d + k] = lat.coord(root, k);
    seen[root] = 1;
    queue.assign(1, root);
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
      const auto s = queue[qi];
      for (int k = 0; k < d; ++k)
        for (int sign : {+1, -1}) {
          auto t = lat.neighbor(s, k, sign);
          if (!t) continue;
          const bool open = sign > 0 ? bonds.is_open(s, k) : bonds.is_open(*t, k);
          if (!open) continue;
          if (!seen[*t]) {
            seen[*t] = 1;
            for (int j = 0; j < d; ++j) unwrapped[*t * d + j] = unwrapped[s * d + j];
            unwrapped[*t * d + k] += sign;
            for (int j = 0; j < d; ++j) {
              lo[j] = std::min(lo[j], unwrapped[*t * d + j]);
              hi[j] = std::max(hi[j], unwrapped[*t * d + j]);
            }
            queue.push_back(*t);
          } else {
            for (int j = 0; j < d; ++j) {
              const auto expected = unwrapped[s * d + j] + (j == k ? sign : 0);
              if (unwrapped[*t * d + j] != expected) e.wraps[static_cast<std::size_t>(j)] = true;
            }
          }
        }
    }
    int diam = 0;
    for (int k = 0; k < d; ++k) {
      auto span = static_cast<int>(hi[k] - lo[k]);
      if (e.wraps[static_cast<std::size_t>(k)]) span = std::max(span, lat.side(k));
      diam = std::max(diam, span);
    }
    e.diameter = diam;
  }
  return ext;
}

/// Whether the giant cluster winds around every periodic direction.
inline bool giant_spans_torus(const ClusterLabeling& labeling, const BinaryBondField& bonds) {
  if (labeling.giant_id == ClusterLabeling::kIsolated || !labeling.lattice.periodic()) return false;
  const auto ext = cluster_extents(labeling, bonds);
  const auto& w = ext[static_cast<std::size_t>(labeling.giant_id)].wraps;
  return std::all_of(w.begin(), w.end(), [](bool b) { return b; });
}

struct DiameterStats {
  int max_diameter = 0;
  std::map<int, std::size_t> histogram;  // diameter -> number of clusters
  std::vector<int> diameter;             // per cluster id (-1 when excluded)
  std::size_t wrapping_finite = 0;       // excluded clusters that wind around the torus
};

inline DiameterStats cluster_diameter_stats(const ClusterLabeling& labeling, const BinaryBondField& bonds,
                                            bool exclude_giant = true) {
  DiameterStats out;
  const auto ext = cluster_extents(labeling, bonds);
  out.diameter.assign(ext.size(), -1);
  for (std::size_t id = 0; id < ext.size(); ++id) {
    if (exclude_giant && static_cast<std::int32_t>(id) == labeling.giant_id) continue;
    out.diameter[id] = ext[id].diameter;
    if (ext[id].wraps_any()) ++out.wrapping_finite;
    ++out.histogram[ext[id].diameter];
    out.max_diameter = std::max(out.max_diameter, ext[id].diameter);
  }
  return out;
}

/// Weighted graph on a subset of lattice sites, with positive bonds whose
/// endpoints are both included. Local site order follows lattice order.
struct SiteGraph {
  struct Edge {
    std::uint32_t from;  // local index of x
    std::uint32_t to;    // local index of x + e_dir
    double weight;
    int dir;
  };

  Lattice lattice;
  std::vector<std::size_t> sites;
  std::vector<std::int64_t> local_of;  // lattice site -> local index, -1 when excluded
  std::vector<std::size_t> offsets;    // CSR rows
  std::vector<std::uint32_t> nbr;
  std::vector<double> weight;
  std::vector<double> cumulative;      // running sum of weight within each row
  std::vector<std::int8_t> step;       // +(k+1) or -(k+1)
  std::vector<double> total_weight;    // W(x)
  std::vector<Edge> edges;             // each unoriented edge once

  std::size_t size() const noexcept { return sites.size(); }
  std::size_t degree(std::size_t i) const noexcept { return offsets[i + 1] - offsets[i]; }
};

inline SiteGraph build_site_graph(const ConductanceField& field, const std::vector<std::uint8_t>& include) {
  const auto& lat = field.lattice();
  if (include.size() != lat.num_sites()) throw DimensionError("site mask has wrong length");
  SiteGraph g;
  g.lattice = lat;
  g.local_of.assign(lat.num_sites(), -1);
  for (std::size_t s = 0; s < lat.num_sites(); ++s)
    if (include[s]) {
      g.local_of[s] = static_cast<std::int64_t>(g.sites.size());
      g.sites.push_back(s);
    }
  g.offsets.assign(g.sites.size() + 1, 0);
  g.total_weight.assign(g.sites.size(), 0.0);
  for (std::size_t i = 0; i < g.sites.size(); ++i) {
    const auto s = g.sites[i];
    for (int k = 0; k < lat.dim(); ++k)
      for (int sign : {+1, -1}) {
        const auto t = lat.neighbor(s, k, sign);
        if (!t || g.local_of[*t] < 0) continue;
        const double w = field.conductance(s, k, sign);
        if (!(w > 0.0)) continue;
        g.nbr.push_back(static_cast<std::uint32_t>(g.local_of[*t]));
        g.weight.push_back(w);
        g.step.push_back(static_cast<std::int8_t>(sign * (k + 1)));
        g.total_weight[i] += w;
        g.cumulative.push_back(g.total_weight[i]);
        if (sign > 0)
          g.edges.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(g.local_of[*t]), w, k});
      }
    g.offsets[i + 1] = g.nbr.size();
  }
  return g;
}

/// Graph on the giant cluster, restricted to its internal bonds.
inline SiteGraph giant_cluster_graph(const ConductanceField& field, const ClusterLabeling& labeling) {
  std::vector<std::uint8_t> mask(labeling.label.size(), 0);
  for (std::size_t s = 0; s < mask.size(); ++s) mask[s] = labeling.in_giant(s) ? 1 : 0;
  return build_site_graph(field, mask);
}

/// Graph on every lattice site; isolated sites have no edges.
inline SiteGraph full_lattice_graph(const ConductanceField& field) {
  return build_site_graph(field, std::vector<std::uint8_t>(field.lattice().num_sites(), 1));
}

// ---------------------------------------------------------------------------
// Serialization. Layout (little-endian, host order checked at runtime):
//   char[8] "ZRPENV01" | u32 d | i32 dims[d] | u8 boundary | u8 law kind |
//   f64 p | f64 c | f64 c_low | f64 c0 | u64 seed | u64 n | f64 values[n]

namespace detail {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("unexpected end of stream");
  return v;
}

inline void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw FormatError("binary formats are defined little-endian; big-endian hosts are unsupported");
}

}  // namespace detail

inline constexpr char kFieldMagic[8] = {'Z', 'R', 'P', 'E', 'N', 'V', '0', '1'};

inline void save_field(std::ostream& os, const ConductanceField& f) {
  detail::require_little_endian();
  os.write(kFieldMagic, 8);
  const auto& lat = f.lattice();
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(lat.dim()));
  for (int L : lat.dims()) detail::put<std::int32_t>(os, L);
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(lat.boundary()));
  detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(f.law().kind));
  detail::put(os, f.law().p);
  detail::put(os, f.law().c);
  detail::put(os, f.law().c_low);
  detail::put(os, f.law().c0);
  detail::put<std::uint64_t>(os, f.seed());
  detail::put<std::uint64_t>(os, f.values().size());
  os.write(reinterpret_cast<const char*>(f.values().data()),
           static_cast<std::streamsize>(f.values().size() * sizeof(double)));
  if (!os) throw FormatError("failed writing conductance field");
}

inline ConductanceField load_field(std::istream& is) {
  detail::require_little_endian();
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kFieldMagic, 8) != 0)
    throw FormatError("not a conductance field file (bad magic)");
  const auto d = detail::get<std::uint32_t>(is);
  if (d < 2 || d > 16) throw FormatError("implausible lattice dimension in field file");
  std::vector<int> dims(d);
  for (auto& L : dims) L = detail::get<std::int32_t>(is);
  const auto boundary = detail::get<std::uint8_t>(is);
  if (boundary > 1) throw FormatError("bad boundary tag");
  BondLaw law;
  const auto kind = detail::get<std::uint8_t>(is);
  if (kind > 2) throw FormatError("bad law tag");
  law.kind = static_cast<BondLaw::Kind>(kind);
  law.p = detail::get<double>(is);
  law.c = detail::get<double>(is);
  law.c_low = detail::get<double>(is);
  law.c0 = detail::get<double>(is);
  const auto seed = detail::get<std::uint64_t>(is);
  const auto n = detail::get<std::uint64_t>(is);
  Lattice lat(dims, static_cast<Boundary>(boundary));
  if (n != lat.bond_slots()) throw FormatError("bond count does not match dims");
  std::vector<double> values(n);
  if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw FormatError("truncated bond values");
  for (double v : values)
    if (!(v >= 0.0 && v <= law.c0)) throw FormatError("bond value outside [0, c0]");
  return ConductanceField(std::move(lat), law, seed, std::move(values));
}

inline void save_field(const std::string& path, const ConductanceField& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  save_field(os, f);
}

inline ConductanceField load_field(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return load_field(is);
}

}  // namespace zrpperc
