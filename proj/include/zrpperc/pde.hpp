#pragma once

// Explicit conservative finite-volume solver for
//   d/dt rho = m sigma Laplacian( phi(rho / m) )
// on a node-centred periodic grid over the unit torus, plus closed-form
// references for the linear case and the trapped-mass composite profile.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "zrpperc/errors.hpp"
#include "zrpperc/fugacity.hpp"
#include "zrpperc/functions.hpp"

namespace zrpperc {

/// Densities at nodes x_i = i h, h = 1/n, on [0,1)^d. First index fastest.
struct DensityGrid {
  int dim = 2;
  int n = 0;
  double time = 0.0;
  std::vector<double> values;

  DensityGrid() = default;
  DensityGrid(int d, int cells) : dim(d), n(cells) {
    if (d < 1) throw DimensionError("grid dimension must be positive");
    if (cells < 3) throw DimensionError("grid needs at least 3 cells per side");
    std::size_t total = 1;
    for (int k = 0; k < d; ++k) total *= static_cast<std::size_t>(cells);
    values.assign(total, 0.0);
  }

  double spacing() const noexcept { return 1.0 / n; }
  std::size_t size() const noexcept { return values.size(); }
  std::size_t stride(int k) const noexcept {
    std::size_t s = 1;
    for (int j = 0; j < k; ++j) s *= static_cast<std::size_t>(n);
    return s;
  }
  std::vector<double> node(std::size_t i) const {
    std::vector<double> x(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
      x[k] = static_cast<double>(i % static_cast<std::size_t>(n)) / n;
      i /= static_cast<std::size_t>(n);
    }
    return x;
  }
  bool same_shape(const DensityGrid& o) const noexcept { return dim == o.dim && n == o.n; }

  /// Total mass sum rho h^d.
  double mass() const noexcept {
    double s = 0.0;
    for (double v : values) s += v;
    return s * std::pow(spacing(), dim);
  }
  double max() const { return *std::max_element(values.begin(), values.end()); }
  double min() const { return *std::min_element(values.begin(), values.end()); }

  /// Periodic multilinear interpolation at a macroscopic point.
  double interpolate(const std::vector<double>& x) const {
    std::vector<std::size_t> lo(static_cast<std::size_t>(dim)), hi(static_cast<std::size_t>(dim));
    std::vector<double> frac(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
      const double u = detail::frac(x[k]) * n;
      auto i = static_cast<std::size_t>(std::floor(u));
      frac[k] = u - static_cast<double>(i);
      i %= static_cast<std::size_t>(n);
      lo[k] = i;
      hi[k] = (i + 1) % static_cast<std::size_t>(n);
    }
    double acc = 0.0;
    for (unsigned corner = 0; corner < (1u << dim); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (int k = 0; k < dim; ++k) {
        const bool up = (corner >> k) & 1u;
        w *= up ? frac[k] : 1.0 - frac[k];
        idx += (up ? hi[k] : lo[k]) * stride(k);
      }
      acc += w * values[idx];
    }
    return acc;
  }
};

template <class Fn>
DensityGrid sample_grid(int dim, int cells, const Fn& f) {
  DensityGrid g(dim, cells);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = f(g.node(i));
  return g;
}

/// Midpoint-rule integral of G * rho over the torus.
template <class Fn>
double integrate(const DensityGrid& grid, const Fn& G) {
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += G(grid.node(i)) * grid.values[i];
  return s * std::pow(grid.spacing(), grid.dim);
}

struct PdeParams {
  double m = 1.0;
  double sigma = 1.0;
  PhiTable phi;

  void validate() const {
    if (!(m > 0.0 && m <= 1.0)) throw ParameterError("m must lie in (0, 1]");
    if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
  }
};

/// Mean-jump-rate table wide enough for a grid that starts in [0, rho_max].
inline PhiTable phi_table_for(const FugacityTable& table, double rho_max, double m) {
  return PhiTable(table, std::max(rho_max / m * 1.05, 1e-3) + 0.1);
}

/// Largest stable explicit step: h^2 / (2 d sigma Lip), Lip = sup phi'.
inline double max_stable_dt(const DensityGrid& grid, const PdeParams& p) {
  const double h = grid.spacing();
  return h * h / (2.0 * grid.dim * p.sigma * p.phi.lipschitz());
}

/// One explicit step. Each face flux m sigma (phi(rho_r/m) - phi(rho_l/m)) / h
/// is computed once and applied with opposite signs to its two nodes.
inline void step_nonlinear_heat(DensityGrid& grid, const PdeParams& p, double dt) {
  const double limit = max_stable_dt(grid, p);
  if (!(dt > 0.0) || dt > limit * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "time step " << dt << " violates the stability bound; admissible dt <= " << limit;
    throw ValidationError(os.str());
  }
  const double h = grid.spacing();
  const double coef = dt * p.m * p.sigma / (h * h);
  std::vector<double> F(grid.size());
  for (std::size_t i = 0; i < F.size(); ++i) {
    const double r = grid.values[i] / p.m;
    if (!p.phi.in_range(r)) {
      std::ostringstream os;
      os << "density " << grid.values[i] << " left the tabulated range at node " << i;
      throw SolverError(os.str());
    }
    F[i] = p.phi(r);
  }
  std::vector<double> delta(grid.size(), 0.0);
  const auto n = static_cast<std::size_t>(grid.n);
  for (int k = 0; k < grid.dim; ++k) {
    const auto st = grid.stride(k);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const std::size_t c = (i / st) % n;
      const std::size_t j = c + 1 == n ? i - c * st : i + st;
      const double flux = coef * (F[j] - F[i]);
      delta[i] += flux;
      delta[j] -= flux;
    }
  }
  for (std::size_t i = 0; i < grid.size(); ++i) grid.values[i] += delta[i];
  grid.time += dt;
}

struct SolveOptions {
  double cfl_fraction = 0.9;
  std::optional<double> dt;  // fixed step instead of the automatic one
};

/// Step to t_end; snapshots at the requested times are linearly
/// interpolated between the two steps that bracket them. The final step
/// is shortened to land on t_end.
inline std::vector<DensityGrid> solve_to_time(DensityGrid grid, const PdeParams& p, double t_end,
                                              std::vector<double> snapshot_times, const SolveOptions& opt = {}) {
  p.validate();
  if (!(t_end >= 0.0)) throw ParameterError("t_end must be nonnegative");
  std::sort(snapshot_times.begin(), snapshot_times.end());
  for (double t : snapshot_times)
    if (t < 0.0 || t > t_end) throw ParameterError("snapshot times must lie in [0, t_end]");
  const double dt_max = max_stable_dt(grid, p);
  const double dt0 = opt.dt ? *opt.dt : opt.cfl_fraction * dt_max;
  if (opt.dt && *opt.dt > dt_max) {
    std::ostringstream os;
    os << "requested time step " << *opt.dt << " exceeds the admissible dt " << dt_max;
    throw ValidationError(os.str());
  }
  const double t0 = grid.time;
  std::vector<DensityGrid> out;
  std::size_t next = 0;
  auto emit = [&](const DensityGrid& a, const DensityGrid& b) {
    while (next < snapshot_times.size() && t0 + snapshot_times[next] <= b.time + 1e-14) {
      const double ts = t0 + snapshot_times[next];
      DensityGrid s = b;
      if (b.time > a.time) {
        const double w = std::clamp((ts - a.time) / (b.time - a.time), 0.0, 1.0);
        for (std::size_t i = 0; i < s.size(); ++i) s.values[i] = (1.0 - w) * a.values[i] + w * b.values[i];
      }
      s.time = ts;
      out.push_back(std::move(s));
      ++next;
    }
  };
  emit(grid, grid);
  const double t_stop = t0 + t_end;
  while (grid.time < t_stop) {
    DensityGrid prev = grid;
    const double remaining = t_stop - grid.time;
    const bool last = remaining <= dt0 * (1.0 + 1e-9);
    step_nonlinear_heat(grid, p, last ? remaining : dt0);
    if (last) grid.time = t_stop;
    emit(prev, grid);
  }
  if (snapshot_times.empty()) out.push_back(grid);
  return out;
}

/// Composite bulk profile m * rho_tilde + (1 - m) * rho_0.
inline DensityGrid bulk_profile(const DensityGrid& rho_tilde, const DensityGrid& rho0, double m) {
  if (!rho_tilde.same_shape(rho0)) throw DimensionError("grid shapes differ");
  if (!(m >= 0.0 && m <= 1.0)) throw ParameterError("m must lie in [0, 1]");
  DensityGrid out = rho_tilde;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = m * rho_tilde.values[i] + (1.0 - m) * rho0.values[i];
  return out;
}

/// Closed-form solution of d/dt rho = sigma Laplacian rho for the constant,
/// trig and periodized Gaussian profiles.
inline double linear_heat_solution(const Profile& p0, double sigma, double t, const std::vector<double>& x) {
  const auto& par = p0.params();
  switch (p0.kind()) {
    case Profile::Kind::constant: return par[0];
    case Profile::Kind::trig: {
      double k2 = 0.0, a = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        k2 += par[2 + i] * par[2 + i];
        a += 2 * std::numbers::pi * par[2 + i] * x[i];
      }
      return par[0] + par[1] * std::exp(-4.0 * std::numbers::pi * std::numbers::pi * k2 * sigma * t) * std::cos(a);
    }
    case Profile::Kind::gauss: {
      const double w2 = par[2] * par[2];
      const double v = w2 + 2.0 * sigma * t;
      double total = 1.0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        double s = 0.0;
        for (int img = -6; img <= 6; ++img) {
          const double y = detail::frac(x[i]) - 0.5 + img;
          s += std::exp(-y * y / (2.0 * v));
        }
        total *= std::sqrt(w2 / v) * s;
      }
      return par[0] + par[1] * total;
    }
    default: break;
  }
  throw ParameterError("no closed-form heat solution for profile '" + p0.descriptor() + "'");
}

}  // namespace zrpperc
