#pragma once

// Random walk among the cluster conductances after diffusive rescaling:
// generator, Dirichlet form, resolvent solves for corrected test functions,
// and two independent estimates of the effective diffusion matrix.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "zrpperc/environment.hpp"
#include "zrpperc/errors.hpp"
#include "zrpperc/functions.hpp"
#include "zrpperc/observables.hpp"
#include "zrpperc/rng.hpp"

namespace zrpperc {

/// Giant-cluster graph with diffusive scale N. The measure nu^N puts mass
/// N^{-d} on every cluster site.
struct ClusterGraph {
  SiteGraph graph;
  double N = 1.0;

  int dim() const noexcept { return graph.lattice.dim(); }
  std::size_t size() const noexcept { return graph.size(); }
  double volume_weight() const noexcept { return std::pow(N, -dim()); }
};

inline ClusterGraph build_cluster_graph(const ConductanceField& field, const ClusterLabeling& labeling, double N) {
  if (labeling.giant_size() == 0) throw ValidationError("giant cluster is empty");
  if (!(N > 0.0)) throw ParameterError("scale N must be positive");
  return ClusterGraph{giant_cluster_graph(field, labeling), N};
}

/// (L_N f)(x) = N^2 sum_{y ~ x} w(x,y) (f(y) - f(x)).
inline std::vector<double> apply_generator(const ClusterGraph& cg, const std::vector<double>& f) {
  const auto& g = cg.graph;
  if (f.size() != g.size()) throw DimensionError("function does not match the cluster");
  const double n2 = cg.N * cg.N;
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double acc = 0.0;
    for (auto e = g.offsets[i]; e < g.offsets[i + 1]; ++e) acc += g.weight[e] * (f[g.nbr[e]] - f[i]);
    out[i] = n2 * acc;
  }
  return out;
}

/// (f, g)_{nu^N}.
inline double inner_product(const ClusterGraph& cg, const std::vector<double>& f, const std::vector<double>& g) {
  double acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * g[i];
  return acc * cg.volume_weight();
}

/// (f, -L_N g)_{nu^N} from the edge sum
///   N^{2-d} sum_{edges} w (f(y)-f(x)) (g(y)-g(x)).
inline double dirichlet_form(const ClusterGraph& cg, const std::vector<double>& f, const std::vector<double>& g) {
  if (f.size() != cg.size() || g.size() != cg.size()) throw DimensionError("function does not match the cluster");
  double acc = 0.0;
  for (const auto& e : cg.graph.edges) acc += e.weight * (f[e.to] - f[e.from]) * (g[e.to] - g[e.from]);
  return acc * cg.N * cg.N * cg.volume_weight();
}

struct CgResult {
  std::vector<double> x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

/// Preconditioned conjugate gradients for a symmetric positive
/// (semi)definite operator; reductions run in index order.
template <class Op>
CgResult conjugate_gradient(const Op& apply, const std::vector<double>& b, const std::vector<double>& inv_diag,
                            double rel_tol, std::size_t max_iter, std::vector<double> x0 = {}) {
  const std::size_t n = b.size();
  auto dot = [n](const std::vector<double>& u, const std::vector<double>& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += u[i] * v[i];
    return s;
  };
  CgResult res;
  res.x = x0.empty() ? std::vector<double>(n, 0.0) : std::move(x0);
  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    std::fill(res.x.begin(), res.x.end(), 0.0);
    res.converged = true;
    return res;
  }
  std::vector<double> r = b, Ax = apply(res.x);
  for (std::size_t i = 0; i < n; ++i) r[i] -= Ax[i];
  std::vector<double> z(n), p(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  p = z;
  double rz = dot(r, z);
  res.relative_residual = std::sqrt(dot(r, r)) / bnorm;
  res.residual_history.push_back(res.relative_residual);
  while (res.relative_residual > rel_tol && res.iterations < max_iter) {
    const auto Ap = apply(p);
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rz / pAp;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    ++res.iterations;
    res.relative_residual = std::sqrt(dot(r, r)) / bnorm;
    res.residual_history.push_back(res.relative_residual);
  }
  // Recompute the true residual; the recursive one drifts.
  Ax = apply(res.x);
  double rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) rr += (b[i] - Ax[i]) * (b[i] - Ax[i]);
  res.relative_residual = std::sqrt(rr) / bnorm;
  res.converged = res.relative_residual <= rel_tol * 10.0;
  return res;
}

struct CorrectorSolution {
  double lambda = 0.0;
  std::vector<double> values;  // G^lambda_N on cluster sites
  double residual_norm = 0.0;  // relative
  std::size_t iterations = 0;
};

inline constexpr double kResolventTol = 1e-10;

/// Solve (lambda - L_N) u = h by Jacobi-preconditioned CG.
inline CorrectorSolution solve_resolvent(const ClusterGraph& cg, double lambda, const std::vector<double>& h,
                                         std::size_t max_iter = 100000) {
  if (!(lambda > 0.0)) throw ParameterError("resolvent parameter must be positive");
  if (h.size() != cg.size()) throw DimensionError("right-hand side does not match the cluster");
  const auto& g = cg.graph;
  const double n2 = cg.N * cg.N;
  std::vector<double> inv_diag(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) inv_diag[i] = 1.0 / (lambda + n2 * g.total_weight[i]);
  auto op = [&](const std::vector<double>& f) {
    auto Lf = apply_generator(cg, f);
    for (std::size_t i = 0; i < f.size(); ++i) Lf[i] = lambda * f[i] - Lf[i];
    return Lf;
  };
  auto r = conjugate_gradient(op, h, inv_diag, kResolventTol, max_iter);
  if (!r.converged) {
    std::ostringstream os;
    os << "resolvent CG did not converge: relative residual " << r.relative_residual << " after " << r.iterations
       << " iterations; history tail:";
    const auto n = r.residual_history.size();
    for (auto i = n > 5 ? n - 5 : 0; i < n; ++i) os << ' ' << r.residual_history[i];
    throw SolverError(os.str());
  }
  return {lambda, std::move(r.x), r.relative_residual, r.iterations};
}

/// Right-hand side lambda G - div(D grad G) restricted to the cluster.
inline std::vector<double> resolvent_rhs(const ClusterGraph& cg, double lambda, const TestFunction& G,
                                         const std::vector<double>& D) {
  const auto& g = cg.graph;
  std::vector<double> h(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto x = macro_position(g.lattice, g.sites[i], cg.N);
    h[i] = lambda * G(x) - G.div_grad(x, D);
  }
  return h;
}

inline CorrectorSolution solve_resolvent(const ClusterGraph& cg, double lambda, const TestFunction& G,
                                         const std::vector<double>& D) {
  return solve_resolvent(cg, lambda, resolvent_rhs(cg, lambda, G, D));
}

struct FunctionGap {
  double l1 = 0.0;
  double l2 = 0.0;
  double volume = 0.0;  // nu^N(cluster)
};

/// ||u - G||_{L^1(nu^N)} and ||u - G||_{L^2(nu^N)}.
inline FunctionGap corrected_function_gap(const ClusterGraph& cg, const std::vector<double>& u, const TestFunction& G) {
  const auto& g = cg.graph;
  double s1 = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double diff = u[i] - G(macro_position(g.lattice, g.sites[i], cg.N));
    s1 += std::abs(diff);
    s2 += diff * diff;
  }
  const double w = cg.volume_weight();
  return {s1 * w, std::sqrt(s2 * w), static_cast<double>(g.size()) * w};
}

struct GapLadderEntry {
  double N = 0.0;
  FunctionGap gap;
  std::size_t iterations = 0;
};

/// Gap ||G^lambda_N - G|| along a sequence of cluster graphs.
inline std::vector<GapLadderEntry> corrected_function_convergence(const std::vector<ClusterGraph>& ladder, double lambda,
                                                                  const TestFunction& G, const std::vector<double>& D) {
  std::vector<GapLadderEntry> out;
  for (const auto& cg : ladder) {
    const auto sol = solve_resolvent(cg, lambda, G, D);
    out.push_back({cg.N, corrected_function_gap(cg, sol.values, G), sol.iterations});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Effective diffusion matrix

struct EffectiveDiffusivity {
  int dim = 2;
  std::vector<double> matrix;  // row-major
  std::vector<double> stderr_matrix;  // Monte Carlo standard errors (msd only)
  std::string method;
  double m_hat = 0.0;
  double residual = 0.0;
  std::size_t iterations = 0;
  std::vector<std::string> warnings;

  double at(int i, int j) const { return matrix[static_cast<std::size_t>(i * dim + j)]; }
  double sigma() const {
    double t = 0.0;
    for (int i = 0; i < dim; ++i) t += at(i, i);
    return t / dim;
  }
};

/// Minimizer of the periodic corrector energy
///   E(chi) = sum_{edges x -> x+e_k} w (a_k + chi(x+e_k) - chi(x))^2.
struct CorrectorEnergy {
  std::vector<double> chi;
  double energy_cg = 0.0;      // sum w a^2 - chi . b at the CG solution
  double energy_direct = 0.0;  // E(chi) re-evaluated edge by edge
  double zero_corrector = 0.0; // E(0)
  double residual = 0.0;
  std::size_t iterations = 0;
};

inline double corrector_energy(const SiteGraph& g, const std::vector<double>& a, const std::vector<double>& chi) {
  double e = 0.0;
  for (const auto& ed : g.edges) {
    const double r = a[static_cast<std::size_t>(ed.dir)] + chi[ed.to] - chi[ed.from];
    e += ed.weight * r * r;
  }
  return e;
}

inline CorrectorEnergy minimize_corrector(const SiteGraph& g, const std::vector<double>& a,
                                          double rel_tol = kResolventTol, std::size_t max_iter = 200000) {
  const std::size_t n = g.size();
  std::vector<double> b(n, 0.0);
  double e0 = 0.0;
  for (const auto& ed : g.edges) {
    const double ak = a[static_cast<std::size_t>(ed.dir)];
    b[ed.from] += ed.weight * ak;
    b[ed.to] -= ed.weight * ak;
    e0 += ed.weight * ak * ak;
  }
  std::vector<double> inv_diag(n);
  for (std::size_t i = 0; i < n; ++i) inv_diag[i] = g.total_weight[i] > 0.0 ? 1.0 / g.total_weight[i] : 0.0;
  auto laplacian = [&g](const std::vector<double>& f) {
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      double acc = 0.0;
      for (auto e = g.offsets[i]; e < g.offsets[i + 1]; ++e) acc += g.weight[e] * (f[i] - f[g.nbr[e]]);
      out[i] = acc;
    }
    return out;
  };
  auto r = conjugate_gradient(laplacian, b, inv_diag, rel_tol, max_iter);
  if (!r.converged) {
    std::ostringstream os;
    os << "corrector CG did not converge: relative residual " << r.relative_residual << " after " << r.iterations
       << " iterations";
    throw SolverError(os.str());
  }
  double mean = 0.0;
  for (double v : r.x) mean += v;
  mean /= static_cast<double>(n);
  for (double& v : r.x) v -= mean;
  CorrectorEnergy out;
  double chib = 0.0;
  for (std::size_t i = 0; i < n; ++i) chib += r.x[i] * b[i];
  out.energy_cg = e0 - chib;
  out.energy_direct = corrector_energy(g, a, r.x);
  out.zero_corrector = e0;
  out.residual = r.relative_residual;
  out.iterations = r.iterations;
  out.chi = std::move(r.x);
  return out;
}

/// Periodic finite-volume surrogate of the variational formula:
///   (a, D a) = min_chi E_a(chi) / (m_hat |box|) = min_chi E_a(chi) / |cluster|,
/// diagonal from a = e_j, off-diagonals by polarization with a = e_i + e_j.
inline EffectiveDiffusivity estimate_D_variational(const ClusterGraph& cg, double m_hat) {
  const auto& g = cg.graph;
  const int d = cg.dim();
  if (!(m_hat > 0.0)) throw ParameterError("cluster density estimate must be positive");
  const double norm = m_hat * static_cast<double>(g.lattice.num_sites());
  EffectiveDiffusivity D;
  D.dim = d;
  D.method = "variational";
  D.m_hat = m_hat;
  D.matrix.assign(static_cast<std::size_t>(d * d), 0.0);
  std::vector<double> diag_energy(static_cast<std::size_t>(d));
  auto solve = [&](const std::vector<double>& a) {
    auto ce = minimize_corrector(g, a);
    D.residual = std::max(D.residual, ce.residual);
    D.iterations += ce.iterations;
    return ce.energy_cg;
  };
  for (int j = 0; j < d; ++j) {
    std::vector<double> a(static_cast<std::size_t>(d), 0.0);
    a[j] = 1.0;
    diag_energy[j] = solve(a);
    D.matrix[static_cast<std::size_t>(j * d + j)] = diag_energy[j] / norm;
  }
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      std::vector<double> a(static_cast<std::size_t>(d), 0.0);
      a[i] = a[j] = 1.0;
      const double off = (solve(a) - diag_energy[i] - diag_energy[j]) / (2.0 * norm);
      D.matrix[static_cast<std::size_t>(i * d + j)] = D.matrix[static_cast<std::size_t>(j * d + i)] = off;
    }
  return D;
}

/// Variational estimate straight from an environment (N = L, m_hat from the
/// same window), with a warning when the giant cluster does not wrap.
inline EffectiveDiffusivity estimate_D_variational(const ConductanceField& field, const ClusterLabeling& labeling) {
  const auto cg = build_cluster_graph(field, labeling, field.lattice().side(0));
  auto D = estimate_D_variational(cg, estimate_m(labeling));
  if (!giant_spans_torus(labeling, threshold_field(field, 0.0)))
    D.warnings.push_back("giant cluster does not wind around every torus direction");
  return D;
}

/// Mean-square displacement of continuous-time walks with jump rates
/// w(x,y), started uniformly on the giant cluster:
///   D_ij = E[X_i(t) X_j(t)] / (2t).
/// With unit conductances on the full lattice this gives D = Id.
inline EffectiveDiffusivity estimate_D_msd(const ConductanceField& field, const ClusterLabeling& labeling,
                                           std::size_t n_walkers, double t_end, std::uint64_t seed) {
  if (labeling.giant_size() == 0) throw ValidationError("giant cluster is empty");
  if (n_walkers < 2) throw ParameterError("need at least two walkers");
  if (!(t_end > 0.0)) throw ParameterError("walk time must be positive");
  const auto g = giant_cluster_graph(field, labeling);
  const int d = g.lattice.dim();
  const auto dd = static_cast<std::size_t>(d * d);
  std::vector<double> sum(dd, 0.0), sumsq(dd, 0.0);
  std::vector<double> disp(static_cast<std::size_t>(d));
  double msd_total = 0.0;
  for (std::size_t w = 0; w < n_walkers; ++w) {
    CounterRng rng(derive_key(seed, w));
    std::size_t x = static_cast<std::size_t>(rng.uniform() * static_cast<double>(g.size()));
    if (x >= g.size()) x = g.size() - 1;
    std::fill(disp.begin(), disp.end(), 0.0);
    double t = 0.0;
    for (;;) {
      const double W = g.total_weight[x];
      t += rng.exponential(W);
      if (t > t_end) break;
      const double u = rng.uniform() * W;
      const auto b = g.offsets[x], e = g.offsets[x + 1];
      auto it = std::upper_bound(g.cumulative.begin() + static_cast<std::ptrdiff_t>(b),
                                 g.cumulative.begin() + static_cast<std::ptrdiff_t>(e), u);
      auto k = static_cast<std::size_t>(it - g.cumulative.begin());
      if (k >= e) k = e - 1;
      const int st = g.step[k];
      disp[static_cast<std::size_t>(std::abs(st) - 1)] += st > 0 ? 1.0 : -1.0;
      x = g.nbr[k];
    }
    for (int i = 0; i < d; ++i) {
      msd_total += disp[i] * disp[i];
      for (int j = 0; j < d; ++j) {
        const double v = disp[i] * disp[j] / (2.0 * t_end);
        sum[static_cast<std::size_t>(i * d + j)] += v;
        sumsq[static_cast<std::size_t>(i * d + j)] += v * v;
      }
    }
  }
  EffectiveDiffusivity D;
  D.dim = d;
  D.method = "msd";
  D.m_hat = estimate_m(labeling);
  D.matrix.resize(dd);
  D.stderr_matrix.resize(dd);
  const auto n = static_cast<double>(n_walkers);
  for (std::size_t i = 0; i < dd; ++i) {
    const double mean = sum[i] / n;
    D.matrix[i] = mean;
    D.stderr_matrix[i] = std::sqrt(std::max(0.0, sumsq[i] / n - mean * mean) / (n - 1.0));
  }
  if (std::sqrt(msd_total / n) < 10.0) D.warnings.push_back("root-mean-square displacement below 10 lattice units");
  return D;
}

}  // namespace zrpperc
