#pragma once

// Grand-canonical single-site measures of the zero range process:
// nu_phi(k) = phi^k / (g(k)! Z(phi)), the density R(phi), its inverse, and
// the mean jump rate phi(rho) = nu_rho(g).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "zrpperc/errors.hpp"
#include "zrpperc/rate_function.hpp"

namespace zrpperc {

/// Moments of the unnormalized weights t_k = phi^k / g(k)!, scaled by
/// exp(-log_scale) to stay finite.
struct SeriesMoments {
  double m0 = 0.0;  // sum t_k
  double m1 = 0.0;  // sum k t_k
  double m2 = 0.0;  // sum k^2 t_k
  double mg = 0.0;  // sum g(k) t_k
  double log_scale = 0.0;
  std::size_t terms = 0;

  double density() const noexcept { return m1 / m0; }
  double variance() const noexcept { return std::max(0.0, m2 / m0 - density() * density()); }
  double mean_rate() const noexcept { return mg / m0; }
  double log_z() const noexcept { return std::log(m0) + log_scale; }
};

class FugacityTable {
 public:
  /// Relative tail tolerance for every moment; normalized quantities (R,
  /// pmf masses, nu(g)) are certified to ~1e-12 absolute.
  static constexpr double kSeriesTol = 1e-13;
  static constexpr double kInverseTol = 1e-10;
  static constexpr double kIdentityTol = 1e-9;
  static constexpr std::size_t kMaxTerms = 50'000'000;

  explicit FugacityTable(JumpRateFn g) : g_(std::move(g)), phi_c_(g_.phi_c()) {}

  const JumpRateFn& rate_fn() const noexcept { return g_; }
  double phi_c() const noexcept { return phi_c_; }
  double gstar() const noexcept { return g_.gstar(); }

  /// Sum the series until the geometric tail bound certifies every moment.
  SeriesMoments moments(double phi) const {
    check_phi(phi);
    SeriesMoments s;
    s.m0 = 1.0;
    s.terms = 1;
    if (phi == 0.0) return s;
    const double gs = gstar();
    double t = 1.0;
    for (std::size_t k = 1;; ++k) {
      const double gk = g_(static_cast<std::int64_t>(k));
      t *= phi / gk;
      const double kd = static_cast<double>(k);
      s.m0 += t;
      s.m1 += kd * t;
      s.m2 += kd * kd * t;
      s.mg += gk * t;
      s.terms = k + 1;
      if (s.m0 > 1e250) {
        constexpr double shrink = 1e-250;
        s.m0 *= shrink;
        s.m1 *= shrink;
        s.m2 *= shrink;
        s.mg *= shrink;
        t *= shrink;
        s.log_scale += 250.0 * std::log(10.0);
      }
      const double r = phi / g_(static_cast<std::int64_t>(k + 1));
      if (r < 1.0) {
        const double q = 1.0 - r;
        const double s0 = r / q, s1 = r / (q * q), s2 = r * (1.0 + r) / (q * q * q);
        const double tail0 = t * s0;
        const double tail1 = t * (kd * s0 + s1);
        const double tail2 = t * (kd * kd * s0 + 2.0 * kd * s1 + s2);
        const double tailg = t * (gk * s0 + gs * s1);
        const double bound = kSeriesTol * s.m0;
        if (tail0 <= bound && tail1 <= bound && tailg <= bound && tail2 <= bound * std::max(1.0, s.m2 / s.m0))
          return s;
      }
      if (k > kMaxTerms) throw DivergenceError("series did not converge within the term budget");
    }
  }

  /// Z(phi) = sum_k phi^k / g(k)!.
  double partition_function(double phi) const {
    const auto s = moments(phi);
    return s.m0 * std::exp(s.log_scale);
  }

  double log_partition_function(double phi) const { return moments(phi).log_z(); }

  /// R(phi): mean occupancy under nu_phi.
  double density_of_fugacity(double phi) const { return moments(phi).density(); }

  /// Inverse of R: bracketed Newton/bisection to |R(phi) - rho| < 1e-10.
  double fugacity_of_density(double rho) const {
    if (!(rho >= 0.0) || !std::isfinite(rho)) throw ParameterError("density must be a finite nonnegative real");
    if (rho == 0.0) return 0.0;
    double lo = 0.0, hi;
    if (std::isfinite(phi_c_)) {
      hi = phi_c_;
    } else {
      hi = std::max(1.0, rho);
      while (density_of_fugacity(hi) <= rho) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e6) throw RangeError("density beyond the representable fugacity range");
      }
    }
    double phi = 0.5 * (lo + hi);
    for (int it = 0; it < 400; ++it) {
      const auto s = moments(phi);
      const double r = s.density();
      const double err = r - rho;
      if (std::abs(err) < 1e-3 * kInverseTol) return phi;
      if (err > 0.0) hi = phi;
      else lo = phi;
      const double slope = s.variance() / phi;  // dR/dphi
      double next = slope > 0.0 ? phi - err / slope : 0.5 * (lo + hi);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (next == phi || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) {
        if (std::abs(err) < kInverseTol) return phi;
        std::ostringstream os;
        os << "density " << rho << " cannot be inverted to tolerance (phi_c = " << phi_c_ << ")";
        throw RangeError(os.str());
      }
      phi = next;
    }
    throw RangeError("fugacity inversion did not converge");
  }

  /// nu_rho(g) by direct summation, cross-checked against the identity
  /// nu_phi(g) = phi.
  double mean_jump_rate(double rho) const {
    const double phi = fugacity_of_density(rho);
    const double direct = moments(phi).mean_rate();
    if (std::abs(direct - phi) > kIdentityTol * std::max(1.0, phi)) {
      std::ostringstream os;
      os.precision(17);
      os << "mean jump rate identity violated at rho=" << rho << ": series " << direct << " vs fugacity " << phi;
      throw SolverError(os.str());
    }
    return direct;
  }

  /// Marginal pmf of nu_phi, truncated where the remaining mass < 1e-12.
  std::vector<double> pmf(double phi) const {
    const auto s = moments(phi);
    std::vector<double> p;
    const double inv = std::exp(-s.log_scale) / s.m0;
    double t = 1.0, mass = 0.0;
    for (std::size_t k = 0;; ++k) {
      if (k > 0) t *= phi / g_(static_cast<std::int64_t>(k));
      const double pk = t * inv;
      p.push_back(pk);
      mass += pk;
      if (1.0 - mass < 1e-12 && (k + 1 >= s.terms || phi / g_(static_cast<std::int64_t>(k + 1)) < 1.0)) break;
      if (k > kMaxTerms) throw DivergenceError("pmf truncation did not terminate");
    }
    return p;
  }

 private:
  void check_phi(double phi) const {
    if (!(phi >= 0.0) || !std::isfinite(phi)) throw ParameterError("fugacity must be a finite nonnegative real");
    if (phi >= phi_c_) {
      std::ostringstream os;
      os << "fugacity " << phi << " at or beyond the radius of convergence " << phi_c_;
      throw DivergenceError(os.str());
    }
  }

  JumpRateFn g_;
  double phi_c_;
};

/// Mean jump rate rho -> phi(rho) on [0, rho_max], for hot loops (PDE
/// fluxes, replacement statistics). Closed forms for the linear and
/// indicator builtins; cubic Hermite interpolation with exact slopes
/// d phi / d rho = phi / Var_phi otherwise.
class PhiTable {
 public:
  PhiTable(const FugacityTable& table, double rho_max, double spacing = 1.0 / 128.0)
      : kind_(table.rate_fn().kind()), rho_max_(rho_max) {
    if (!(rho_max > 0.0)) throw ParameterError("PhiTable range must be positive");
    if (kind_ == JumpRateFn::Kind::linear || kind_ == JumpRateFn::Kind::indicator) {
      lipschitz_ = 1.0;
      return;
    }
    if (rho_max / spacing > kMaxNodes) throw RangeError("density range too large to tabulate phi");
    const auto n = static_cast<std::size_t>(std::ceil(rho_max / spacing));
    h_ = rho_max / static_cast<double>(n);
    value_.resize(n + 1);
    slope_.resize(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
      const double rho = h_ * static_cast<double>(i);
      if (i == 0) {
        value_[i] = 0.0;
        slope_[i] = table.rate_fn()(1);
      } else {
        const double phi = table.fugacity_of_density(rho);
        const auto s = table.moments(phi);
        value_[i] = s.mean_rate();
        slope_[i] = phi / s.variance();
      }
      lipschitz_ = std::max(lipschitz_, slope_[i]);
    }
  }

  double rho_max() const noexcept { return rho_max_; }
  bool in_range(double rho) const noexcept { return rho >= 0.0 && rho <= rho_max_; }

  /// Upper bound on phi' over the table range (<= g*).
  double lipschitz() const noexcept { return lipschitz_; }

  double operator()(double rho) const noexcept {
    switch (kind_) {
      case JumpRateFn::Kind::linear: return rho;
      case JumpRateFn::Kind::indicator: return rho / (1.0 + rho);
      default: break;
    }
    double u = rho / h_;
    auto i = static_cast<std::size_t>(u);
    if (i >= value_.size() - 1) i = value_.size() - 2;
    const double s = u - static_cast<double>(i);
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * value_[i] + (s3 - 2 * s2 + s) * h_ * slope_[i] +
           (-2 * s3 + 3 * s2) * value_[i + 1] + (s3 - s2) * h_ * slope_[i + 1];
  }

 private:
  static constexpr double kMaxNodes = 1 << 22;
  JumpRateFn::Kind kind_;
  double rho_max_;
  double h_ = 0.0;
  double lipschitz_ = 0.0;
  std::vector<double> value_, slope_;
};

}  // namespace zrpperc
