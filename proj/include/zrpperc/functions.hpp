#pragma once

// Macroscopic functions on the unit torus: initial density profiles and
// test functions (trig modes and compact bumps) with analytic derivatives.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "zrpperc/errors.hpp"

namespace zrpperc {

namespace detail {

inline std::vector<double> parse_numbers(std::string_view body) {
  std::vector<double> out;
  std::stringstream ss{std::string(body)};
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ParameterError("cannot parse number '" + tok + "'");
    }
  }
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss{std::string(s)};
  for (std::string tok; std::getline(ss, tok, sep);)
    if (!tok.empty()) out.push_back(tok);
  return out;
}

/// Signed minimal-image offset on the unit circle, in [-1/2, 1/2).
inline double torus_offset(double a, double b) {
  double d = a - b;
  d -= std::floor(d + 0.5);
  return d;
}

inline double frac(double x) { return x - std::floor(x); }

}  // namespace detail

/// Smooth test function: a sum of terms a*cos(2*pi*k.x + phase) and
/// compact bumps a*exp(1 - 1/(1 - |x-c|^2/r^2)) with periodic distance.
class TestFunction {
 public:
  struct Trig {
    double amplitude;
    std::vector<int> wave;
    double phase;
  };
  struct Bump {
    double amplitude;
    std::vector<double> center;
    double radius;
  };

  TestFunction() = default;
  explicit TestFunction(int dim) : dim_(dim) {}

  static TestFunction cosine(int dim, double amplitude, std::vector<int> wave, double phase = 0.0) {
    TestFunction f(dim);
    f.add_trig(amplitude, std::move(wave), phase);
    return f;
  }
  static TestFunction bump(int dim, double amplitude, std::vector<double> center, double radius) {
    TestFunction f(dim);
    f.add_bump(amplitude, std::move(center), radius);
    return f;
  }

  TestFunction& add_trig(double amplitude, std::vector<int> wave, double phase = 0.0) {
    if (static_cast<int>(wave.size()) != dim_) throw DimensionError("wave vector length must equal dimension");
    trig_.push_back({amplitude, std::move(wave), phase});
    return *this;
  }
  TestFunction& add_bump(double amplitude, std::vector<double> center, double radius) {
    if (static_cast<int>(center.size()) != dim_) throw DimensionError("bump center length must equal dimension");
    if (!(radius > 0.0 && radius <= 0.5)) throw ParameterError("bump radius must lie in (0, 1/2]");
    bump_.push_back({amplitude, std::move(center), radius});
    return *this;
  }

  /// Terms joined by '+': "cos:a,k1,..,kd[,phase]", "sin:a,k1,..,kd",
  /// "bump:a,c1,..,cd,r", "const:a".
  static TestFunction parse(std::string_view s, int dim) {
    TestFunction f(dim);
    for (const auto& term : detail::split(s, '+')) {
      const auto colon = term.find(':');
      if (colon == std::string::npos) throw ParameterError("test function term needs 'kind:params': " + term);
      const auto kind = term.substr(0, colon);
      const auto v = detail::parse_numbers(term.substr(colon + 1));
      const auto d = static_cast<std::size_t>(dim);
      if (kind == "cos" || kind == "sin") {
        if (v.size() != d + 1 && v.size() != d + 2) throw ParameterError("cos/sin term needs a,k1..kd[,phase]");
        std::vector<int> k(d);
        for (std::size_t i = 0; i < d; ++i) k[i] = static_cast<int>(std::lround(v[i + 1]));
        double phase = v.size() == d + 2 ? v[d + 1] : 0.0;
        if (kind == "sin") phase -= std::numbers::pi / 2;
        f.add_trig(v[0], k, phase);
      } else if (kind == "bump") {
        if (v.size() != d + 2) throw ParameterError("bump term needs a,c1..cd,r");
        f.add_bump(v[0], std::vector<double>(v.begin() + 1, v.begin() + 1 + dim), v[d + 1]);
      } else if (kind == "const") {
        if (v.size() != 1) throw ParameterError("const term needs one value");
        f.add_trig(v[0], std::vector<int>(d, 0));
      } else {
        throw ParameterError("unknown test function term '" + kind + "'");
      }
    }
    if (f.trig_.empty() && f.bump_.empty()) throw ParameterError("empty test function");
    f.descriptor_ = std::string(s);
    return f;
  }

  int dim() const noexcept { return dim_; }
  const std::string& descriptor() const noexcept { return descriptor_; }
  void set_descriptor(std::string s) { descriptor_ = std::move(s); }

  double operator()(const std::vector<double>& x) const noexcept {
    double v = 0.0;
    for (const auto& t : trig_) v += t.amplitude * std::cos(angle(t, x));
    for (const auto& b : bump_) {
      const double s = bump_s(b, x);
      if (s < 1.0) v += b.amplitude * std::exp(1.0 - 1.0 / (1.0 - s));
    }
    return v;
  }

  std::vector<double> gradient(const std::vector<double>& x) const {
    std::vector<double> g(static_cast<std::size_t>(dim_), 0.0);
    constexpr double tau = 2 * std::numbers::pi;
    for (const auto& t : trig_) {
      const double sn = std::sin(angle(t, x));
      for (int i = 0; i < dim_; ++i) g[i] -= t.amplitude * tau * t.wave[i] * sn;
    }
    for (const auto& b : bump_) {
      const double s = bump_s(b, x);
      if (s >= 1.0) continue;
      const double q = 1.0 - s;
      const double f = std::exp(1.0 - 1.0 / q);
      const double dfds = -f / (q * q);
      for (int i = 0; i < dim_; ++i) {
        const double y = detail::torus_offset(x[i], b.center[i]);
        g[i] += b.amplitude * dfds * 2.0 * y / (b.radius * b.radius);
      }
    }
    return g;
  }

  /// Row-major d x d Hessian.
  std::vector<double> hessian(const std::vector<double>& x) const {
    const auto d = static_cast<std::size_t>(dim_);
    std::vector<double> H(d * d, 0.0);
    constexpr double tau = 2 * std::numbers::pi;
    for (const auto& t : trig_) {
      const double c = std::cos(angle(t, x));
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) H[i * d + j] -= t.amplitude * tau * tau * t.wave[i] * t.wave[j] * c;
    }
    for (const auto& b : bump_) {
      const double s = bump_s(b, x);
      if (s >= 1.0) continue;
      const double q = 1.0 - s;
      const double f = std::exp(1.0 - 1.0 / q);
      const double f1 = -f / (q * q);                          // df/ds
      const double f2 = f / (q * q * q * q) - 2.0 * f / (q * q * q);  // d2f/ds2
      const double r2 = b.radius * b.radius;
      std::vector<double> y(d);
      for (std::size_t i = 0; i < d; ++i) y[i] = detail::torus_offset(x[i], b.center[i]);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double h = f2 * (2.0 * y[i] / r2) * (2.0 * y[j] / r2);
          if (i == j) h += f1 * 2.0 / r2;
          H[i * d + j] += b.amplitude * h;
        }
    }
    return H;
  }

  /// sum_ij D_ij d_i d_j G.
  double div_grad(const std::vector<double>& x, const std::vector<double>& D) const {
    const auto H = hessian(x);
    double v = 0.0;
    for (std::size_t i = 0; i < H.size(); ++i) v += D[i] * H[i];
    return v;
  }

  /// Upper bound on sum_i sup |d_i G|, the Lipschitz constant for the
  /// l-infinity distance.
  double lipschitz_linf() const {
    constexpr double tau = 2 * std::numbers::pi;
    double L = 0.0;
    for (const auto& t : trig_)
      for (int k : t.wave) L += std::abs(t.amplitude) * tau * std::abs(k);
    if (!bump_.empty()) {
      double sup_df = 0.0;  // sup over radius u in [0,1) of |d/du exp(1 - 1/(1-u^2))|
      for (int i = 1; i < 20000; ++i) {
        const double u = i / 20000.0;
        const double q = 1.0 - u * u;
        sup_df = std::max(sup_df, std::exp(1.0 - 1.0 / q) * 2.0 * u / (q * q));
      }
      for (const auto& b : bump_) L += static_cast<double>(dim_) * std::abs(b.amplitude) * sup_df / b.radius;
    }
    return L;
  }

  /// Whether the closed support of G, widened by `margin`, contains x
  /// (trig terms have full support).
  bool near_support(const std::vector<double>& x, double margin) const {
    if (!trig_.empty()) return true;
    for (const auto& b : bump_) {
      double r2 = 0.0;
      for (int i = 0; i < dim_; ++i) {
        const double y = detail::torus_offset(x[i], b.center[i]);
        r2 += y * y;
      }
      if (std::sqrt(r2) <= b.radius + margin) return true;
    }
    return false;
  }

 private:
  static double angle(const Trig& t, const std::vector<double>& x) noexcept {
    double a = t.phase;
    for (std::size_t i = 0; i < t.wave.size(); ++i) a += 2 * std::numbers::pi * t.wave[i] * x[i];
    return a;
  }
  static double bump_s(const Bump& b, const std::vector<double>& x) noexcept {
    double r2 = 0.0;
    for (std::size_t i = 0; i < b.center.size(); ++i) {
      const double y = detail::torus_offset(x[i], b.center[i]);
      r2 += y * y;
    }
    return r2 / (b.radius * b.radius);
  }

  int dim_ = 2;
  std::vector<Trig> trig_;
  std::vector<Bump> bump_;
  std::string descriptor_;
};

/// Bounded nonnegative initial density on the unit torus.
///   const:c                 c
///   step:a,b                a on x1 in [-1/2, 0), b on [0, 1/2) (mod 1)
///   smoothstep:mean,amp,k   mean + amp*tanh(k sin(2 pi x1))/tanh(k)
///   gauss:base,amp,w        base + amp * periodized Gaussian of width w at (1/2,..)
///   trig:base,amp,k1..kd    base + amp*cos(2 pi k.x)
class Profile {
 public:
  enum class Kind { constant, step, smoothstep, gauss, trig };

  Profile() = default;

  static Profile constant(double c) { return make(Kind::constant, {c}, 2); }

  static Profile parse(std::string_view s, int dim) {
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) throw ParameterError("profile needs 'kind:params'");
    const auto kind = s.substr(0, colon);
    const auto v = detail::parse_numbers(s.substr(colon + 1));
    Profile p;
    if (kind == "const" && v.size() == 1) p = make(Kind::constant, v, dim);
    else if (kind == "step" && v.size() == 2) p = make(Kind::step, v, dim);
    else if (kind == "smoothstep" && v.size() == 3) p = make(Kind::smoothstep, v, dim);
    else if (kind == "gauss" && v.size() == 3 && v[1] >= 0.0 && v[2] > 0.0) p = make(Kind::gauss, v, dim);
    else if (kind == "trig" && v.size() == static_cast<std::size_t>(dim) + 2) p = make(Kind::trig, v, dim);
    else throw ParameterError("bad profile descriptor '" + std::string(s) + "'");
    p.descriptor_ = std::string(s);
    if (p.lower_bound() < 0.0) throw ParameterError("profile must be nonnegative");
    return p;
  }

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  const std::string& descriptor() const noexcept { return descriptor_; }
  const std::vector<double>& params() const noexcept { return par_; }

  double operator()(const std::vector<double>& x) const noexcept {
    switch (kind_) {
      case Kind::constant: return par_[0];
      case Kind::step: return detail::frac(x[0]) >= 0.5 ? par_[0] : par_[1];
      case Kind::smoothstep:
        return par_[0] + par_[1] * std::tanh(par_[2] * std::sin(2 * std::numbers::pi * x[0])) / std::tanh(par_[2]);
      case Kind::gauss: {
        const double w2 = par_[2] * par_[2];
        double total = 1.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
          double s = 0.0;
          for (int img = -4; img <= 4; ++img) {
            const double y = detail::frac(x[i]) - 0.5 + img;
            s += std::exp(-y * y / (2.0 * w2));
          }
          total *= s;
        }
        return par_[0] + par_[1] * total;
      }
      case Kind::trig: {
        double a = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) a += 2 * std::numbers::pi * par_[2 + i] * x[i];
        return par_[0] + par_[1] * std::cos(a);
      }
    }
    return 0.0;
  }

  double upper_bound() const noexcept {
    switch (kind_) {
      case Kind::constant: return par_[0];
      case Kind::step: return std::max(par_[0], par_[1]);
      case Kind::smoothstep: return par_[0] + std::abs(par_[1]);
      case Kind::gauss: return par_[0] + std::max(0.0, par_[1]) * std::pow(1.0 + 2.0 * std::exp(-1.0 / (2.0 * par_[2] * par_[2])) * 1.01, dim_);
      case Kind::trig: return par_[0] + std::abs(par_[1]);
    }
    return 0.0;
  }

  double lower_bound() const noexcept {
    switch (kind_) {
      case Kind::constant: return par_[0];
      case Kind::step: return std::min(par_[0], par_[1]);
      case Kind::smoothstep: return par_[0] - std::abs(par_[1]);
      case Kind::gauss: return par_[0];
      case Kind::trig: return par_[0] - std::abs(par_[1]);
    }
    return 0.0;
  }

 private:
  static Profile make(Kind k, std::vector<double> par, int dim) {
    Profile p;
    p.kind_ = k;
    p.par_ = std::move(par);
    p.dim_ = dim;
    return p;
  }

  Kind kind_ = Kind::constant;
  std::vector<double> par_{0.0};
  int dim_ = 2;
  std::string descriptor_ = "const:0";
};

}  // namespace zrpperc
