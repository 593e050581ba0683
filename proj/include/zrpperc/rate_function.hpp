#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "zrpperc/errors.hpp"

namespace zrpperc {

/// Jump rate g: N -> [0, inf) of the zero range process. Builtins are
/// linear (g(k) = k), indicator (g(k) = 1{k >= 1}) and capped linear
/// (g(k) = min(k, K)); a user table lists g(1..n) and declares how g
/// continues past the table (held constant, or growing with a fixed slope).
class JumpRateFn {
 public:
  enum class Kind : std::uint8_t { linear, indicator, capped_linear, table };
  enum class Tail : std::uint8_t { constant, linear };

  static JumpRateFn linear() { return JumpRateFn(Kind::linear, {}, Tail::linear, 1.0, 0); }
  static JumpRateFn indicator() { return JumpRateFn(Kind::indicator, {}, Tail::constant, 0.0, 0); }
  static JumpRateFn capped_linear(int cap) {
    if (cap < 1) throw ParameterError("capped-linear rate needs K >= 1");
    return JumpRateFn(Kind::capped_linear, {}, Tail::constant, 0.0, cap);
  }
  /// values[i] = g(i+1). With Tail::linear, g(n+j) = g(n) + j*slope.
  static JumpRateFn table(std::vector<double> values, Tail tail, double slope = 0.0) {
    JumpRateFn f(Kind::table, std::move(values), tail, slope, 0);
    f.validate_table();
    return f;
  }

  /// "linear", "indicator", "capped:K", or "table:g1,g2,...[;const|;slope=s]".
  static JumpRateFn parse(std::string_view s) {
    if (s == "linear") return linear();
    if (s == "indicator") return indicator();
    if (s.starts_with("capped:")) return capped_linear(std::stoi(std::string(s.substr(7))));
    if (s.starts_with("table:")) {
      std::string body(s.substr(6));
      Tail tail = Tail::constant;
      double slope = 0.0;
      if (auto semi = body.find(';'); semi != std::string::npos) {
        const std::string t = body.substr(semi + 1);
        body = body.substr(0, semi);
        if (t.starts_with("slope=")) {
          tail = Tail::linear;
          slope = std::stod(t.substr(6));
        } else if (t != "const") {
          throw ParameterError("table tail must be 'const' or 'slope=<s>'");
        }
      }
      std::vector<double> vals;
      std::stringstream ss(body);
      for (std::string tok; std::getline(ss, tok, ',');) vals.push_back(std::stod(tok));
      return table(std::move(vals), tail, slope);
    }
    throw ParameterError("unknown rate function '" + std::string(s) + "'");
  }

  double operator()(std::int64_t k) const noexcept {
    if (k <= 0) return 0.0;
    switch (kind_) {
      case Kind::linear: return static_cast<double>(k);
      case Kind::indicator: return 1.0;
      case Kind::capped_linear: return static_cast<double>(std::min<std::int64_t>(k, cap_));
      case Kind::table: {
        const auto n = static_cast<std::int64_t>(values_.size());
        if (k <= n) return values_[static_cast<std::size_t>(k - 1)];
        return tail_ == Tail::constant ? values_.back() : values_.back() + static_cast<double>(k - n) * slope_;
      }
    }
    return 0.0;
  }

  /// sup_k |g(k+1) - g(k)|.
  double gstar() const noexcept {
    switch (kind_) {
      case Kind::linear: return 1.0;
      case Kind::indicator: return 1.0;
      case Kind::capped_linear: return 1.0;
      case Kind::table: {
        double best = values_.front();
        for (std::size_t i = 1; i < values_.size(); ++i) best = std::max(best, values_[i] - values_[i - 1]);
        if (tail_ == Tail::linear) best = std::max(best, slope_);
        return best;
      }
    }
    return 0.0;
  }

  /// Radius of convergence of sum phi^k / g(k)!, i.e. lim g(k) (the
  /// eventual growth rate of g(k)!^(1/k)); +inf when g is unbounded.
  double phi_c() const noexcept {
    switch (kind_) {
      case Kind::linear: return std::numeric_limits<double>::infinity();
      case Kind::indicator: return 1.0;
      case Kind::capped_linear: return static_cast<double>(cap_);
      case Kind::table:
        return tail_ == Tail::linear && slope_ > 0.0 ? std::numeric_limits<double>::infinity() : values_.back();
    }
    return 0.0;
  }

  Kind kind() const noexcept { return kind_; }

  std::string name() const {
    switch (kind_) {
      case Kind::linear: return "linear";
      case Kind::indicator: return "indicator";
      case Kind::capped_linear: return "capped:" + std::to_string(cap_);
      case Kind::table: {
        std::ostringstream os;
        os.precision(17);
        os << "table:";
        for (std::size_t i = 0; i < values_.size(); ++i) os << (i ? "," : "") << values_[i];
        if (tail_ == Tail::linear) os << ";slope=" << slope_;
        else os << ";const";
        return os.str();
      }
    }
    return "?";
  }

 private:
  JumpRateFn(Kind kind, std::vector<double> values, Tail tail, double slope, int cap)
      : kind_(kind), values_(std::move(values)), tail_(tail), slope_(slope), cap_(cap) {}

  void validate_table() const {
    if (values_.empty()) throw ParameterError("rate table must list at least g(1)");
    if (!(values_.front() > 0.0)) throw ParameterError("rate table: g(k) must be positive for k >= 1");
    for (std::size_t i = 1; i < values_.size(); ++i)
      if (!(values_[i] >= values_[i - 1])) throw ParameterError("rate table: g must be nondecreasing");
    if (tail_ == Tail::linear && !(slope_ >= 0.0)) throw ParameterError("rate table: tail slope must be >= 0");
    for (double v : values_)
      if (!std::isfinite(v)) throw ParameterError("rate table: values must be finite");
  }

  Kind kind_;
  std::vector<double> values_;
  Tail tail_;
  double slope_;
  int cap_;
};

}  // namespace zrpperc
