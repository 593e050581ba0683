#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zrpperc/errors.hpp"

namespace zrpperc {

enum class Boundary : std::uint8_t { periodic = 0, free = 1 };

inline std::string to_string(Boundary b) { return b == Boundary::periodic ? "periodic" : "free"; }

inline Boundary parse_boundary(std::string_view s) {
  if (s == "periodic" || s == "torus") return Boundary::periodic;
  if (s == "free") return Boundary::free;
  throw ParameterError("unknown boundary '" + std::string(s) + "' (expected periodic|free)");
}

/// Hypercubic box with side lengths `dims`. Site indices are row-major with
/// the first coordinate running fastest. Bonds are addressed by
/// (site, positive direction): bond (x, k) joins x and x + e_k.
class Lattice {
 public:
  Lattice() = default;

  Lattice(std::vector<int> dims, Boundary boundary) : dims_(std::move(dims)), boundary_(boundary) {
    if (dims_.size() < 2) throw DimensionError("lattice dimension must be at least 2");
    strides_.resize(dims_.size());
    std::size_t s = 1;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      if (dims_[k] < 2) throw DimensionError("every lattice side must be at least 2");
      strides_[k] = s;
      s *= static_cast<std::size_t>(dims_[k]);
    }
    num_sites_ = s;
  }

  int dim() const noexcept { return static_cast<int>(dims_.size()); }
  const std::vector<int>& dims() const noexcept { return dims_; }
  int side(int k) const noexcept { return dims_[static_cast<std::size_t>(k)]; }
  Boundary boundary() const noexcept { return boundary_; }
  bool periodic() const noexcept { return boundary_ == Boundary::periodic; }
  std::size_t num_sites() const noexcept { return num_sites_; }
  std::size_t stride(int k) const noexcept { return strides_[static_cast<std::size_t>(k)]; }
  std::size_t bond_slots() const noexcept { return num_sites_ * dims_.size(); }

  int coord(std::size_t site, int k) const noexcept {
    return static_cast<int>((site / strides_[static_cast<std::size_t>(k)]) %
                            static_cast<std::size_t>(dims_[static_cast<std::size_t>(k)]));
  }

  std::vector<int> coords(std::size_t site) const {
    std::vector<int> c(dims_.size());
    for (int k = 0; k < dim(); ++k) c[static_cast<std::size_t>(k)] = coord(site, k);
    return c;
  }

  /// Site from coordinates; coordinates are wrapped modulo the side length.
  std::size_t site(const std::vector<int>& c) const {
    std::size_t s = 0;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
      const int L = dims_[k];
      const int w = ((c[k] % L) + L) % L;
      s += static_cast<std::size_t>(w) * strides_[k];
    }
    return s;
  }

  /// Neighbor of `site` in direction `k` (sign +1 or -1); nullopt across a
  /// free boundary.
  std::optional<std::size_t> neighbor(std::size_t site, int k, int sign) const noexcept {
    const auto ku = static_cast<std::size_t>(k);
    const int c = coord(site, k);
    const int L = dims_[ku];
    int n = c + sign;
    if (n < 0 || n >= L) {
      if (!periodic()) return std::nullopt;
      n = (n + L) % L;
    }
    return site + static_cast<std::size_t>(n) * strides_[ku] - static_cast<std::size_t>(c) * strides_[ku];
  }

  /// Whether the bond slot (site, k) is a real bond of the box.
  bool bond_exists(std::size_t site, int k) const noexcept {
    return periodic() || coord(site, k) + 1 < side(k);
  }

  std::size_t bond_index(std::size_t site, int k) const noexcept {
    return site * dims_.size() + static_cast<std::size_t>(k);
  }

  std::size_t num_bonds() const noexcept {
    if (periodic()) return bond_slots();
    std::size_t total = 0;
    for (int k = 0; k < dim(); ++k)
      total += num_sites_ / static_cast<std::size_t>(side(k)) * static_cast<std::size_t>(side(k) - 1);
    return total;
  }

  bool operator==(const Lattice& o) const { return dims_ == o.dims_ && boundary_ == o.boundary_; }

 private:
  std::vector<int> dims_;
  std::vector<std::size_t> strides_;
  Boundary boundary_ = Boundary::periodic;
  std::size_t num_sites_ = 0;
};

}  // namespace zrpperc
