#pragma once

// Gradient sparsification: Top-K magnitude pruning, cost-weighted magnitude
// pruning (CWMP), a uniform random-k baseline, and energy accounting of the
// resulting masks. Indices are 0-based throughout.
//
// Ties are broken by ascending index in every ranking so that CWMP with a
// uniform cost vector reproduces the Top-K mask bit for bit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cwmp/errors.hpp"
#include "cwmp/model.hpp"
#include "cwmp/rng.hpp"

namespace cwmp {

/// Strictly positive per-parameter energy atoms.
class CostVector {
 public:
  CostVector() = default;
  explicit CostVector(std::vector<double> costs) : costs_(std::move(costs)) {
    for (std::size_t j = 0; j < costs_.size(); ++j)
      if (!(costs_[j] > 0.0) || !std::isfinite(costs_[j]))
        throw ConfigError("cost at index " + std::to_string(j) + " must be finite and strictly positive");
  }

  static CostVector uniform(std::size_t d, double alpha) { return CostVector(std::vector<double>(d, alpha)); }

  std::size_t size() const noexcept { return costs_.size(); }
  double operator[](std::size_t j) const { return costs_[j]; }
  std::span<const double> values() const noexcept { return costs_; }

 private:
  std::vector<double> costs_;
};

/// Sorted, duplicate-free support set inside {0, ..., dim-1}.
class PruningMask {
 public:
  PruningMask() = default;
  PruningMask(std::vector<std::size_t> indices, std::size_t dim) : selected_(std::move(indices)), dim_(dim) {
    std::sort(selected_.begin(), selected_.end());
    if (std::adjacent_find(selected_.begin(), selected_.end()) != selected_.end())
      throw ConfigError("mask indices must be unique");
    if (!selected_.empty() && selected_.back() >= dim_) throw ConfigError("mask index out of range");
  }

  static PruningMask full(std::size_t dim) {
    std::vector<std::size_t> all(dim);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return PruningMask(std::move(all), dim);
  }

  const std::vector<std::size_t>& indices() const noexcept { return selected_; }
  std::size_t size() const noexcept { return selected_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  bool contains(std::size_t j) const { return std::binary_search(selected_.begin(), selected_.end(), j); }

  /// 0/1 indicator vector of length dim.
  std::vector<double> indicator() const {
    std::vector<double> m(dim_, 0.0);
    for (auto j : selected_) m[j] = 1.0;
    return m;
  }

  bool operator==(const PruningMask&) const = default;

 private:
  std::vector<std::size_t> selected_;
  std::size_t dim_ = 0;
};

/// Transmitted payload: gradient values on the mask support, ascending index.
struct SparseUpdate {
  std::vector<std::size_t> indices;
  std::vector<double> values;
  std::size_t dim = 0;

  std::size_t payload() const noexcept { return indices.size(); }

  GradientVector densify() const {
    GradientVector out(dim);
    for (std::size_t i = 0; i < indices.size(); ++i) out[indices[i]] = values[i];
    return out;
  }
};

struct EnergyReport {
  double energy = 0.0;
  std::size_t payload_indices = 0;
  std::size_t sparsity_budget_k = 0;
};

/// Two-tier cost model: classifier_cost on the final layer, feature_cost on
/// every earlier layer.
inline CostVector build_cost_vector(const ModelParams& params, double classifier_cost, double feature_cost) {
  if (!(classifier_cost > 0.0) || !(feature_cost > 0.0)) throw ConfigError("layer costs must be strictly positive");
  const std::size_t classifier_begin = params.layer_offset(params.num_layers() - 1);
  std::vector<double> c(params.size(), feature_cost);
  std::fill(c.begin() + static_cast<std::ptrdiff_t>(classifier_begin), c.end(), classifier_cost);
  return CostVector(std::move(c));
}

/// k = max(1, round(fraction * d)).
inline std::size_t k_from_fraction(double fraction, std::size_t d) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("sparsity fraction must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d)));
  return std::clamp<std::size_t>(k, 1, d);
}

namespace detail {

inline void check_k(std::size_t k, std::size_t d) {
  if (k < 1 || k > d) throw ConfigError("k=" + std::to_string(k) + " outside [1, " + std::to_string(d) + "]");
}

// Indices of the k best entries under a strict total order `better`.
template <typename Better>
std::vector<std::size_t> select_best(std::size_t d, std::size_t k, Better better) {
  std::vector<std::size_t> idx(d);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Exact comparison of a/b against c/d for non-negative a, c and positive b, d,
// done as a*d versus c*b with error-free products (fma recovers the rounding
// error of each product).
inline int compare_ratios(double a, double b, double c, double d) {
  const double p1 = a * d;
  const double p2 = c * b;
  if (p1 != p2) return p1 < p2 ? -1 : 1;
  const double e1 = std::fma(a, d, -p1);
  const double e2 = std::fma(c, b, -p2);
  if (e1 != e2) return e1 < e2 ? -1 : 1;
  return 0;
}

}  // namespace detail

/// Strict ranking by |g_j| descending, then index ascending.
struct MagnitudeOrder {
  std::span<const double> g;
  bool operator()(std::size_t a, std::size_t b) const {
    const double ma = std::fabs(g[a]), mb = std::fabs(g[b]);
    if (ma != mb) return ma > mb;
    return a < b;
  }
};

/// Strict ranking by efficiency score |g_j| / c_j descending, then index
/// ascending. Scores are compared exactly, so a uniform cost vector never
/// introduces ties that Top-K would not see.
struct EfficiencyOrder {
  std::span<const double> g;
  std::span<const double> c;
  bool operator()(std::size_t a, std::size_t b) const {
    const int cmp = detail::compare_ratios(std::fabs(g[a]), c[a], std::fabs(g[b]), c[b]);
    if (cmp != 0) return cmp > 0;
    return a < b;
  }
};

inline PruningMask top_k_mask(const GradientVector& grad, std::size_t k) {
  detail::check_k(k, grad.size());
  return PruningMask(detail::select_best(grad.size(), k, MagnitudeOrder{grad.values}), grad.size());
}

/// s_j = |g_j| / c_j.
inline std::vector<double> efficiency_scores(const GradientVector& grad, const CostVector& costs) {
  if (grad.size() != costs.size()) throw ConfigError("gradient and cost vector lengths differ");
  std::vector<double> s(grad.size());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = std::fabs(grad[j]) / costs[j];
  return s;
}

/// Keep the k coordinates with the largest efficiency scores.
inline PruningMask cwmp_mask(const GradientVector& grad, const CostVector& costs, std::size_t k) {
  if (grad.size() != costs.size()) throw ConfigError("gradient and cost vector lengths differ");
  detail::check_k(k, grad.size());
  return PruningMask(detail::select_best(grad.size(), k, EfficiencyOrder{grad.values, costs.values()}), grad.size());
}

/// Uniformly random support of size k.
inline PruningMask random_k_mask(std::size_t d, std::size_t k, Rng& rng) {
  detail::check_k(k, d);
  std::vector<std::size_t> all(d);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(k);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), static_cast<std::ptrdiff_t>(k), rng);
  return PruningMask(std::move(picked), d);
}

inline SparseUpdate apply_mask(const GradientVector& grad, const PruningMask& mask) {
  if (grad.size() != mask.dim()) throw ConfigError("gradient and mask dimensions differ");
  SparseUpdate out;
  out.dim = grad.size();
  out.indices = mask.indices();
  out.values.reserve(out.indices.size());
  for (auto j : out.indices) out.values.push_back(grad[j]);
  return out;
}

/// Sum of c_j over the support, accumulated in ascending index order.
inline EnergyReport energy_of(const PruningMask& mask, const CostVector& costs) {
  if (mask.dim() != costs.size()) throw ConfigError("mask and cost vector dimensions differ");
  EnergyReport r;
  for (auto j : mask.indices()) r.energy += costs[j];
  r.payload_indices = mask.size();
  r.sparsity_budget_k = mask.size();
  return r;
}

}  // namespace cwmp
