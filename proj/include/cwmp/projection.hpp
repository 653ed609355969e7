#pragma once

// Energy-constrained projection: maximise sum_{j in S} |g_j| subject to a
// cardinality cap and an energy budget sum_{j in S} c_j <= E.
//
//  - greedy_fractional: optimal solution of the LP relaxation (0 <= m_j <= 1,
//    energy constraint only) with a KKT certificate (lambda, alpha, beta).
//  - verify_kkt: independent check of such a certificate.
//  - exact_01: brute-force 0/1 optimum, test oracle for small d.
//  - budgeted_cwmp: efficiency-ranked selection under both constraints.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cwmp/errors.hpp"
#include "cwmp/model.hpp"
#include "cwmp/sparsifier.hpp"

namespace cwmp {

inline constexpr double kKktTolerance = 1e-9;
inline constexpr double kFeasibilitySlack = 1e-12;
inline constexpr std::size_t kMaxExactDimension = 20;

struct KnapsackInstance {
  std::vector<double> magnitudes;  // |g_j| >= 0
  std::vector<double> costs;       // c_j > 0
  double e_budget = 0.0;
  std::optional<std::size_t> k_sparsity;

  std::size_t size() const noexcept { return magnitudes.size(); }

  void validate() const {
    if (magnitudes.size() != costs.size()) throw ConfigError("magnitudes and costs differ in length");
    if (!(e_budget > 0.0)) throw ConfigError("energy budget must be positive");
    for (double g : magnitudes)
      if (!(g >= 0.0) || !std::isfinite(g)) throw ConfigError("magnitudes must be finite and non-negative");
    for (double c : costs)
      if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("costs must be finite and strictly positive");
  }

  double score(std::size_t j) const { return magnitudes[j] / costs[j]; }
};

struct FractionalSolution {
  std::vector<double> m;
  double objective = 0.0;
  double energy_used = 0.0;
};

struct KktCertificate {
  double lambda = 0.0;
  std::vector<double> alpha;  // multipliers of m_j >= 0
  std::vector<double> beta;   // multipliers of m_j <= 1
};

struct KktVerdict {
  bool ok = true;
  std::vector<std::string> reasons;

  explicit operator bool() const noexcept { return ok; }
  void fail(std::string why) {
    ok = false;
    reasons.push_back(std::move(why));
  }
};

namespace detail {

// All indices ranked by efficiency (descending, ties by ascending index).
inline std::vector<std::size_t> efficiency_ranking(std::span<const double> magnitudes, std::span<const double> costs) {
  std::vector<std::size_t> order(magnitudes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), EfficiencyOrder{magnitudes, costs});
  return order;
}

}  // namespace detail

/// Greedy solution of the LP relaxation of the energy-constrained problem.
///
/// Items are admitted in efficiency order until the budget runs out; the
/// item that exhausts it is taken fractionally if it does not fit. lambda is
/// the efficiency score of that marginal item, or 0 when every item fits.
/// k_sparsity is ignored.
inline std::pair<FractionalSolution, KktCertificate> greedy_fractional(const KnapsackInstance& inst) {
  inst.validate();
  const std::size_t d = inst.size();
  const auto order = detail::efficiency_ranking(inst.magnitudes, inst.costs);

  FractionalSolution sol;
  sol.m.assign(d, 0.0);
  double remaining = inst.e_budget;
  std::optional<std::size_t> marginal;
  for (std::size_t pos = 0; pos < d; ++pos) {
    const std::size_t j = order[pos];
    const double c = inst.costs[j];
    if (c <= remaining) {
      sol.m[j] = 1.0;
      remaining -= c;
      if (remaining <= 0.0) {
        if (pos + 1 < d) marginal = j;
        break;
      }
    } else {
      sol.m[j] = remaining / c;
      marginal = j;
      break;
    }
  }

  KktCertificate cert;
  cert.lambda = marginal ? inst.score(*marginal) : 0.0;
  cert.alpha.assign(d, 0.0);
  cert.beta.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    const double reduced = inst.magnitudes[j] - cert.lambda * inst.costs[j];
    if (sol.m[j] == 1.0)
      cert.beta[j] = std::max(0.0, reduced);
    else if (sol.m[j] == 0.0)
      cert.alpha[j] = std::max(0.0, -reduced);
    sol.objective += sol.m[j] * inst.magnitudes[j];
    sol.energy_used += sol.m[j] * inst.costs[j];
  }
  return {std::move(sol), std::move(cert)};
}

/// Checks primal feasibility, dual feasibility, stationarity
/// |g_j| - lambda c_j = beta_j - alpha_j, complementary slackness, and the
/// equivalent threshold form: m_j = 1 needs s_j >= lambda, m_j = 0 needs
/// s_j <= lambda, a fractional m_j needs s_j = lambda.
inline KktVerdict verify_kkt(const KnapsackInstance& inst, const FractionalSolution& sol, const KktCertificate& cert) {
  KktVerdict v;
  const std::size_t d = inst.size();
  if (inst.costs.size() != d || sol.m.size() != d || cert.alpha.size() != d || cert.beta.size() != d) {
    v.fail("dimension mismatch");
    return v;
  }
  const double tol = kKktTolerance;
  if (!(cert.lambda >= 0.0)) v.fail("dual feasibility: lambda < 0");

  double energy = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const std::string at = " at j=" + std::to_string(j);
    const double m = sol.m[j];
    const double a = cert.alpha[j];
    const double b = cert.beta[j];
    if (m < -kFeasibilitySlack || m > 1.0 + kFeasibilitySlack) v.fail("primal feasibility: m outside [0,1]" + at);
    if (a < -tol || b < -tol) v.fail("dual feasibility: negative alpha/beta" + at);
    const double reduced = inst.magnitudes[j] - cert.lambda * inst.costs[j];
    if (std::fabs(reduced - (b - a)) > tol) v.fail("stationarity" + at);
    if (std::fabs(a * m) > tol) v.fail("complementary slackness alpha*m" + at);
    if (std::fabs(b * (m - 1.0)) > tol) v.fail("complementary slackness beta*(m-1)" + at);

    const double s = inst.score(j);
    if (m >= 1.0 - kFeasibilitySlack) {
      if (s < cert.lambda - tol) v.fail("threshold: selected item has score below lambda" + at);
    } else if (m <= kFeasibilitySlack) {
      if (s > cert.lambda + tol) v.fail("threshold: rejected item has score above lambda" + at);
    } else if (std::fabs(s - cert.lambda) > tol) {
      v.fail("threshold: fractional item has score != lambda" + at);
    }
    energy += m * inst.costs[j];
  }
  if (energy > inst.e_budget + kFeasibilitySlack) v.fail("primal feasibility: energy budget exceeded");
  if (std::fabs(cert.lambda * (inst.e_budget - energy)) > tol) v.fail("complementary slackness lambda*(E - m^T c)");
  return v;
}

struct ExactSolution {
  std::vector<double> m;  // 0/1
  double objective = 0.0;
  double energy = 0.0;
};

/// Exhaustive 0/1 optimum under the energy budget and, when present, the
/// cardinality cap. Ties keep the subset enumerated first.
inline ExactSolution exact_01(const KnapsackInstance& inst) {
  inst.validate();
  const std::size_t d = inst.size();
  if (d > kMaxExactDimension)
    throw ConfigError("exact_01 enumerates subsets and refuses d > " + std::to_string(kMaxExactDimension));
  const std::size_t cap = inst.k_sparsity.value_or(d);

  std::uint32_t best_subset = 0;
  double best_objective = 0.0;
  double best_energy = 0.0;
  const std::uint32_t n_subsets = std::uint32_t{1} << d;
  for (std::uint32_t subset = 1; subset < n_subsets; ++subset) {
    if (static_cast<std::size_t>(std::popcount(subset)) > cap) continue;
    double energy = 0.0;
    double objective = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      if (subset & (std::uint32_t{1} << j)) {
        energy += inst.costs[j];
        objective += inst.magnitudes[j];
      }
    }
    if (energy <= inst.e_budget && objective > best_objective) {
      best_subset = subset;
      best_objective = objective;
      best_energy = energy;
    }
  }
  ExactSolution out;
  out.m.assign(d, 0.0);
  for (std::size_t j = 0; j < d; ++j)
    if (best_subset & (std::uint32_t{1} << j)) out.m[j] = 1.0;
  out.objective = best_objective;
  out.energy = best_energy;
  return out;
}

/// Efficiency-ranked selection under both constraints: walk the ranking and
/// admit items while |S| < k and the next item still fits the remaining
/// budget. Stops at the first item that does not fit, so with k >= d the
/// support equals the fully selected part of greedy_fractional.
inline PruningMask budgeted_cwmp(const GradientVector& grad, const CostVector& costs, std::size_t k,
                                 double e_budget) {
  if (grad.size() != costs.size()) throw ConfigError("gradient and cost vector lengths differ");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (!(e_budget > 0.0)) throw ConfigError("energy budget must be positive");
  std::vector<double> magnitudes(grad.size());
  for (std::size_t j = 0; j < grad.size(); ++j) magnitudes[j] = std::fabs(grad[j]);
  const auto order = detail::efficiency_ranking(magnitudes, costs.values());

  std::vector<std::size_t> picked;
  double energy = 0.0;
  for (auto j : order) {
    if (picked.size() >= k) break;
    if (energy + costs[j] > e_budget) break;
    energy += costs[j];
    picked.push_back(j);
  }
  return PruningMask(std::move(picked), grad.size());
}

}  // namespace cwmp
