#pragma once

// Monte-Carlo estimates of the expected energy of Top-K and CWMP masks when
// magnitudes and costs are i.i.d. and mutually independent, plus the
// per-cost-level selection probability phi(c) of CWMP.
//
// Every trial draws from its own substream root.split(trial), and per-trial
// results are stored before being reduced in trial order, so reports depend
// only on the seed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cwmp/errors.hpp"
#include "cwmp/model.hpp"
#include "cwmp/rng.hpp"
#include "cwmp/sparsifier.hpp"

namespace cwmp {

enum class DistributionKind { HalfNormal, Exponential, UniformContinuous, TwoPoint };

/// Parameters by kind:
///   half-normal        {sigma}              |N(0, sigma^2)|
///   exponential        {rate}
///   uniform-continuous {lo, hi}
///   two-point          {a, b, p_a}          a with probability p_a, else b
struct DistributionSpec {
  DistributionKind kind = DistributionKind::HalfNormal;
  std::vector<double> params{1.0};

  static DistributionSpec half_normal(double sigma = 1.0) { return {DistributionKind::HalfNormal, {sigma}}; }
  static DistributionSpec exponential(double rate = 1.0) { return {DistributionKind::Exponential, {rate}}; }
  static DistributionSpec uniform(double lo, double hi) { return {DistributionKind::UniformContinuous, {lo, hi}}; }
  static DistributionSpec two_point(double a, double b, double p_a = 0.5) {
    return {DistributionKind::TwoPoint, {a, b, p_a}};
  }
  static DistributionSpec constant(double value) { return two_point(value, value, 1.0); }

  /// Throws ConfigError on bad parameters. Cost laws need strictly positive
  /// support, magnitude laws non-negative support.
  void validate(bool strictly_positive) const {
    auto need = [&](std::size_t n) {
      if (params.size() != n) throw ConfigError(name() + " takes " + std::to_string(n) + " parameter(s)");
      for (double p : params)
        if (!std::isfinite(p)) throw ConfigError(name() + " parameters must be finite");
    };
    switch (kind) {
      case DistributionKind::HalfNormal:
        need(1);
        if (!(params[0] > 0.0)) throw ConfigError("half-normal sigma must be positive");
        break;
      case DistributionKind::Exponential:
        need(1);
        if (!(params[0] > 0.0)) throw ConfigError("exponential rate must be positive");
        break;
      case DistributionKind::UniformContinuous:
        need(2);
        if (!(params[0] < params[1])) throw ConfigError("uniform-continuous needs lo < hi");
        if (params[0] < 0.0 || (strictly_positive && params[0] <= 0.0))
          throw ConfigError("uniform-continuous support must be positive");
        break;
      case DistributionKind::TwoPoint:
        need(3);
        if (!(params[2] >= 0.0 && params[2] <= 1.0)) throw ConfigError("two-point probability must lie in [0,1]");
        if (params[0] < 0.0 || params[1] < 0.0 || (strictly_positive && (params[0] <= 0.0 || params[1] <= 0.0)))
          throw ConfigError("two-point support must be positive");
        break;
    }
  }

  double sample(Rng& rng) const {
    switch (kind) {
      case DistributionKind::HalfNormal:
        return std::fabs(params[0] * rng.normal());
      case DistributionKind::Exponential:
        return std::exponential_distribution<double>(params[0])(rng);
      case DistributionKind::UniformContinuous:
        return std::uniform_real_distribution<double>(params[0], params[1])(rng);
      case DistributionKind::TwoPoint:
        return rng.uniform() < params[2] ? params[0] : params[1];
    }
    return 0.0;
  }

  double mean() const {
    switch (kind) {
      case DistributionKind::HalfNormal:
        return params[0] * std::sqrt(2.0 / 3.14159265358979323846);
      case DistributionKind::Exponential:
        return 1.0 / params[0];
      case DistributionKind::UniformContinuous:
        return 0.5 * (params[0] + params[1]);
      case DistributionKind::TwoPoint:
        return params[2] * params[0] + (1.0 - params[2]) * params[1];
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case DistributionKind::HalfNormal:
        return "half-normal";
      case DistributionKind::Exponential:
        return "exponential";
      case DistributionKind::UniformContinuous:
        return "uniform-continuous";
      case DistributionKind::TwoPoint:
        return "two-point";
    }
    return "?";
  }

  static DistributionKind parse_kind(std::string_view s) {
    if (s == "half-normal") return DistributionKind::HalfNormal;
    if (s == "exponential") return DistributionKind::Exponential;
    if (s == "uniform-continuous") return DistributionKind::UniformContinuous;
    if (s == "two-point") return DistributionKind::TwoPoint;
    throw ConfigError("unknown distribution kind '" + std::string(s) + "'");
  }
};

struct SampledInstance {
  GradientVector magnitudes;
  CostVector costs;
};

/// d i.i.d. magnitudes and d i.i.d. costs from two independent substreams.
inline SampledInstance sample_instance(const DistributionSpec& spec_g, const DistributionSpec& spec_c, std::size_t d,
                                       std::uint64_t seed) {
  if (d < 1) throw ConfigError("d must be at least 1");
  spec_g.validate(false);
  spec_c.validate(true);
  const Rng root(seed);
  Rng g_rng = root.split(1);
  Rng c_rng = root.split(2);
  std::vector<double> g(d), c(d);
  for (auto& v : g) v = spec_g.sample(g_rng);
  for (auto& v : c) v = spec_c.sample(c_rng);
  return {GradientVector(std::move(g)), CostVector(std::move(c))};
}

struct PhiEstimate {
  double cost = 0.0;
  double phi = 0.0;
  double std_error = 0.0;
};

struct McReport {
  std::size_t trials = 0;
  std::size_t d = 0;
  std::size_t k = 0;
  double mean_energy_topk = 0.0;
  double mean_energy_cwmp = 0.0;
  double stderr_topk = 0.0;
  double stderr_cwmp = 0.0;
  double expected_energy_topk = 0.0;  // k * E[C]
  std::size_t equal_energy_trials = 0;
  std::size_t equal_mask_trials = 0;
  // Mean over trials of the within-trial covariance between C_j and the CWMP
  // selection indicator, with its standard error.
  double cov_cost_selected = 0.0;
  double stderr_cov = 0.0;
  std::vector<PhiEstimate> phi_estimates;  // two-point cost laws only

  double combined_stderr() const { return std::sqrt(stderr_topk * stderr_topk + stderr_cwmp * stderr_cwmp); }
};

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std_error = 0.0;
};

// Two-pass mean and standard error of the mean (sample variance, n - 1).
inline MeanStd mean_stderr(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / static_cast<double>(xs.size());
  if (xs.size() < 2) return out;
  double ss = 0.0;
  for (double x : xs) ss += (x - out.mean) * (x - out.mean);
  out.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  return out;
}

}  // namespace detail

inline McReport estimate_expected_energies(const DistributionSpec& spec_g, const DistributionSpec& spec_c, std::size_t d,
                                           std::size_t k, std::size_t trials, std::uint64_t seed) {
  if (d < 1 || k < 1 || k > d) throw ConfigError("need 1 <= k <= d");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  spec_g.validate(false);
  spec_c.validate(true);

  const bool two_point = spec_c.kind == DistributionKind::TwoPoint;
  const std::vector<double> levels =
      two_point ? (spec_c.params[0] == spec_c.params[1] ? std::vector<double>{spec_c.params[0]}
                                                        : std::vector<double>{std::min(spec_c.params[0], spec_c.params[1]),
                                                                              std::max(spec_c.params[0], spec_c.params[1])})
                : std::vector<double>{};
  std::vector<std::size_t> level_seen(levels.size(), 0), level_picked(levels.size(), 0);

  std::vector<double> e_topk(trials), e_cwmp(trials), cov(trials);
  McReport r;
  r.trials = trials;
  r.d = d;
  r.k = k;
  const Rng root(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto inst = sample_instance(spec_g, spec_c, d, root.split(t).seed());
    const auto m_topk = top_k_mask(inst.magnitudes, k);
    const auto m_cwmp = cwmp_mask(inst.magnitudes, inst.costs, k);
    e_topk[t] = energy_of(m_topk, inst.costs).energy;
    e_cwmp[t] = energy_of(m_cwmp, inst.costs).energy;
    if (e_topk[t] == e_cwmp[t]) ++r.equal_energy_trials;
    if (m_topk == m_cwmp) ++r.equal_mask_trials;

    double c_sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) c_sum += inst.costs[j];
    const double c_bar = c_sum / static_cast<double>(d);
    const double m_bar = static_cast<double>(k) / static_cast<double>(d);
    cov[t] = e_cwmp[t] / static_cast<double>(d) - c_bar * m_bar;

    for (std::size_t l = 0; l < levels.size(); ++l) {
      for (std::size_t j = 0; j < d; ++j)
        if (inst.costs[j] == levels[l]) ++level_seen[l];
      for (auto j : m_cwmp.indices())
        if (inst.costs[j] == levels[l]) ++level_picked[l];
    }
  }

  const auto st = detail::mean_stderr(e_topk);
  const auto sc = detail::mean_stderr(e_cwmp);
  const auto sv = detail::mean_stderr(cov);
  r.mean_energy_topk = st.mean;
  r.stderr_topk = st.std_error;
  r.mean_energy_cwmp = sc.mean;
  r.stderr_cwmp = sc.std_error;
  r.cov_cost_selected = sv.mean;
  r.stderr_cov = sv.std_error;
  r.expected_energy_topk = static_cast<double>(k) * spec_c.mean();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    PhiEstimate p{levels[l], 0.0, 0.0};
    if (level_seen[l] > 0) {
      const double n = static_cast<double>(level_seen[l]);
      p.phi = static_cast<double>(level_picked[l]) / n;
      // Binomial approximation; selections within a trial are weakly dependent.
      p.std_error = std::sqrt(p.phi * (1.0 - p.phi) / n);
    }
    r.phi_estimates.push_back(p);
  }
  return r;
}

/// phi(c) by fixed cost blocks: index block b (of d / levels.size() indices)
/// carries cost levels[b]. phi at a level is the fraction of that block
/// selected by CWMP; the standard error comes from the per-trial fractions.
/// Levels must be positive and non-decreasing.
inline std::vector<PhiEstimate> estimate_phi_monotonicity(const DistributionSpec& spec_g,
                                                          const std::vector<double>& cost_levels, std::size_t d,
                                                          std::size_t k, std::size_t trials, std::uint64_t seed) {
  if (cost_levels.size() < 2) throw ConfigError("need at least two cost levels");
  for (std::size_t l = 0; l < cost_levels.size(); ++l) {
    if (!(cost_levels[l] > 0.0)) throw ConfigError("cost levels must be positive");
    if (l > 0 && cost_levels[l] < cost_levels[l - 1]) throw ConfigError("cost levels must be ascending");
  }
  if (d % cost_levels.size() != 0) throw ConfigError("d must split into equal blocks per cost level");
  if (k < 1 || k > d) throw ConfigError("need 1 <= k <= d");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  spec_g.validate(false);

  const std::size_t L = cost_levels.size();
  const std::size_t block = d / L;
  std::vector<double> c(d);
  for (std::size_t j = 0; j < d; ++j) c[j] = cost_levels[j / block];
  const CostVector costs(std::move(c));

  std::vector<std::vector<double>> fractions(L, std::vector<double>(trials));
  const Rng root(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = root.split(t);
    std::vector<double> g(d);
    for (auto& v : g) v = spec_g.sample(rng);
    const auto mask = cwmp_mask(GradientVector(std::move(g)), costs, k);
    std::vector<std::size_t> per_block(L, 0);
    for (auto j : mask.indices()) ++per_block[j / block];
    for (std::size_t l = 0; l < L; ++l)
      fractions[l][t] = static_cast<double>(per_block[l]) / static_cast<double>(block);
  }

  std::vector<PhiEstimate> out;
  for (std::size_t l = 0; l < L; ++l) {
    const auto ms = detail::mean_stderr(fractions[l]);
    out.push_back({cost_levels[l], ms.mean, ms.std_error});
  }
  return out;
}

enum class SelectionRule { TopK, Cwmp };

/// Per-index selection frequency over i.i.d. trials.
inline std::vector<double> estimate_selection_frequencies(const DistributionSpec& spec_g, const DistributionSpec& spec_c,
                                                          std::size_t d, std::size_t k, std::size_t trials,
                                                          std::uint64_t seed, SelectionRule rule) {
  if (k < 1 || k > d) throw ConfigError("need 1 <= k <= d");
  if (trials < 1) throw ConfigError("trials must be at least 1");
  std::vector<std::size_t> counts(d, 0);
  const Rng root(seed);
  for (std::size_t t = 0; t < trials; ++t) {
    const auto inst = sample_instance(spec_g, spec_c, d, root.split(t).seed());
    const auto mask =
        rule == SelectionRule::TopK ? top_k_mask(inst.magnitudes, k) : cwmp_mask(inst.magnitudes, inst.costs, k);
    for (auto j : mask.indices()) ++counts[j];
  }
  std::vector<double> freq(d);
  for (std::size_t j = 0; j < d; ++j) freq[j] = static_cast<double>(counts[j]) / static_cast<double>(trials);
  return freq;
}

}  // namespace cwmp
