#pragma once

// FedAvg simulation with pluggable sparsification.
//
// Each round: broadcast w, every client runs local momentum SGD from w and
// reports the pseudo-gradient (w - w_local) / lr, the client sparsifies it,
// and the server applies w <- w - lr * sum_k p_k * sparse_k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cwmp/dataset.hpp"
#include "cwmp/errors.hpp"
#include "cwmp/model.hpp"
#include "cwmp/projection.hpp"
#include "cwmp/rng.hpp"
#include "cwmp/sparsifier.hpp"

namespace cwmp {

enum class Method { TopK, Cwmp, RandomK, Dense, BudgetedCwmp };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::TopK:
      return "topk";
    case Method::Cwmp:
      return "cwmp";
    case Method::RandomK:
      return "random-k";
    case Method::Dense:
      return "dense";
    case Method::BudgetedCwmp:
      return "budgeted-cwmp";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  if (s == "topk") return Method::TopK;
  if (s == "cwmp") return Method::Cwmp;
  if (s == "random-k") return Method::RandomK;
  if (s == "dense") return Method::Dense;
  if (s == "budgeted-cwmp") return Method::BudgetedCwmp;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

struct FederationConfig {
  std::size_t num_clients = 10;
  std::size_t rounds = 50;
  // Empty means proportional to client sample counts.
  std::vector<double> client_weights;
  double learning_rate = 0.05;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t local_steps = 10;
  double sparsity_fraction = 0.1;
  Method method = Method::TopK;
  double dirichlet_alpha = 0.5;
  std::uint64_t seed = 0;
  double classifier_cost = 5.0;
  double feature_cost = 1.0;
  std::size_t hidden_width = 64;
  // Per-client, per-round energy cap; used by budgeted-cwmp only.
  double energy_budget = 0.0;

  void validate() const {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (local_steps < 1) throw ConfigError("local_steps must be >= 1");
    if (!(sparsity_fraction > 0.0 && sparsity_fraction <= 1.0))
      throw ConfigError("sparsity_fraction must lie in (0, 1]");
    if (!(dirichlet_alpha > 0.0)) throw ConfigError("dirichlet_alpha must be > 0");
    if (!(classifier_cost > 0.0) || !(feature_cost > 0.0)) throw ConfigError("layer costs must be > 0");
    if (hidden_width < 1) throw ConfigError("hidden_width must be >= 1");
    if (method == Method::BudgetedCwmp && !(energy_budget > 0.0))
      throw ConfigError("budgeted-cwmp needs energy_budget > 0");
    if (!client_weights.empty()) {
      if (client_weights.size() != num_clients) throw ConfigError("client_weights needs one entry per client");
      double sum = 0.0;
      for (double p : client_weights) {
        if (!(p >= 0.0)) throw ConfigError("client weights must be non-negative");
        sum += p;
      }
      if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("client weights must sum to 1");
    }
  }
};

struct ClientDataset {
  std::vector<std::size_t> indices;  // rows of the shared training set, ascending
  std::vector<std::size_t> label_histogram;

  std::size_t size() const noexcept { return indices.size(); }
};

struct RoundMetrics {
  std::size_t round = 0;  // 1-based
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t payload = 0;  // indices transmitted per client
  double round_energy = 0.0;
  double cumulative_energy = 0.0;
};

/// Proportions drawn from Dirichlet(alpha * 1_K) via normalised Gamma draws.
inline std::vector<double> dirichlet_proportions(std::size_t K, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> q(K);
  double sum = 0.0;
  for (auto& v : q) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // every draw underflowed (tiny alpha): put the mass on one client
    std::fill(q.begin(), q.end(), 0.0);
    q[rng() % K] = 1.0;
    return q;
  }
  for (auto& v : q) v /= sum;
  return q;
}

/// Non-IID split: for every class, shuffle its samples and hand client k a
/// Dirichlet share of them. Clients left empty receive one sample taken from
/// the currently largest client.
inline std::vector<ClientDataset> partition_dirichlet(const Dataset& dataset, std::size_t K, double alpha,
                                                      std::uint64_t seed) {
  if (K < 1) throw ConfigError("need at least one client");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet alpha must be > 0");
  if (dataset.size() < K)
    throw ConfigError("cannot give " + std::to_string(K) + " clients a sample each from " +
                      std::to_string(dataset.size()) + " samples");

  const Rng root(seed);
  std::vector<std::vector<std::size_t>> parts(K);
  for (std::size_t c = 0; c < dataset.num_classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      if (dataset.labels[i] == static_cast<int>(c)) members.push_back(i);
    if (members.empty()) continue;
    Rng rng = root.split(c);
    std::shuffle(members.begin(), members.end(), rng);
    const auto q = dirichlet_proportions(K, alpha, rng);

    const double n = static_cast<double>(members.size());
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < K; ++k) {
      cum += q[k];
      std::size_t stop = k + 1 == K ? members.size()
                                    : std::min(members.size(), static_cast<std::size_t>(std::llround(cum * n)));
      stop = std::max(stop, start);
      parts[k].insert(parts[k].end(), members.begin() + static_cast<std::ptrdiff_t>(start),
                      members.begin() + static_cast<std::ptrdiff_t>(stop));
      start = stop;
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (!parts[k].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t o = 1; o < K; ++o)
      if (parts[o].size() > parts[donor].size()) donor = o;
    if (parts[donor].size() < 2) throw ConfigError("partition repair failed: not enough samples");
    parts[k].push_back(parts[donor].back());
    parts[donor].pop_back();
  }

  std::vector<ClientDataset> clients(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::sort(parts[k].begin(), parts[k].end());
    clients[k].indices = std::move(parts[k]);
    clients[k].label_histogram.assign(dataset.num_classes, 0);
    for (auto i : clients[k].indices) ++clients[k].label_histogram[static_cast<std::size_t>(dataset.labels[i])];
  }
  return clients;
}

using GradientFn = std::function<GradientVector(const ModelParams&, const Batch&)>;

/// local_steps momentum-SGD steps on mini-batches drawn without replacement
/// (reshuffled each pass). Returns the pseudo-gradient (w - w_local) / lr,
/// accumulated as the sum of the applied velocities so that one plain SGD
/// step returns the mini-batch gradient exactly.
inline GradientVector client_update(const ModelParams& global, const ClientDataset& client, const Dataset& data,
                                    const FederationConfig& cfg, Rng rng, const GradientFn& gradient = backward) {
  if (client.size() == 0) throw InputError("client has no data");
  const std::size_t b = std::min(cfg.batch_size, client.size());
  std::vector<std::size_t> order = client.indices;
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t pos = 0;

  ModelParams local = global;
  GradientVector velocity(global.size());
  GradientVector pseudo(global.size());
  std::vector<std::size_t> rows(b);
  for (std::size_t step = 0; step < cfg.local_steps; ++step) {
    for (std::size_t i = 0; i < b; ++i) {
      if (pos == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      rows[i] = order[pos++];
    }
    const auto grad = gradient(local, data.gather(rows));
    auto [next, v] = sgd_step(local, grad, cfg.learning_rate, velocity, cfg.momentum);
    local = std::move(next);
    velocity = std::move(v);
    for (std::size_t j = 0; j < pseudo.size(); ++j) pseudo[j] += velocity[j];
  }
  return pseudo;
}

/// w' = w - lr * sum_k p_k * update_k, reduced in client order.
inline ModelParams aggregate(const ModelParams& global, const std::vector<SparseUpdate>& updates,
                             const std::vector<double>& weights, double lr) {
  if (updates.size() != weights.size()) throw ConfigError("one weight per update required");
  std::vector<double> step(global.size(), 0.0);
  for (std::size_t k = 0; k < updates.size(); ++k) {
    const auto& u = updates[k];
    if (u.dim != global.size() || u.indices.size() != u.values.size())
      throw ConfigError("update " + std::to_string(k) + " does not match the model dimension");
    for (std::size_t i = 0; i < u.indices.size(); ++i) step[u.indices[i]] += weights[k] * u.values[i];
  }
  ModelParams next = global;
  auto w = next.values();
  for (std::size_t j = 0; j < w.size(); ++j) w[j] -= lr * step[j];
  return next;
}

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
};

inline Evaluation evaluate(const ModelParams& params, const Dataset& eval) {
  const auto fr = forward(params, eval.as_batch());
  std::size_t correct = 0;
  for (std::size_t r = 0; r < fr.logits.rows; ++r) {
    auto row = fr.logits.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (static_cast<int>(best) == eval.labels[r]) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(eval.size()), fr.loss};
}

/// Called for every client every round with its mask and transmitted update.
using UpdateObserver =
    std::function<void(std::size_t round, std::size_t client, const PruningMask&, const SparseUpdate&)>;

inline std::vector<double> client_weights_for(const FederationConfig& cfg, const std::vector<ClientDataset>& clients) {
  if (!cfg.client_weights.empty()) return cfg.client_weights;
  double total = 0.0;
  for (const auto& c : clients) total += static_cast<double>(c.size());
  std::vector<double> p;
  for (const auto& c : clients) p.push_back(static_cast<double>(c.size()) / total);
  return p;
}

inline ModelParams initial_model(const FederationConfig& cfg, const Dataset& train) {
  Rng rng = Rng(cfg.seed).split(100);
  return ModelParams::init_uniform(mlp_layers(train.input_dim(), {cfg.hidden_width}, train.num_classes), rng);
}

inline PruningMask select_mask(const FederationConfig& cfg, const GradientVector& g, const CostVector& costs,
                               std::size_t k, Rng& rng) {
  switch (cfg.method) {
    case Method::TopK:
      return top_k_mask(g, k);
    case Method::Cwmp:
      return cwmp_mask(g, costs, k);
    case Method::RandomK:
      return random_k_mask(g.size(), k, rng);
    case Method::Dense:
      return PruningMask::full(g.size());
    case Method::BudgetedCwmp:
      return budgeted_cwmp(g, costs, k, cfg.energy_budget);
  }
  throw ConfigError("unknown method");
}

/// Runs cfg.rounds rounds of FedAvg with full client participation and
/// evaluates the global model on `eval` after every round.
inline std::vector<RoundMetrics> run_federation(const FederationConfig& cfg, const Dataset& train, const Dataset& eval,
                                                const UpdateObserver& observer = {}) {
  cfg.validate();
  if (eval.size() == 0) throw InputError("empty evaluation set");
  if (eval.input_dim() != train.input_dim()) throw ConfigError("train and eval feature counts differ");
  if (eval.num_classes > train.num_classes) throw ConfigError("eval set has classes unseen in training");

  const Rng root(cfg.seed);
  const auto clients = partition_dirichlet(train, cfg.num_clients, cfg.dirichlet_alpha, root.split(1).seed());
  const auto weights = client_weights_for(cfg, clients);
  ModelParams global = initial_model(cfg, train);
  const auto costs = build_cost_vector(global, cfg.classifier_cost, cfg.feature_cost);
  const std::size_t d = global.size();
  const std::size_t k = cfg.method == Method::Dense ? d : k_from_fraction(cfg.sparsity_fraction, d);

  std::vector<RoundMetrics> history;
  double cumulative = 0.0;
  for (std::size_t t = 1; t <= cfg.rounds; ++t) {
    std::vector<SparseUpdate> updates;
    updates.reserve(clients.size());
    RoundMetrics m;
    m.round = t;
    for (std::size_t c = 0; c < clients.size(); ++c) {
      const Rng client_rng = root.split({2, t, c});
      const auto g = client_update(global, clients[c], train, cfg, client_rng.split(0));
      Rng mask_rng = client_rng.split(1);
      const auto mask = select_mask(cfg, g, costs, k, mask_rng);
      m.round_energy += energy_of(mask, costs).energy;
      m.payload = std::max(m.payload, mask.size());
      updates.push_back(apply_mask(g, mask));
      if (observer) observer(t, c, mask, updates.back());
    }
    global = aggregate(global, updates, weights, cfg.learning_rate);
    const auto ev = evaluate(global, eval);
    cumulative += m.round_energy;
    m.cumulative_energy = cumulative;
    m.accuracy = ev.accuracy;
    m.loss = ev.loss;
    history.push_back(m);
  }
  return history;
}

}  // namespace cwmp
