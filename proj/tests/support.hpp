#pragma once

// Shared generators and reference implementations for the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cwmp/model.hpp"
#include "cwmp/rng.hpp"

namespace cwmp::test {

inline std::vector<double> normal_vector(std::size_t d, Rng& rng, double scale = 1.0) {
  std::vector<double> v(d);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

inline std::vector<double> uniform_vector(std::size_t d, Rng& rng, double lo, double hi) {
  std::vector<double> v(d);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

inline Batch random_batch(std::size_t n, std::size_t inputs, std::size_t classes, Rng& rng) {
  Batch b;
  b.inputs = Matrix(n, inputs);
  for (auto& x : b.inputs.data) x = rng.normal();
  for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<int>(rng() % classes));
  return b;
}

/// Random MLP (0-2 hidden layers) with N(0, 0.5^2) parameters.
inline ModelParams random_model(Rng& rng, std::size_t inputs, std::size_t classes) {
  std::vector<std::size_t> hidden;
  const std::size_t depth = rng() % 3;
  for (std::size_t i = 0; i < depth; ++i) hidden.push_back(uniform_index(rng, 2, 7));
  const auto layers = mlp_layers(inputs, hidden, classes);
  ModelParams p(layers);
  for (auto& w : p.values()) w = 0.5 * rng.normal();
  return p;
}

/// Mean cross-entropy written out directly from the layer formula, with no
/// shared helpers: z = W a + b, ReLU on hidden layers, log-sum-exp loss.
inline double reference_loss(const ModelParams& p, const Batch& b) {
  double total = 0.0;
  const auto& layers = p.layers();
  const auto w = p.values();
  for (std::size_t r = 0; r < b.size(); ++r) {
    std::vector<double> a(b.inputs.row(r).begin(), b.inputs.row(r).end());
    std::size_t off = 0;
    for (const auto& s : layers) {
      std::vector<double> z(s.out);
      for (std::size_t o = 0; o < s.out; ++o) {
        double acc = w[off + s.in * s.out + o];
        for (std::size_t i = 0; i < s.in; ++i) acc += w[off + o * s.in + i] * a[i];
        z[o] = s.activation == Activation::Relu ? std::max(acc, 0.0) : acc;
      }
      off += s.in * s.out + s.out;
      a = std::move(z);
    }
    const double mx = *std::max_element(a.begin(), a.end());
    double sum = 0.0;
    for (double v : a) sum += std::exp(v - mx);
    total += mx + std::log(sum) - a[static_cast<std::size_t>(b.labels[r])];
  }
  return total / static_cast<double>(b.size());
}

/// Smallest |pre-activation| of any hidden unit over the batch. Finite
/// differences are only meaningful away from the ReLU kink.
inline double min_hidden_preactivation(const ModelParams& p, const Batch& b) {
  double closest = INFINITY;
  const auto& layers = p.layers();
  const auto w = p.values();
  for (std::size_t r = 0; r < b.size(); ++r) {
    std::vector<double> a(b.inputs.row(r).begin(), b.inputs.row(r).end());
    std::size_t off = 0;
    for (const auto& s : layers) {
      std::vector<double> z(s.out);
      for (std::size_t o = 0; o < s.out; ++o) {
        double acc = w[off + s.in * s.out + o];
        for (std::size_t i = 0; i < s.in; ++i) acc += w[off + o * s.in + i] * a[i];
        if (s.activation == Activation::Relu) closest = std::min(closest, std::fabs(acc));
        z[o] = s.activation == Activation::Relu ? std::max(acc, 0.0) : acc;
      }
      off += s.in * s.out + s.out;
      a = std::move(z);
    }
  }
  return closest;
}

/// Central differences with step h on every coordinate.
inline std::vector<double> finite_difference_gradient(const ModelParams& p, const Batch& b, double h = 1e-5) {
  std::vector<double> g(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    ModelParams plus = p, minus = p;
    plus.values()[j] += h;
    minus.values()[j] -= h;
    g[j] = (reference_loss(plus, b) - reference_loss(minus, b)) / (2.0 * h);
  }
  return g;
}

/// |a - b| / max(|a|, |b|, floor): relative error with an absolute floor for
/// coordinates whose true gradient is (near) zero.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cwmp_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cwmp::test
