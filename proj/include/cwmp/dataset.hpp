#pragma once

// Labelled datasets: a synthetic Gaussian-mixture classification task and a
// CSV loader.
//
// CSV convention: the first line is a header. The column named "label"
// holds the integer class index (0-based); every other column is a feature,
// taken in header order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cwmp/errors.hpp"
#include "cwmp/model.hpp"
#include "cwmp/rng.hpp"

namespace cwmp {

struct Dataset {
  Matrix features;  // samples x input-dim
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t input_dim() const noexcept { return features.cols; }

  Batch gather(std::span<const std::size_t> rows) const {
    Batch b;
    b.inputs = Matrix(rows.size(), features.cols);
    b.labels.reserve(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      auto src = features.row(rows[r]);
      std::copy(src.begin(), src.end(), b.inputs.row(r).begin());
      b.labels.push_back(labels[rows[r]]);
    }
    return b;
  }

  Batch as_batch() const { return Batch{features, labels}; }
};

struct SyntheticTaskSpec {
  std::size_t num_classes = 8;
  std::size_t input_dim = 32;
  std::size_t train_samples = 8000;
  std::size_t eval_samples = 2000;
  // Each class is a mixture of clusters_per_class Gaussian blobs. Blob
  // centres are N(0, separation^2 / input_dim) per coordinate, sample noise
  // is N(0, 1) per coordinate.
  std::size_t clusters_per_class = 1;
  double separation = 2.0;
  std::uint64_t seed = 0;
};

namespace detail {

// Row y * clusters + m of `means` is blob m of class y.
inline Dataset draw_mixture(const Matrix& means, std::size_t classes, std::size_t n, Rng rng) {
  const std::size_t clusters = means.rows / classes;
  Dataset ds;
  ds.num_classes = classes;
  ds.features = Matrix(n, means.cols);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(rng() % classes);
    const auto blob = y * clusters + static_cast<std::size_t>(rng() % clusters);
    ds.labels[i] = static_cast<int>(y);
    auto row = ds.features.row(i);
    for (std::size_t f = 0; f < means.cols; ++f) row[f] = means(blob, f) + rng.normal();
  }
  return ds;
}

}  // namespace detail

/// Train and eval sets drawn from the same Gaussian mixture.
inline std::pair<Dataset, Dataset> make_synthetic_task(const SyntheticTaskSpec& spec) {
  if (spec.num_classes < 2 || spec.input_dim < 1) throw ConfigError("synthetic task needs >= 2 classes and >= 1 input");
  if (spec.train_samples < 1 || spec.eval_samples < 1) throw ConfigError("synthetic task needs samples");
  if (spec.clusters_per_class < 1) throw ConfigError("clusters_per_class must be >= 1");
  const Rng root(spec.seed);
  Rng mean_rng = root.split(0);
  Matrix means(spec.num_classes * spec.clusters_per_class, spec.input_dim);
  const double scale = spec.separation / std::sqrt(static_cast<double>(spec.input_dim));
  for (auto& v : means.data) v = scale * mean_rng.normal();
  return {detail::draw_mixture(means, spec.num_classes, spec.train_samples, root.split(1)),
          detail::draw_mixture(means, spec.num_classes, spec.eval_samples, root.split(2))};
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": missing header");

  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  };

  const auto header = split(line);
  std::size_t label_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == "label") label_col = i;
  if (label_col == header.size()) throw InputError(path + ": no 'label' column");
  if (header.size() < 2) throw InputError(path + ": no feature columns");

  std::vector<double> values;
  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) throw InputError(path + ":" + std::to_string(line_no) + ": wrong column count");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      try {
        std::size_t used = 0;
        if (i == label_col) {
          const int y = std::stoi(cells[i], &used);
          if (used != cells[i].size() || y < 0) throw std::invalid_argument("label");
          ds.labels.push_back(y);
        } else {
          values.push_back(std::stod(cells[i], &used));
          if (used != cells[i].size()) throw std::invalid_argument("feature");
        }
      } catch (const std::exception&) {
        throw InputError(path + ":" + std::to_string(line_no) + ": bad value '" + cells[i] + "'");
      }
    }
  }
  if (ds.labels.empty()) throw InputError(path + ": no data rows");
  ds.features.rows = ds.labels.size();
  ds.features.cols = header.size() - 1;
  ds.features.data = std::move(values);
  int max_label = 0;
  for (int y : ds.labels) max_label = std::max(max_label, y);
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

}  // namespace cwmp
