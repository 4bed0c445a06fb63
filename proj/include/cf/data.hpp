#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "cf/rng.hpp"
#include "cf/tensor.hpp"

namespace cf {

// Where a dataset came from, kept for logging and summaries.
struct Provenance {
  std::string generator;
  std::uint64_t seed = 0;
  double noise_rate = 0.0;
};

struct Dataset {
  Tensor inputs;            // [n x d] or [n x c x h x w]
  std::vector<int> labels;  // size n, values in [0, num_classes)
  std::size_t num_classes = 0;
  Provenance provenance;

  std::size_t size() const { return labels.size(); }
};

// Which half of the training set a sample belongs to. The regularizer trains
// its descriptor to tell the two halves apart.
enum class Side : std::uint8_t { A, B };

struct SplitAssignment {
  std::vector<Side> side;
  double p = 0.5;  // fraction assigned to side A

  std::size_t count(Side s) const {
    return static_cast<std::size_t>(std::count(side.begin(), side.end(), s));
  }
};

struct BatchPlan {
  std::uint64_t shuffle_seed = 0;
  std::size_t batch_size = 32;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<Side> sides;          // empty when batched without a split
  std::vector<std::size_t> indices;  // original dataset rows
};

namespace detail {

inline void check_dataset_args(std::size_t classes, std::size_t n) {
  if (classes < 2) throw ConfigError("dataset needs at least 2 classes");
  if (n < classes) {
    throw ConfigError("dataset of " + std::to_string(n) + " samples cannot cover " +
                      std::to_string(classes) + " classes");
  }
}

}  // namespace detail

// K isotropic unit-variance Gaussian blobs with means `sep` from the origin in
// random directions; inputs are standardized per dimension afterwards. Labels
// run round-robin (sample i gets class i mod K) so any contiguous slice stays
// class-balanced.
inline Dataset gen_gaussian_clusters(std::size_t classes, std::size_t dim, std::size_t n,
                                     double sep, std::uint64_t seed) {
  detail::check_dataset_args(classes, n);
  if (dim == 0) throw ConfigError("gaussian clusters need dim >= 1");
  if (sep < 0.0) throw ConfigError("sep must be >= 0");
  Rng rng(mix_seed(seed, 0xdadau));
  std::vector<std::vector<double>> means(classes, std::vector<double>(dim, 0.0));
  for (auto& m : means) {
    if (sep == 0.0) continue;
    double norm2 = 0.0;
    for (double& v : m) {
      v = rng.normal();
      norm2 += v * v;
    }
    const double norm = std::sqrt(norm2);
    const double scale = norm > 1e-12 ? sep / norm : 0.0;
    for (double& v : m) v *= scale;
  }
  Dataset ds;
  ds.num_classes = classes;
  ds.provenance = {"gaussian", seed, 0.0};
  ds.inputs = Tensor::zeros({n, dim});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    ds.labels[i] = static_cast<int>(k);
    for (std::size_t j = 0; j < dim; ++j) {
      ds.inputs.data[i * dim + j] = means[k][j] + rng.normal();
    }
  }
  // Standardize each dimension over the whole set.
  for (std::size_t j = 0; j < dim; ++j) {
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) s1 += ds.inputs.data[i * dim + j];
    const double mu = s1 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = ds.inputs.data[i * dim + j] - mu;
      s2 += c * c;
    }
    const double sd = std::sqrt(s2 / static_cast<double>(n));
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      ds.inputs.data[i * dim + j] = (ds.inputs.data[i * dim + j] - mu) * inv;
    }
  }
  return ds;
}

// K image classes on an hw x hw grid: even classes are oriented bar gratings,
// odd classes are checkerboards, both at class-dependent frequencies, plus
// per-pixel Gaussian noise. Shape [n x 1 x hw x hw].
inline Dataset gen_pattern_images(std::size_t classes, std::size_t hw, std::size_t n,
                                  std::uint64_t seed, double noise_sigma = 0.3) {
  detail::check_dataset_args(classes, n);
  if (hw < 2) throw ConfigError("pattern images need hw >= 2");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  const double pi = 3.14159265358979323846;
  std::vector<std::vector<double>> templates(classes, std::vector<double>(hw * hw, 0.0));
  for (std::size_t k = 0; k < classes; ++k) {
    const double theta = pi * static_cast<double>(k) / static_cast<double>(classes);
    const double freq = 1.0 + static_cast<double>(k / 2 + 1);
    for (std::size_t y = 0; y < hw; ++y) {
      for (std::size_t x = 0; x < hw; ++x) {
        const double xf = static_cast<double>(x) / static_cast<double>(hw);
        const double yf = static_cast<double>(y) / static_cast<double>(hw);
        double v;
        if (k % 2 == 0) {
          const double t = xf * std::cos(theta) + yf * std::sin(theta);
          v = std::sin(2.0 * pi * freq * t);
        } else {
          v = std::sin(2.0 * pi * freq * xf) * std::sin(2.0 * pi * freq * yf);
        }
        templates[k][y * hw + x] = v >= 0.0 ? 1.0 : -1.0;
      }
    }
  }
  Rng rng(mix_seed(seed, 0xbeefu));
  Dataset ds;
  ds.num_classes = classes;
  ds.provenance = {"patterns", seed, 0.0};
  ds.inputs = Tensor::zeros({n, 1, hw, hw});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = i % classes;
    ds.labels[i] = static_cast<int>(k);
    for (std::size_t p = 0; p < hw * hw; ++p) {
      ds.inputs.data[i * hw * hw + p] =
          templates[k][p] + (noise_sigma > 0.0 ? rng.normal(0.0, noise_sigma) : 0.0);
    }
  }
  return ds;
}

// Replaces every label with a uniform draw over all classes; inputs untouched.
inline Dataset randomize_labels(const Dataset& ds, std::uint64_t seed) {
  Dataset out = ds;
  Rng rng(mix_seed(seed, 0xabcdu));
  for (int& y : out.labels) y = static_cast<int>(rng.index(ds.num_classes));
  out.provenance.generator += "+random_labels";
  out.provenance.noise_rate = 1.0;
  return out;
}

// Reassigns exactly round(rate * n) labels, chosen uniformly without
// replacement, each to a uniformly drawn *different* class.
inline Dataset inject_label_noise(const Dataset& ds, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("label noise rate must be in [0, 1]");
  Dataset out = ds;
  const std::size_t n = ds.size();
  const auto flips = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  Rng rng(mix_seed(seed, 0xf11au));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t i = 0; i < flips; ++i) {
    const std::size_t row = order[i];
    const int old = out.labels[row];
    const std::size_t draw = rng.index(ds.num_classes - 1);
    out.labels[row] = static_cast<int>(draw >= static_cast<std::size_t>(old) ? draw + 1 : draw);
  }
  out.provenance.noise_rate = rate;
  return out;
}

// Random half-split of the sample indices: each index independently shuffled
// into side A with probability ~p (exact count round(p * n)). Both sides must
// come out non-empty.
inline SplitAssignment split_ab(std::size_t n, double p, std::uint64_t split_seed) {
  if (p <= 0.0 || p >= 1.0) throw ConfigError("split fraction p must be in (0, 1)");
  if (n < 2) throw ConfigError("cannot split fewer than 2 samples");
  const auto a_count = static_cast<std::size_t>(std::llround(p * static_cast<double>(n)));
  if (a_count == 0 || a_count >= n) {
    throw ConfigError("split of " + std::to_string(n) + " samples at p=" + std::to_string(p) +
                      " leaves one side empty");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(split_seed, streams::split));
  rng.shuffle(order);
  SplitAssignment split;
  split.p = p;
  split.side.assign(n, Side::B);
  for (std::size_t i = 0; i < a_count; ++i) split.side[order[i]] = Side::A;
  return split;
}

// Rows [begin, end) as a standalone dataset.
inline Dataset subset(const Dataset& ds, std::size_t begin, std::size_t end) {
  if (begin >= end || end > ds.size()) {
    throw ContractError("subset range [" + std::to_string(begin) + ", " + std::to_string(end) +
                        ") invalid for " + std::to_string(ds.size()) + " samples");
  }
  const std::size_t stride = ds.inputs.size() / ds.size();
  Dataset out;
  out.num_classes = ds.num_classes;
  out.provenance = ds.provenance;
  Shape shape = ds.inputs.shape;
  shape[0] = end - begin;
  out.inputs = Tensor::zeros(shape);
  std::copy(ds.inputs.data.begin() + static_cast<std::ptrdiff_t>(begin * stride),
            ds.inputs.data.begin() + static_cast<std::ptrdiff_t>(end * stride),
            out.inputs.data.begin());
  out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

// One epoch of batches in a fresh shuffled order; the order depends on
// (shuffle_seed, epoch) only. The final batch may be short. When a split is
// given, each batch carries its rows' side assignments.
inline std::vector<Batch> batches(const Dataset& ds, const SplitAssignment* split,
                                  const BatchPlan& plan, std::size_t epoch) {
  const std::size_t n = ds.size();
  if (plan.batch_size == 0 || plan.batch_size > n) {
    throw ConfigError("batch size " + std::to_string(plan.batch_size) + " invalid for " +
                      std::to_string(n) + " samples");
  }
  if (split && split->side.size() != n) {
    throw ContractError("split covers " + std::to_string(split->side.size()) + " samples, dataset has " +
                        std::to_string(n));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(plan.shuffle_seed, mix_seed(streams::data_order, epoch)));
  rng.shuffle(order);
  const std::size_t stride = ds.inputs.size() / n;
  std::vector<Batch> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t count = std::min(plan.batch_size, n - start);
    Batch b;
    Shape shape = ds.inputs.shape;
    shape[0] = count;
    b.inputs = Tensor::zeros(shape);
    b.labels.resize(count);
    b.indices.resize(count);
    if (split) b.sides.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t row = order[start + i];
      b.indices[i] = row;
      b.labels[i] = ds.labels[row];
      if (split) b.sides[i] = split->side[row];
      std::copy(ds.inputs.data.begin() + static_cast<std::ptrdiff_t>(row * stride),
                ds.inputs.data.begin() + static_cast<std::ptrdiff_t>((row + 1) * stride),
                b.inputs.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    out.push_back(std::move(b));
  }
  return out;
}

// Loads `label,x0,x1,...` rows. The input width is taken from the header; the
// class count is one past the largest label seen.
inline Dataset load_csv_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open dataset file " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "label") {
    throw ConfigError(path + ": header must be label,x0,x1,...");
  }
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "x" + std::to_string(i - 1)) {
      throw ConfigError(path + ": unexpected header column " + header[i]);
    }
  }
  const std::size_t dim = header.size() - 1;
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != dim + 1) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(dim + 1) + " columns, got " + std::to_string(cells.size()));
    }
    try {
      std::size_t used = 0;
      const int label = std::stoi(cells[0], &used);
      if (used != cells[0].size() || label < 0) throw std::invalid_argument(cells[0]);
      labels.push_back(label);
      max_label = std::max(max_label, label);
      for (std::size_t i = 1; i < cells.size(); ++i) {
        const double v = std::stod(cells[i], &used);
        if (used != cells[i].size()) throw std::invalid_argument(cells[i]);
        values.push_back(v);
      }
    } catch (const std::exception&) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": malformed value");
    }
  }
  if (labels.size() < 2) throw ConfigError(path + ": needs at least 2 data rows");
  Dataset ds;
  ds.num_classes = static_cast<std::size_t>(max_label) + 1;
  if (ds.num_classes < 2) throw ConfigError(path + ": needs at least 2 classes");
  ds.inputs = Tensor({labels.size(), dim}, std::move(values));
  ds.labels = std::move(labels);
  ds.provenance = {"csv:" + path, 0, 0.0};
  return ds;
}

}  // namespace cf
