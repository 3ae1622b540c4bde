// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/analysis/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "../diff/eigen_view.hpp"
#include "spimag/errors.hpp"
#include "spimag/plan/cem.hpp"
#include "spimag/plan/masks.hpp"

namespace spimag::analysis {

using diff::detail::RowMat;
using diff::detail::view;

double median_bandwidth(const Tensor& x) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
      dists.push_back(std::sqrt(s));
    }
  }
  if (dists.empty()) return 1.0;
  // Lower median for even counts keeps the value an observed distance.
  const std::size_t mid = (dists.size() - 1) / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  const double med = dists[mid];
  return med > 0.0 ? med : 1.0;
}

Tensor kernel_matrix(const Tensor& x, const KernelSpec& spec) {
  diff::detail::require_matrix(x, "kernel_matrix");
  const std::size_t n = x.rows();
  Tensor k({n, n});
  view(k).noalias() = view(x) * view(x).transpose();
  if (spec.kind == KernelKind::kLinear) return k;
  const double bw = spec.bandwidth ? *spec.bandwidth : median_bandwidth(x);
  if (!(bw > 0.0)) throw ConfigError("RBF bandwidth must be positive");
  const Tensor gram = k;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double sq = std::max(0.0, gram(i, i) + gram(j, j) - 2.0 * gram(i, j));
      k(i, j) = std::exp(-sq / (2.0 * bw * bw));
    }
  }
  return k;
}

double hsic(const Tensor& x, const Tensor& y, const KernelSpec& kx, const KernelSpec& ky) {
  const std::size_t n = x.rows();
  if (y.rows() != n) {
    throw ShapeError("hsic: sample counts differ, " + x.shape_string() + " vs " + y.shape_string());
  }
  if (n < 4) throw DegenerateInputError("hsic needs at least 4 samples, got " + std::to_string(n));
  const Tensor k = kernel_matrix(x, kx);
  const Tensor l = kernel_matrix(y, ky);
  const auto nn = static_cast<Eigen::Index>(n);
  const RowMat h = RowMat::Identity(nn, nn) - RowMat::Constant(nn, nn, 1.0 / static_cast<double>(n));
  const RowMat kh = view(k) * h;
  const RowMat lh = view(l) * h;
  const double trace = (kh * lh).trace();
  const double denom = static_cast<double>(n - 1) * static_cast<double>(n - 1);
  return std::max(0.0, trace / denom);
}

double nhsic(const Tensor& x, const Tensor& y, const KernelSpec& kx, const KernelSpec& ky) {
  const double xy = hsic(x, y, kx, ky);
  const double xx = hsic(x, x, kx, kx);
  const double yy = hsic(y, y, ky, ky);
  const double denom = std::sqrt(xx * yy);
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(xy / denom, 0.0, 1.0);
}

std::vector<HsicRow> hsic_sweep(const env::Dataset& data, std::span<const double> ratios, const HsicSweepConfig& cfg) {
  if (data.episodes.empty()) throw DegenerateInputError("hsic_sweep needs a non-empty dataset");
  if (cfg.masks_per_ratio == 0) throw ConfigError("masks_per_ratio must be positive");
  const std::size_t n_tokens = data.env.n_tokens();
  const std::size_t d = data.env.token_dim;
  std::mt19937_64 rng(cfg.seed);

  // Sample frames once so every ratio sees the same batch.
  std::vector<const Tensor*> frames;
  Tensor states({cfg.samples, 2});
  std::uniform_int_distribution<std::size_t> pick_ep(0, data.episodes.size() - 1);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    const env::Episode& e = data.episodes[pick_ep(rng)];
    const std::size_t t = std::uniform_int_distribution<std::size_t>(0, e.frames.size() - 1)(rng);
    frames.push_back(&e.tokens[t]);
    states(s, 0) = e.states[t].agent.x;
    states(s, 1) = e.states[t].agent.y;
  }

  std::vector<HsicRow> rows;
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    HsicRow row;
    row.ratio = ratios[r];
    row.kept = plan::keep_count(n_tokens, ratios[r]);
    const std::size_t repeats = ratios[r] == 0.0 ? 1 : cfg.masks_per_ratio;
    for (std::size_t m = 0; m < repeats; ++m) {
      std::mt19937_64 mask_rng(plan::derive_seed(cfg.seed, r, m, 0));
      const wm::DropMask mask = plan::sample_mask_random(mask_rng, n_tokens, ratios[r]);
      Tensor x({cfg.samples, mask.size() * d});
      for (std::size_t s = 0; s < cfg.samples; ++s) {
        for (std::size_t i = 0; i < mask.size(); ++i) {
          const auto src = frames[s]->row(mask.kept[i]);
          std::copy(src.begin(), src.end(), x.data() + s * x.cols() + i * d);
        }
      }
      row.values.push_back(nhsic(x, states, KernelSpec::linear(), KernelSpec::rbf()));
    }
    const double cnt = static_cast<double>(row.values.size());
    row.mean = std::accumulate(row.values.begin(), row.values.end(), 0.0) / cnt;
    double var = 0.0;
    for (double v : row.values) var += (v - row.mean) * (v - row.mean);
    row.stddev = row.values.size() > 1 ? std::sqrt(var / (cnt - 1.0)) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace spimag::analysis
