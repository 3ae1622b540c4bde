// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/plan/masks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "spimag/errors.hpp"

namespace spimag::plan {

std::size_t keep_count(std::size_t n_tokens, double p) {
  if (!(p >= 0.0 && p < 1.0)) throw ConfigError("drop ratio must lie in [0, 1), got " + std::to_string(p));
  if (n_tokens == 0) throw ConfigError("token count must be positive");
  const auto k = static_cast<std::size_t>(std::llround((1.0 - p) * static_cast<double>(n_tokens)));
  return std::clamp<std::size_t>(k, 1, n_tokens);
}

DropMask sample_mask_random(std::mt19937_64& rng, std::size_t n_tokens, double p) {
  DropMask m;
  m.p = p;
  m.n_tokens = n_tokens;
  const std::size_t k = keep_count(n_tokens, p);
  std::vector<std::size_t> all(n_tokens);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Partial Fisher-Yates keeps the draw a function of the rng alone.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n_tokens - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  m.kept.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(m.kept.begin(), m.kept.end());
  return m;
}

namespace {

// Balanced counts over `n` lines summing to k: every line gets k / n, and
// the k % n extra units go to one line drawn from each of k % n contiguous
// strata.
std::vector<std::size_t> stratified_counts(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> counts(n, k / n);
  const std::size_t extra = k % n;
  for (std::size_t s = 0; s < extra; ++s) {
    const std::size_t lo = s * n / extra;
    const std::size_t hi = (s + 1) * n / extra;
    counts[std::uniform_int_distribution<std::size_t>(lo, hi - 1)(rng)] += 1;
  }
  return counts;
}

std::vector<std::size_t> expand(const std::vector<std::size_t>& counts) {
  std::vector<std::size_t> slots;
  for (std::size_t i = 0; i < counts.size(); ++i) slots.insert(slots.end(), counts[i], i);
  return slots;
}

}  // namespace

DropMask sample_mask_lhs(std::mt19937_64& rng, std::size_t hp, std::size_t wp, std::size_t k) {
  if (hp == 0 || wp == 0) throw ConfigError("token grid must be non-empty");
  if (k == 0) throw ConfigError("LHS needs at least one token");
  if (k > hp * wp) {
    throw ConfigError("cannot place " + std::to_string(k) + " LHS samples on a " + std::to_string(hp) + "x" +
                      std::to_string(wp) + " grid");
  }
  const std::vector<std::size_t> rows = expand(stratified_counts(rng, hp, k));
  std::vector<std::size_t> cols = expand(stratified_counts(rng, wp, k));
  std::shuffle(cols.begin(), cols.end(), rng);

  // Repair repeated cells by swapping column slots; balanced degree
  // sequences always admit a simple pairing.
  auto cell = [&](std::size_t i) { return rows[i] * wp + cols[i]; };
  std::uniform_int_distribution<std::size_t> any(0, k - 1);
  for (std::size_t attempt = 0;; ++attempt) {
    std::vector<std::size_t> seen(hp * wp, k);
    std::size_t dup = k;
    for (std::size_t i = 0; i < k && dup == k; ++i) {
      if (seen[cell(i)] != k) dup = i;
      seen[cell(i)] = i;
    }
    if (dup == k) break;
    if (attempt > 100000) throw PlanningError("LHS pairing did not converge");
    std::swap(cols[dup], cols[any(rng)]);
  }

  DropMask m;
  m.n_tokens = hp * wp;
  m.p = 1.0 - static_cast<double>(k) / static_cast<double>(m.n_tokens);
  for (std::size_t i = 0; i < k; ++i) m.kept.push_back(cell(i));
  std::sort(m.kept.begin(), m.kept.end());
  return m;
}

DropMask sample_mask_lhs_ratio(std::mt19937_64& rng, std::size_t hp, std::size_t wp, double p) {
  DropMask m = sample_mask_lhs(rng, hp, wp, keep_count(hp * wp, p));
  m.p = p;
  return m;
}

DropMask top_k(std::span<const double> scores, std::size_t k) {
  if (k == 0 || k > scores.size()) throw ConfigError("top_k: k must lie in [1, " + std::to_string(scores.size()) + "]");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  DropMask m;
  m.n_tokens = scores.size();
  m.kept.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(m.kept.begin(), m.kept.end());
  m.p = 1.0 - static_cast<double>(k) / static_cast<double>(scores.size());
  return m;
}

}  // namespace spimag::plan
