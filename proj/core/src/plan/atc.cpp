// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/plan/atc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "spimag/errors.hpp"

namespace spimag::plan {

namespace {

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

ClusterSet from_assignment(const Tensor& tokens, std::vector<std::size_t> assignment, std::size_t clusters) {
  const std::size_t d = tokens.cols();
  ClusterSet set;
  set.assignment = std::move(assignment);
  set.sizes.assign(clusters, 0);
  set.centroids = Tensor({clusters, d});
  for (std::size_t t = 0; t < set.assignment.size(); ++t) {
    const std::size_t c = set.assignment[t];
    ++set.sizes[c];
    for (std::size_t j = 0; j < d; ++j) set.centroids(c, j) += tokens(t, j);
  }
  for (std::size_t c = 0; c < clusters; ++c) {
    if (set.sizes[c] == 0) continue;
    for (std::size_t j = 0; j < d; ++j) set.centroids(c, j) /= static_cast<double>(set.sizes[c]);
  }
  return set;
}

ClusterSet agglomerate(const Tensor& tokens, std::size_t clusters) {
  const std::size_t n = tokens.rows();
  const std::size_t d = tokens.cols();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = std::sqrt(sq_dist(tokens.data() + i * d, tokens.data() + j * d, d));
    }
  }
  // Slot i holds the cluster whose smallest member is token i.
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::vector<std::size_t> owner(n);
  std::iota(owner.begin(), owner.end(), std::size_t{0});
  for (std::size_t remaining = n; remaining > clusters; --remaining) {
    std::size_t bi = n;
    std::size_t bj = n;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && dist[i * n + j] < best) {
          best = dist[i * n + j];
          bi = i;
          bj = j;
        }
      }
    }
    // Lance-Williams update for average linkage.
    const double wi = static_cast<double>(size[bi]);
    const double wj = static_cast<double>(size[bj]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == bi || k == bj) continue;
      const double v = (wi * dist[bi * n + k] + wj * dist[bj * n + k]) / (wi + wj);
      dist[bi * n + k] = dist[k * n + bi] = v;
    }
    size[bi] += size[bj];
    active[bj] = false;
    for (std::size_t& o : owner) {
      if (o == bj) o = bi;
    }
  }
  std::vector<std::size_t> id(n, n);
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (active[i]) id[i] = next++;
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t t = 0; t < n; ++t) assignment[t] = id[owner[t]];
  return from_assignment(tokens, std::move(assignment), clusters);
}

ClusterSet lloyd(const Tensor& tokens, const ClusterSet& anchor) {
  const std::size_t n = tokens.rows();
  const std::size_t d = tokens.cols();
  const std::size_t clusters = anchor.count();
  if (anchor.centroids.rows() != clusters || anchor.centroids.cols() != d) {
    throw ShapeError("anchor centroids " + anchor.centroids.shape_string() + " do not fit tokens " +
                     tokens.shape_string());
  }
  Tensor centroids = anchor.centroids;
  std::vector<std::size_t> assignment(n, clusters);
  for (std::size_t it = 0; it < kMaxLloydIterations; ++it) {
    std::vector<std::size_t> next(n);
    std::vector<double> own(n);
    for (std::size_t t = 0; t < n; ++t) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < clusters; ++c) {
        const double s = sq_dist(tokens.data() + t * d, centroids.data() + c * d, d);
        if (s < best) {
          best = s;
          next[t] = c;
        }
      }
      own[t] = best;
    }
    std::vector<std::size_t> sizes(clusters, 0);
    for (std::size_t c : next) ++sizes[c];
    for (std::size_t c = 0; c < clusters; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t t = 0; t < n; ++t) {
        if (sizes[next[t]] > 1 && (far == n || own[t] > own[far])) far = t;
      }
      --sizes[next[far]];
      next[far] = c;
      own[far] = 0.0;
      sizes[c] = 1;
    }
    const bool converged = next == assignment;
    assignment = std::move(next);
    if (converged) break;
    centroids = from_assignment(tokens, assignment, clusters).centroids;
  }
  return from_assignment(tokens, std::move(assignment), clusters);
}

}  // namespace

ClusterSet atc_cluster(const Tensor& tokens, std::size_t clusters, const ClusterSet* anchor) {
  if (clusters < 1) throw ConfigError("cluster count must be at least 1");
  if (clusters > tokens.rows()) {
    throw ConfigError("cluster count " + std::to_string(clusters) + " exceeds token count " +
                      std::to_string(tokens.rows()));
  }
  if (anchor != nullptr) {
    if (anchor->count() != clusters) throw ConfigError("anchor cluster count differs from the request");
    return lloyd(tokens, *anchor);
  }
  return agglomerate(tokens, clusters);
}

std::vector<std::size_t> medoids(const Tensor& tokens, const ClusterSet& set) {
  const std::size_t d = tokens.cols();
  std::vector<std::size_t> out(set.count(), tokens.rows());
  std::vector<double> best(set.count(), std::numeric_limits<double>::infinity());
  for (std::size_t t = 0; t < tokens.rows(); ++t) {
    const std::size_t c = set.assignment[t];
    const double s = sq_dist(tokens.data() + t * d, set.centroids.data() + c * d, d);
    if (s < best[c]) {
      best[c] = s;
      out[c] = t;
    }
  }
  return out;
}

Assignment hungarian_match(const Tensor& cost) {
  const std::size_t n = cost.rows();
  if (cost.rank() != 2 || cost.cols() != n) throw ShapeError("hungarian_match needs a square matrix, got " +
                                                             cost.shape_string());
  if (!cost.all_finite()) throw NumericError("hungarian_match: cost matrix has non-finite entries");
  Assignment out;
  if (n == 0) return out;
  // Potentials formulation with 1-based sentinels (row/column 0).
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.col_of_row.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j) out.col_of_row[p[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i) out.cost += cost(i, out.col_of_row[i]);
  return out;
}

double atc_objective(const Tensor& pred, std::span<const std::size_t> pred_sizes, const ClusterSet& goal) {
  const std::size_t c = goal.count();
  if (pred.rows() != c || pred_sizes.size() != c || pred.cols() != goal.centroids.cols()) {
    throw ShapeError("ATC objective: prediction " + pred.shape_string() + " does not match " + std::to_string(c) +
                     " goal clusters");
  }
  const std::size_t d = pred.cols();
  Tensor cost({c, c});
  double total_tokens = 0.0;
  for (std::size_t s : goal.sizes) total_tokens += static_cast<double>(s);
  for (std::size_t i = 0; i < c; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const double w = 0.5 * static_cast<double>(pred_sizes[i] + goal.sizes[j]);
      cost(i, j) = w * sq_dist(pred.data() + i * d, goal.centroids.data() + j * d, d);
    }
  }
  return hungarian_match(cost).cost / total_tokens;
}

}  // namespace spimag::plan
