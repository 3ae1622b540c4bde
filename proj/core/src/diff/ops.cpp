// Copyright 2026 The spimag Authors
// SPDX-License-Identifier: Apache-2.0

#include "spimag/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "eigen_view.hpp"
#include "spimag/errors.hpp"

namespace spimag::diff {

using detail::ConstStridedMap;
using detail::require_matrix;
using detail::RowMat;
using detail::StridedMap;
using detail::view;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

}  // namespace

NodeId matmul(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_matrix(av, "matmul");
  require_matrix(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + av.shape_string() + " x " +
                     bv.shape_string());
  }
  Tensor out({av.rows(), bv.cols()});
  view(out).noalias() = view(av) * view(bv);
  return g.push(OpKind::kMatMul, {a, b}, std::move(out), [a, b](Graph& gr, NodeId self) {
    const Tensor& go = gr.grad(self);
    if (gr.requires_grad(a)) view(gr.grad_buffer(a)).noalias() += view(go) * view(gr.value(b)).transpose();
    if (gr.requires_grad(b)) view(gr.grad_buffer(b)).noalias() += view(gr.value(a)).transpose() * view(go);
  });
}

NodeId add(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_same_shape(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return g.push(OpKind::kAdd, {a, b}, std::move(out), [a, b](Graph& gr, NodeId self) {
    const Tensor& go = gr.grad(self);
    for (NodeId in : {a, b}) {
      if (!gr.requires_grad(in)) continue;
      Tensor& gi = gr.grad_buffer(in);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
    }
  });
}

NodeId add_row(Graph& g, NodeId x, NodeId row) {
  const Tensor& xv = g.value(x);
  const Tensor& rv = g.value(row);
  require_matrix(xv, "add_row");
  if (rv.size() != xv.cols()) {
    throw ShapeError("add_row: row " + rv.shape_string() + " does not fit " + xv.shape_string());
  }
  Tensor out = xv;
  const std::size_t cols = xv.cols();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    double* o = out.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) o[c] += rv[c];
  }
  return g.push(OpKind::kAddRow, {x, row}, std::move(out), [x, row](Graph& gr, NodeId self) {
    const Tensor& go = gr.grad(self);
    if (gr.requires_grad(x)) {
      Tensor& gx = gr.grad_buffer(x);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    }
    if (gr.requires_grad(row)) {
      Tensor& gr_row = gr.grad_buffer(row);
      const std::size_t c = go.cols();
      for (std::size_t r = 0; r < go.rows(); ++r) {
        for (std::size_t j = 0; j < c; ++j) gr_row[j] += go[r * c + j];
      }
    }
  });
}

NodeId scale(Graph& g, NodeId x, double factor) {
  Tensor out = g.value(x);
  for (double& v : out.values()) v *= factor;
  return g.push(OpKind::kScale, {x}, std::move(out), [x, factor](Graph& gr, NodeId self) {
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * go[i];
  });
}

NodeId layernorm(Graph& g, NodeId x, NodeId gain, NodeId bias) {
  const Tensor& xv = g.value(x);
  require_matrix(xv, "layernorm");
  const std::size_t n = xv.cols();
  if (n < 2) throw DegenerateInputError("layernorm: last axis has " + std::to_string(n) + " < 2 entries");
  const Tensor& gv = g.value(gain);
  const Tensor& bv = g.value(bias);
  if (gv.size() != n || bv.size() != n) {
    throw ShapeError("layernorm: gain/bias " + gv.shape_string() + "/" + bv.shape_string() +
                     " vs last axis " + std::to_string(n));
  }
  const std::size_t rows = xv.rows();
  Tensor out({rows, n});
  std::vector<double> xhat(rows * n);
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xr[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[r] = inv;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (xr[c] - mean) * inv;
      xhat[r * n + c] = h;
      out[r * n + c] = gv[c] * h + bv[c];
    }
  }
  if (!g.recording()) {
    xhat.clear();
    inv_std.clear();
  }
  return g.push(OpKind::kLayerNorm, {x, gain, bias}, std::move(out),
                [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& gr, NodeId self) {
                  const Tensor& go = gr.grad(self);
                  const Tensor& gv2 = gr.value(gain);
                  const std::size_t cols = go.cols();
                  const std::size_t nrows = go.rows();
                  if (gr.requires_grad(gain) || gr.requires_grad(bias)) {
                    Tensor& gg = gr.grad_buffer(gain);
                    Tensor& gb = gr.grad_buffer(bias);
                    for (std::size_t r = 0; r < nrows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) {
                        gg[c] += go[r * cols + c] * xhat[r * cols + c];
                        gb[c] += go[r * cols + c];
                      }
                    }
                  }
                  if (!gr.requires_grad(x)) return;
                  Tensor& gx = gr.grad_buffer(x);
                  const double inv_n = 1.0 / static_cast<double>(cols);
                  for (std::size_t r = 0; r < nrows; ++r) {
                    double sum_d = 0.0;
                    double sum_dx = 0.0;
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double d = go[r * cols + c] * gv2[c];
                      sum_d += d;
                      sum_dx += d * xhat[r * cols + c];
                    }
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double d = go[r * cols + c] * gv2[c];
                      gx[r * cols + c] +=
                          inv_std[r] * (d - inv_n * sum_d - xhat[r * cols + c] * inv_n * sum_dx);
                    }
                  }
                });
}

namespace {

// tanh(kC * (v + kA * v^3)) elementwise, via exp so Eigen can vectorize it.
Eigen::ArrayXd gelu_tanh(const Eigen::Ref<const Eigen::ArrayXd>& v) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  const Eigen::ArrayXd y = (kC * (v + kA * v.cube())).min(20.0).max(-20.0);
  return 1.0 - 2.0 / ((2.0 * y).exp() + 1.0);
}

Eigen::Map<const Eigen::ArrayXd> flat(const Tensor& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}

Eigen::Map<Eigen::ArrayXd> flat(Tensor& t) { return {t.data(), static_cast<Eigen::Index>(t.size())}; }

}  // namespace

NodeId gelu(Graph& g, NodeId x) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  flat(out) = 0.5 * flat(xv) * (1.0 + gelu_tanh(flat(xv)));
  return g.push(OpKind::kGelu, {x}, std::move(out), [x](Graph& gr, NodeId self) {
    constexpr double kC = 0.7978845608028654;
    constexpr double kA = 0.044715;
    const auto go = flat(gr.grad(self));
    const auto v = flat(gr.value(x));
    const Eigen::ArrayXd t = gelu_tanh(v);
    const Eigen::ArrayXd dt = (1.0 - t.square()) * kC * (1.0 + 3.0 * kA * v.square());
    flat(gr.grad_buffer(x)) += go * (0.5 * (1.0 + t) + 0.5 * v * dt);
  });
}

NodeId concat_cols(Graph& g, NodeId a, NodeId b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require_matrix(av, "concat_cols");
  require_matrix(bv, "concat_cols");
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row counts differ, " + av.shape_string() + " vs " + bv.shape_string());
  }
  const std::size_t ca = av.cols();
  const std::size_t cb = bv.cols();
  Tensor out({av.rows(), ca + cb});
  for (std::size_t r = 0; r < av.rows(); ++r) {
    std::copy_n(av.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(bv.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return g.push(OpKind::kConcatCols, {a, b}, std::move(out), [a, b, ca, cb](Graph& gr, NodeId self) {
    const Tensor& go = gr.grad(self);
    const std::size_t rows = go.rows();
    if (gr.requires_grad(a)) {
      Tensor& ga = gr.grad_buffer(a);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += go[r * (ca + cb) + c];
    }
    if (gr.requires_grad(b)) {
      Tensor& gb = gr.grad_buffer(b);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += go[r * (ca + cb) + ca + c];
    }
  });
}

NodeId gather_rows(Graph& g, NodeId table, std::vector<std::size_t> indices) {
  const Tensor& tv = g.value(table);
  require_matrix(tv, "gather_rows");
  const std::size_t cols = tv.cols();
  Tensor out({indices.size(), cols});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= tv.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                       tv.shape_string());
    }
    std::copy_n(tv.data() + indices[i] * cols, cols, out.data() + i * cols);
  }
  return g.push(OpKind::kGatherRows, {table}, std::move(out),
                [table, indices = std::move(indices)](Graph& gr, NodeId self) {
                  const Tensor& go = gr.grad(self);
                  Tensor& gt = gr.grad_buffer(table);
                  const std::size_t c = go.cols();
                  for (std::size_t i = 0; i < indices.size(); ++i) {
                    double* dst = gt.data() + indices[i] * c;
                    const double* src = go.data() + i * c;
                    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                  }
                });
}

NodeId dropout(Graph& g, NodeId x, double p, std::mt19937_64& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw ConfigError("dropout probability must be < 1");
  const Tensor& xv = g.value(x);
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> factor(xv.size());
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) {
    factor[i] = keep(rng) ? s : 0.0;
    out[i] *= factor[i];
  }
  return g.push(OpKind::kDropout, {x}, std::move(out), [x, factor = std::move(factor)](Graph& gr, NodeId self) {
    const Tensor& go = gr.grad(self);
    Tensor& gx = gr.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i] * factor[i];
  });
}

NodeId mse_rows(Graph& g, NodeId pred, NodeId target) {
  const Tensor& pv = g.value(pred);
  const Tensor& tv = g.value(target);
  require_same_shape(pv, tv, "mse_rows");
  if (pv.rows() == 0) throw DegenerateInputError("mse_rows: no rows");
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += (pv[i] - tv[i]) * (pv[i] - tv[i]);
  const double inv_rows = 1.0 / static_cast<double>(pv.rows());
  return g.push(OpKind::kMseRows, {pred, target}, Tensor({1, 1}, {acc * inv_rows}),
                [pred, target, inv_rows](Graph& gr, NodeId self) {
                  const double go = gr.grad(self)[0];
                  const Tensor& p = gr.value(pred);
                  const Tensor& t = gr.value(target);
                  if (gr.requires_grad(pred)) {
                    Tensor& gp = gr.grad_buffer(pred);
                    for (std::size_t i = 0; i < p.size(); ++i) gp[i] += 2.0 * inv_rows * go * (p[i] - t[i]);
                  }
                  if (gr.requires_grad(target)) {
                    Tensor& gt = gr.grad_buffer(target);
                    for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= 2.0 * inv_rows * go * (p[i] - t[i]);
                  }
                });
}

NodeId sum(Graph& g, NodeId x) {
  double acc = 0.0;
  for (double v : g.value(x).values()) acc += v;
  return g.push(OpKind::kSum, {x}, Tensor({1, 1}, {acc}), [x](Graph& gr, NodeId self) {
    const double go = gr.grad(self)[0];
    for (double& v : gr.grad_buffer(x).values()) v += go;
  });
}

NodeId linear(Graph& g, NodeId x, NodeId weight, NodeId bias) {
  return add_row(g, matmul(g, x, weight), bias);
}

NodeId multi_head_attention(Graph& g, NodeId q, NodeId k, NodeId v, const AttentionLayout& layout,
                            std::vector<AttentionMask> masks, AttentionSink* sink) {
  const Tensor& qv = g.value(q);
  const Tensor& kv = g.value(k);
  const Tensor& vv = g.value(v);
  require_matrix(qv, "attention");
  require_matrix(kv, "attention");
  require_matrix(vv, "attention");
  const std::size_t tq = layout.queries_per_seq;
  const std::size_t tk = layout.keys_per_seq;
  const std::size_t heads = layout.n_heads;
  const std::size_t width = qv.cols();
  if (heads == 0 || tq == 0 || tk == 0) throw ShapeError("attention: empty layout");
  if (kv.cols() != width || vv.cols() != width) {
    throw ShapeError("attention: q/k/v widths differ, " + qv.shape_string() + ", " + kv.shape_string() +
                     ", " + vv.shape_string());
  }
  if (width % heads != 0) {
    throw ShapeError("attention: width " + std::to_string(width) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  if (qv.rows() % tq != 0) throw ShapeError("attention: query rows not a multiple of queries_per_seq");
  const std::size_t batch = qv.rows() / tq;
  if (kv.rows() != batch * tk || vv.rows() != batch * tk) {
    throw ShapeError("attention: key/value rows " + kv.shape_string() + " do not match batch " +
                     std::to_string(batch) + " x " + std::to_string(tk));
  }
  if (!masks.empty() && masks.size() != 1 && masks.size() != batch) {
    throw ShapeError("attention: expected 0, 1 or " + std::to_string(batch) + " masks, got " +
                     std::to_string(masks.size()));
  }
  for (const AttentionMask& m : masks) {
    if (m.n_queries() != tq || m.n_keys() != tk) {
      throw ShapeError("attention: mask is " + std::to_string(m.n_queries()) + "x" +
                       std::to_string(m.n_keys()) + ", expected " + std::to_string(tq) + "x" +
                       std::to_string(tk));
    }
    for (std::size_t i = 0; i < tq; ++i) {
      const std::uint8_t* r = m.row(i);
      if (std::none_of(r, r + tk, [](std::uint8_t b) { return b != 0; })) {
        throw DegenerateInputError("attention: query row " + std::to_string(i) + " has every key masked");
      }
    }
  }

  const std::size_t d = width / heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool keep_probs = g.recording();
  std::vector<double> probs(keep_probs ? batch * heads * tq * tk : 0);
  Tensor out({batch * tq, width});
  RowMat scores(tq, tk);
  const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(width));

  for (std::size_t b = 0; b < batch; ++b) {
    const AttentionMask* mask = masks.empty() ? nullptr : &masks[masks.size() == 1 ? 0 : b];
    for (std::size_t h = 0; h < heads; ++h) {
      ConstStridedMap qb(qv.data() + b * tq * width + h * d, tq, d, stride);
      ConstStridedMap kb(kv.data() + b * tk * width + h * d, tk, d, stride);
      ConstStridedMap vb(vv.data() + b * tk * width + h * d, tk, d, stride);
      StridedMap ob(out.data() + b * tq * width + h * d, tq, d, stride);
      scores.noalias() = qb * kb.transpose();
      for (std::size_t i = 0; i < tq; ++i) {
        double* s = scores.data() + i * tk;
        const std::uint8_t* allow = mask ? mask->row(i) : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < tk; ++j) {
          s[j] = (allow && !allow[j]) ? kMaskedLogit : s[j] * inv_sqrt_d;
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j < tk; ++j) {
          s[j] = std::exp(s[j] - mx);
          z += s[j];
        }
        const double inv_z = 1.0 / z;
        for (std::size_t j = 0; j < tk; ++j) s[j] *= inv_z;
      }
      ob.noalias() = scores * vb;
      if (keep_probs) {
        std::copy_n(scores.data(), tq * tk, probs.data() + (b * heads + h) * tq * tk);
      }
      if (sink) {
        Tensor p({tq, tk});
        std::copy_n(scores.data(), tq * tk, p.data());
        sink->push_back(std::move(p));
      }
    }
  }

  return g.push(OpKind::kAttention, {q, k, v}, std::move(out),
                [q, k, v, batch, heads, tq, tk, d, width, inv_sqrt_d, probs = std::move(probs)](Graph& gr,
                                                                                              NodeId self) {
                  const Tensor& go = gr.grad(self);
                  const Tensor& qv2 = gr.value(q);
                  const Tensor& kv2 = gr.value(k);
                  const Tensor& vv2 = gr.value(v);
                  const bool need_q = gr.requires_grad(q);
                  const bool need_k = gr.requires_grad(k);
                  const bool need_v = gr.requires_grad(v);
                  Tensor* gq = need_q ? &gr.grad_buffer(q) : nullptr;
                  Tensor* gk = need_k ? &gr.grad_buffer(k) : nullptr;
                  Tensor* gv = need_v ? &gr.grad_buffer(v) : nullptr;
                  const Eigen::OuterStride<> st(static_cast<Eigen::Index>(width));
                  RowMat dp(tq, tk);
                  for (std::size_t b = 0; b < batch; ++b) {
                    for (std::size_t h = 0; h < heads; ++h) {
                      detail::ConstMatMap p(probs.data() + (b * heads + h) * tq * tk, tq, tk);
                      ConstStridedMap gob(go.data() + b * tq * width + h * d, tq, d, st);
                      ConstStridedMap qb(qv2.data() + b * tq * width + h * d, tq, d, st);
                      ConstStridedMap kb(kv2.data() + b * tk * width + h * d, tk, d, st);
                      ConstStridedMap vb(vv2.data() + b * tk * width + h * d, tk, d, st);
                      if (gv) {
                        StridedMap gvb(gv->data() + b * tk * width + h * d, tk, d, st);
                        gvb.noalias() += p.transpose() * gob;
                      }
                      if (!gq && !gk) continue;
                      dp.noalias() = gob * vb.transpose();
                      for (std::size_t i = 0; i < tq; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < tk; ++j) dot += dp(i, j) * p(i, j);
                        for (std::size_t j = 0; j < tk; ++j) dp(i, j) = p(i, j) * (dp(i, j) - dot) * inv_sqrt_d;
                      }
                      if (gq) {
                        StridedMap gqb(gq->data() + b * tq * width + h * d, tq, d, st);
                        gqb.noalias() += dp * kb;
                      }
                      if (gk) {
                        StridedMap gkb(gk->data() + b * tk * width + h * d, tk, d, st);
                        gkb.noalias() += dp.transpose() * qb;
                      }
                    }
                  }
                });
}

NodeId masked_attention(Graph& g, NodeId q, NodeId k, NodeId v, const AttentionMask& mask, AttentionSink* sink) {
  const AttentionLayout layout{1, g.value(q).rows(), g.value(k).rows()};
  return multi_head_attention(g, q, k, v, layout, {mask}, sink);
}

}  // namespace spimag::diff
