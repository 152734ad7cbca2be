// Test-only brute-force oracles. These reimplement the math with plain loops
// and stay independent of the library's kernel code paths; tests compare the
// two routes.
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bvt/decoder.hpp"
#include "bvt/nn.hpp"
#include "bvt/tensor.hpp"

namespace oracle {

// Plain ijk triple loop.
inline bvt::Tensor matmul(const bvt::Tensor& a, const bvt::Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  bvt::Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      out.at(i, j) = s;
    }
  return out;
}

// Direct exp/sum evaluation (no max subtraction; fine for moderate inputs).
inline std::vector<double> softmax_direct(const std::vector<double>& x) {
  double sum = 0;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i]);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Two-pass mean/variance normalization of a single row.
inline std::vector<double> layer_norm_row(const std::vector<double>& x,
                                          const std::vector<double>& gain,
                                          const std::vector<double>& shift, double eps) {
  const std::size_t c = x.size();
  double mean = 0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(c);
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(c);
  std::vector<double> out(c);
  for (std::size_t i = 0; i < c; ++i)
    out[i] = (x[i] - mean) / std::sqrt(var + eps) * gain[i] + shift[i];
  return out;
}

// y = x W^T + b over rows, plain loops.
inline bvt::Tensor linear(const bvt::Tensor& x, const bvt::Tensor& w, const bvt::Tensor& b) {
  const std::size_t rows = x.size() / x.dim(x.ndim() - 1);
  const std::size_t in = w.dim(1), out_dim = w.dim(0);
  std::vector<std::size_t> dims = x.dims();
  dims.back() = out_dim;
  bvt::Tensor y(dims);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out_dim; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += w.at(o, i) * x[r * in + i];
      y[r * out_dim + o] = s;
    }
  return y;
}

// Scaled dot-product attention with explicit per-head loops and the direct
// softmax above.
inline bvt::Tensor mha(const bvt::Tensor& q, const bvt::Tensor& k, const bvt::Tensor& v,
                       const bvt::MhaParams& p) {
  const std::size_t nq = q.dim(0), nk = k.dim(0), c = q.dim(1);
  const std::size_t heads = p.heads, dh = c / heads;
  const bvt::Tensor qp = linear(q, p.wq.weight, p.wq.bias);
  const bvt::Tensor kp = linear(k, p.wk.weight, p.wk.bias);
  const bvt::Tensor vp = linear(v, p.wv.weight, p.wv.bias);
  bvt::Tensor concat({nq, c});
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<double> logits(nk);
      for (std::size_t j = 0; j < nk; ++j) {
        double dot = 0;
        for (std::size_t d = 0; d < dh; ++d)
          dot += qp.at(i, h * dh + d) * kp.at(j, h * dh + d);
        logits[j] = dot / std::sqrt(static_cast<double>(dh));
      }
      const std::vector<double> probs = softmax_direct(logits);
      for (std::size_t d = 0; d < dh; ++d) {
        double s = 0;
        for (std::size_t j = 0; j < nk; ++j) s += probs[j] * vp.at(j, h * dh + d);
        concat.at(i, h * dh + d) = s;
      }
    }
  }
  return linear(concat, p.wo.weight, p.wo.bias);
}

// Row-wise layer norm of a rank-2 tensor via the single-row oracle.
inline bvt::Tensor layer_norm(const bvt::Tensor& x, const bvt::LayerNorm& ln) {
  const std::size_t c = x.dim(x.ndim() - 1), rows = x.size() / c;
  std::vector<double> gain(c), shift(c);
  for (std::size_t i = 0; i < c; ++i) {
    gain[i] = ln.gain[i];
    shift[i] = ln.shift[i];
  }
  bvt::Tensor out(x.dims());
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> row(c);
    for (std::size_t i = 0; i < c; ++i) row[i] = x[r * c + i];
    const std::vector<double> normed = layer_norm_row(row, gain, shift, ln.eps);
    for (std::size_t i = 0; i < c; ++i) out[r * c + i] = normed[i];
  }
  return out;
}

// Two-layer ReLU MLP via the loop primitives.
inline bvt::Tensor mlp(const bvt::Tensor& x, const bvt::Mlp& m) {
  bvt::Tensor cur = x;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    cur = linear(cur, m.layers[li].weight, m.layers[li].bias);
    if (li + 1 < m.layers.size())
      for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = std::max(0.0, cur[i]);
  }
  return cur;
}

// Single decoder layer: U = Q + MHA(Q, K, V); F = U + FFN(U), post-norm when
// asked, all built from the loop primitives above.
inline bvt::Tensor decoder(const bvt::Tensor& queries, const bvt::Tensor& keys,
                           const bvt::Tensor& values, const bvt::DecoderParams& p) {
  bvt::Tensor u = queries + oracle::mha(queries, keys, values, p.attn);
  if (p.use_norm) u = oracle::layer_norm(u, p.norm_attn);
  bvt::Tensor f = u + oracle::mlp(u, p.ffn);
  if (p.use_norm) f = oracle::layer_norm(f, p.norm_ffn);
  return f;
}

}  // namespace oracle
