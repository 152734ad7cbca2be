#include "bvt/nn.hpp"

#include <cmath>
#include <limits>

namespace bvt {

namespace {

// Rows-by-trailing-dim view of an arbitrary-rank tensor.
std::size_t row_count(const Tensor& x) { return x.size() / x.dim(x.ndim() - 1); }

}  // namespace

// ---------------------------------------------------------------------------
// matmul / softmax / relu

Tensor matmul(const Tensor& a, const Tensor& b, std::uint64_t* macs) {
  if (a.ndim() != 2 || b.ndim() != 2) throw ShapeError("matmul: expects rank-2 tensors");
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul: inner dimensions disagree");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  if (macs) *macs += static_cast<std::uint64_t>(m) * k * n;
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.ndim()) throw ShapeError("softmax: axis out of range");
  const std::size_t len = x.dim(axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);

  Tensor out = x;
  double* p = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t s = 0; s < inner; ++s) {
      double* base = p + o * len * inner + s;
      double mx = base[0];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, base[l * inner]);
      double sum = 0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(base[l * inner] - mx);
        base[l * inner] = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (std::size_t l = 0; l < len; ++l) base[l * inner] *= inv;
    }
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0) out[i] = 0;
  return out;
}

// ---------------------------------------------------------------------------
// Linear

LinearLayer LinearLayer::init(Rng& rng, std::size_t out, std::size_t in) {
  LinearLayer l;
  l.weight = Tensor({out, in});
  l.bias = Tensor({out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (std::size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = rng.uniform(-bound, bound);
  for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-bound, bound);
  return l;
}

Tensor linear_forward(const Tensor& x, const LinearLayer& layer, std::uint64_t* macs) {
  const std::size_t in = layer.in_dim(), out = layer.out_dim();
  if (x.dim(x.ndim() - 1) != in) throw ShapeError("linear_forward: trailing dim != in_dim");
  const std::size_t rows = row_count(x);
  std::vector<std::size_t> out_dims = x.dims();
  out_dims.back() = out;
  Tensor y(out_dims);
  const double* px = x.data();
  const double* pw = layer.weight.data();
  const double* pb = layer.bias.data();
  double* py = y.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * in;
    double* yr = py + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = pw + o * in;
      double acc = pb[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  if (macs) *macs += static_cast<std::uint64_t>(rows) * in * out;
  return y;
}

void linear_backward(const Tensor& x, const LinearLayer& layer, const Tensor& dy,
                     LinearGrads& grads, Tensor* dx) {
  const std::size_t in = layer.in_dim(), out = layer.out_dim();
  const std::size_t rows = row_count(x);
  if (dy.dim(dy.ndim() - 1) != out || row_count(dy) != rows)
    throw ShapeError("linear_backward: dy shape mismatch");
  if (grads.weight.empty()) grads.weight = Tensor({out, in});
  if (grads.bias.empty()) grads.bias = Tensor({out});
  if (dx) {
    if (dx->empty()) *dx = Tensor(x.dims());
    check_same_dims(*dx, x, "linear_backward: dx");
  }
  const double* px = x.data();
  const double* pdy = dy.data();
  const double* pw = layer.weight.data();
  double* pdw = grads.weight.data();
  double* pdb = grads.bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * in;
    const double* dyr = pdy + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      pdb[o] += g;
      double* dwr = pdw + o * in;
      for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
    }
    if (dx) {
      double* dxr = dx->data() + r * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dyr[o];
        const double* wr = pw + o * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// MLP

Mlp Mlp::init(Rng& rng, const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw ConfigError("Mlp::init: need at least in and out dims");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    m.layers.push_back(LinearLayer::init(rng, dims[i + 1], dims[i]));
  return m;
}

Tensor mlp_forward(const Mlp& m, const Tensor& x, MlpCache* cache, std::uint64_t* macs) {
  if (m.layers.empty()) throw ConfigError("mlp_forward: empty MLP");
  Tensor cur = x;
  if (cache) {
    cache->inputs.clear();
    cache->pre_act.clear();
  }
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    if (cache) cache->inputs.push_back(cur);
    Tensor pre = linear_forward(cur, m.layers[li], macs);
    if (cache) cache->pre_act.push_back(pre);
    cur = (li + 1 < m.layers.size()) ? relu(pre) : std::move(pre);
  }
  return cur;
}

void mlp_backward(const Mlp& m, const MlpCache& cache, const Tensor& dy,
                  MlpGrads& grads, Tensor* dx) {
  if (grads.layers.size() != m.layers.size()) grads = make_zero_grads(m);
  Tensor cur = dy;
  for (std::size_t li = m.layers.size(); li-- > 0;) {
    if (li + 1 < m.layers.size()) {
      // gate by the ReLU applied after this layer's affine output
      const Tensor& pre = cache.pre_act[li];
      check_same_dims(cur, pre, "mlp_backward");
      for (std::size_t i = 0; i < cur.size(); ++i)
        if (pre[i] <= 0) cur[i] = 0;
    }
    Tensor dprev;
    Tensor* dprev_ptr = (li == 0) ? dx : &dprev;
    linear_backward(cache.inputs[li], m.layers[li], cur, grads.layers[li], dprev_ptr);
    if (li > 0) cur = std::move(dprev);
  }
}

MlpGrads make_zero_grads(const Mlp& m) {
  MlpGrads g;
  for (const auto& l : m.layers)
    g.layers.push_back({Tensor({l.out_dim(), l.in_dim()}), Tensor({l.out_dim()})});
  return g;
}

// ---------------------------------------------------------------------------
// Layer norm

LayerNorm LayerNorm::init(std::size_t c, double eps) {
  LayerNorm ln;
  ln.gain = Tensor::full({c}, 1.0);
  ln.shift = Tensor({c});
  ln.eps = eps;
  return ln;
}

Tensor layer_norm(const Tensor& x, const LayerNorm& ln, LayerNormCache* cache) {
  const std::size_t c = x.dim(x.ndim() - 1);
  if (ln.gain.size() != c || ln.shift.size() != c)
    throw ShapeError("layer_norm: gain/shift dims != trailing dim");
  const std::size_t rows = row_count(x);
  Tensor out(x.dims());
  Tensor normalized(x.dims());
  Tensor inv_std({rows});
  const double* px = x.data();
  double* po = out.data();
  double* pn = normalized.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * c;
    double mean = 0;
    for (std::size_t i = 0; i < c; ++i) mean += xr[i];
    mean /= static_cast<double>(c);
    double var = 0;
    for (std::size_t i = 0; i < c; ++i) {
      const double d = xr[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double istd = 1.0 / std::sqrt(var + ln.eps);
    inv_std[r] = istd;
    for (std::size_t i = 0; i < c; ++i) {
      const double nx = (xr[i] - mean) * istd;
      pn[r * c + i] = nx;
      po[r * c + i] = nx * ln.gain[i] + ln.shift[i];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

void layer_norm_backward(const LayerNorm& ln, const LayerNormCache& cache, const Tensor& dy,
                         LayerNormGrads& grads, Tensor* dx) {
  const std::size_t c = ln.gain.size();
  const std::size_t rows = row_count(dy);
  if (grads.gain.empty()) grads.gain = Tensor({c});
  if (grads.shift.empty()) grads.shift = Tensor({c});
  if (dx) {
    if (dx->empty()) *dx = Tensor(dy.dims());
    check_same_dims(*dx, dy, "layer_norm_backward: dx");
  }
  const double* pdy = dy.data();
  const double* pn = cache.normalized.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = pdy + r * c;
    const double* nr = pn + r * c;
    double mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t i = 0; i < c; ++i) {
      const double dxhat = dyr[i] * ln.gain[i];
      mean_dxhat += dxhat;
      mean_dxhat_xhat += dxhat * nr[i];
      grads.gain[i] += dyr[i] * nr[i];
      grads.shift[i] += dyr[i];
    }
    mean_dxhat /= static_cast<double>(c);
    mean_dxhat_xhat /= static_cast<double>(c);
    if (dx) {
      double* dxr = dx->data() + r * c;
      const double istd = cache.inv_std[r];
      for (std::size_t i = 0; i < c; ++i) {
        const double dxhat = dyr[i] * ln.gain[i];
        dxr[i] += istd * (dxhat - mean_dxhat - nr[i] * mean_dxhat_xhat);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Multi-head attention

MhaParams MhaParams::init(Rng& rng, std::size_t c, std::size_t heads) {
  if (heads == 0 || c % heads != 0)
    throw ConfigError("MhaParams::init: channel dim must be divisible by heads");
  MhaParams p;
  p.wq = LinearLayer::init(rng, c, c);
  p.wk = LinearLayer::init(rng, c, c);
  p.wv = LinearLayer::init(rng, c, c);
  p.wo = LinearLayer::init(rng, c, c);
  p.heads = heads;
  return p;
}

Tensor mha(const Tensor& query, const Tensor& key, const Tensor& value,
           const MhaParams& params, MhaCache* cache, MhaMacs* macs) {
  if (query.ndim() != 2 || key.ndim() != 2 || value.ndim() != 2)
    throw ShapeError("mha: expects rank-2 q/k/v");
  const std::size_t c = query.dim(1);
  if (key.dim(1) != c || value.dim(1) != c) throw ShapeError("mha: channel dims disagree");
  if (key.dim(0) != value.dim(0)) throw ShapeError("mha: key/value counts disagree");
  if (params.heads == 0 || c % params.heads != 0)
    throw ConfigError("mha: channel dim not divisible by head count");
  const std::size_t nq = query.dim(0), nk = key.dim(0);
  const std::size_t heads = params.heads, dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::uint64_t proj_macs = 0;
  Tensor qp = linear_forward(query, params.wq, &proj_macs);
  Tensor kp = linear_forward(key, params.wk, &proj_macs);
  Tensor vp = linear_forward(value, params.wv, &proj_macs);

  Tensor attn({heads, nq, nk});
  Tensor concat({nq, c});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    double* ah = attn.data() + h * nq * nk;
    for (std::size_t i = 0; i < nq; ++i) {
      const double* qr = qp.data() + i * c + off;
      double* arow = ah + i * nk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < nk; ++j) {
        const double* kr = kp.data() + j * c + off;
        double dot = 0;
        for (std::size_t d = 0; d < dh; ++d) dot += qr[d] * kr[d];
        arow[j] = dot * scale;
        mx = std::max(mx, arow[j]);
      }
      double sum = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        arow[j] = std::exp(arow[j] - mx);
        sum += arow[j];
      }
      const double inv = 1.0 / sum;
      for (std::size_t j = 0; j < nk; ++j) arow[j] *= inv;
      double* orow = concat.data() + i * c + off;
      for (std::size_t j = 0; j < nk; ++j) {
        const double w = arow[j];
        const double* vr = vp.data() + j * c + off;
        for (std::size_t d = 0; d < dh; ++d) orow[d] += w * vr[d];
      }
    }
  }
  Tensor out = linear_forward(concat, params.wo, &proj_macs);
  if (macs) {
    macs->proj += proj_macs;
    macs->attn += 2ull * nq * nk * c;
  }
  if (cache) {
    cache->qp = std::move(qp);
    cache->kp = std::move(kp);
    cache->vp = std::move(vp);
    cache->attn = std::move(attn);
    cache->concat = std::move(concat);
  }
  return out;
}

void mha_backward(const Tensor& query, const Tensor& key, const Tensor& value,
                  const MhaParams& params, const MhaCache& cache, const Tensor& dy,
                  MhaGrads& grads, Tensor* dq, Tensor* dk, Tensor* dv) {
  const std::size_t c = query.dim(1);
  const std::size_t nq = query.dim(0), nk = key.dim(0);
  const std::size_t heads = params.heads, dh = c / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor dconcat;
  linear_backward(cache.concat, params.wo, dy, grads.wo, &dconcat);

  Tensor dqp({nq, c}), dkp({nk, c}), dvp({nk, c});
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    const double* ah = cache.attn.data() + h * nq * nk;
    for (std::size_t i = 0; i < nq; ++i) {
      const double* arow = ah + i * nk;
      const double* dor = dconcat.data() + i * c + off;
      // dattn[j] = dor . vp_j ; dvp_j += attn[j] * dor
      std::vector<double> dattn(nk);
      for (std::size_t j = 0; j < nk; ++j) {
        const double* vr = cache.vp.data() + j * c + off;
        double dot = 0;
        for (std::size_t d = 0; d < dh; ++d) {
          dot += dor[d] * vr[d];
          dvp.data()[j * c + off + d] += arow[j] * dor[d];
        }
        dattn[j] = dot;
      }
      // softmax backward: dlogit = attn * (dattn - sum(attn * dattn))
      double dot_ad = 0;
      for (std::size_t j = 0; j < nk; ++j) dot_ad += arow[j] * dattn[j];
      for (std::size_t j = 0; j < nk; ++j) {
        const double dlogit = arow[j] * (dattn[j] - dot_ad) * scale;
        const double* kr = cache.kp.data() + j * c + off;
        const double* qr = cache.qp.data() + i * c + off;
        for (std::size_t d = 0; d < dh; ++d) {
          dqp.data()[i * c + off + d] += dlogit * kr[d];
          dkp.data()[j * c + off + d] += dlogit * qr[d];
        }
      }
    }
  }
  linear_backward(query, params.wq, dqp, grads.wq, dq);
  linear_backward(key, params.wk, dkp, grads.wk, dk);
  linear_backward(value, params.wv, dvp, grads.wv, dv);
}

MhaGrads make_zero_grads(const MhaParams& p) {
  auto zero = [](const LinearLayer& l) {
    return LinearGrads{Tensor({l.out_dim(), l.in_dim()}), Tensor({l.out_dim()})};
  };
  return MhaGrads{zero(p.wq), zero(p.wk), zero(p.wv), zero(p.wo)};
}

}  // namespace bvt
