#include "bvt/width.hpp"

#include <algorithm>

namespace bvt {

WidthFeatures height_maxpool(const FeatureVolume& feat) {
  if (feat.data.ndim() != 4) throw ShapeError("height_maxpool: expects (n, h, w, c)");
  const std::size_t n = feat.cameras(), h = feat.height(), w = feat.width(),
                    c = feat.channels();
  Tensor out({n, w, c});
  const double* src = feat.data.data();
  double* dst = out.data();
  for (std::size_t cam = 0; cam < n; ++cam) {
    for (std::size_t j = 0; j < w; ++j) {
      double* cell = dst + (cam * w + j) * c;
      for (std::size_t ch = 0; ch < c; ++ch)
        cell[ch] = src[((cam * h + 0) * w + j) * c + ch];
      for (std::size_t i = 1; i < h; ++i) {
        const double* row = src + ((cam * h + i) * w + j) * c;
        for (std::size_t ch = 0; ch < c; ++ch)
          if (row[ch] > cell[ch]) cell[ch] = row[ch];
      }
    }
  }
  return WidthFeatures{std::move(out)};
}

RefineParams RefineParams::init(Rng& rng, std::size_t c, std::size_t heads,
                                std::size_t ffn_hidden) {
  RefineParams p;
  p.self_attn = MhaParams::init(rng, c, heads);
  p.cross_attn = MhaParams::init(rng, c, heads);
  p.ffn = Mlp::init(rng, {c, ffn_hidden, c});
  p.norm_self = LayerNorm::init(c);
  p.norm_cross = LayerNorm::init(c);
  p.norm_ffn = LayerNorm::init(c);
  return p;
}

namespace {

// (w, c) slice of camera `cam` from (n, w, c).
Tensor camera_slice(const Tensor& t, std::size_t cam) {
  const std::size_t w = t.dim(1), c = t.dim(2);
  Tensor out({w, c});
  std::copy(t.data() + cam * w * c, t.data() + (cam + 1) * w * c, out.data());
  return out;
}

// (h, c) pixels of image column j in camera cam from (n, h, w, c).
Tensor column_slice(const Tensor& t, std::size_t cam, std::size_t j) {
  const std::size_t h = t.dim(1), w = t.dim(2), c = t.dim(3);
  Tensor out({h, c});
  for (std::size_t i = 0; i < h; ++i)
    std::copy(t.data() + ((cam * h + i) * w + j) * c,
              t.data() + ((cam * h + i) * w + j) * c + c, out.data() + i * c);
  return out;
}

}  // namespace

WidthFeatures refine(const WidthFeatures& width, const FeatureVolume& feat,
                     const RefineParams& params, RefineCache* cache, RefineMacs* macs) {
  const std::size_t n = width.cameras(), w = width.width(), c = width.channels();
  if (feat.data.ndim() != 4 || feat.cameras() != n || feat.width() != w ||
      feat.channels() != c)
    throw ShapeError("refine: width/feature shapes disagree");

  Tensor out({n, w, c});
  if (cache) cache->cameras.assign(n, RefineCameraCache{});
  for (std::size_t cam = 0; cam < n; ++cam) {
    RefineCameraCache local;
    RefineCameraCache* cc = cache ? &cache->cameras[cam] : &local;

    cc->w0 = camera_slice(width.data, cam);

    // Self-attention across this camera's columns.
    MhaMacs self_macs;
    Tensor s = mha(cc->w0, cc->w0, cc->w0, params.self_attn, &cc->self, &self_macs);
    Tensor r1 = cc->w0 + s;
    cc->r1 = params.use_norm ? layer_norm(r1, params.norm_self, &cc->norm_self)
                             : std::move(r1);

    // Cross-attention: column j sees only the h pixels of image column j.
    MhaMacs cross_macs;
    if (cache) cc->cross.resize(w);
    Tensor r2 = cc->r1;
    for (std::size_t j = 0; j < w; ++j) {
      Tensor q({1, c});
      std::copy(cc->r1.data() + j * c, cc->r1.data() + (j + 1) * c, q.data());
      Tensor col = column_slice(feat.data, cam, j);
      Tensor a = mha(q, col, col, params.cross_attn, cache ? &cc->cross[j] : nullptr,
                     &cross_macs);
      for (std::size_t ch = 0; ch < c; ++ch) r2.data()[j * c + ch] += a[ch];
    }
    cc->r2 = params.use_norm ? layer_norm(r2, params.norm_cross, &cc->norm_cross)
                             : std::move(r2);

    std::uint64_t ffn_macs = 0;
    Tensor f = mlp_forward(params.ffn, cc->r2, cache ? &cc->ffn : nullptr, &ffn_macs);
    Tensor r3 = cc->r2 + f;
    Tensor final = params.use_norm ? layer_norm(r3, params.norm_ffn, &cc->norm_ffn)
                                   : std::move(r3);
    std::copy(final.data(), final.data() + w * c, out.data() + cam * w * c);

    if (macs) {
      macs->self.proj += self_macs.proj;
      macs->self.attn += self_macs.attn;
      macs->cross.proj += cross_macs.proj;
      macs->cross.attn += cross_macs.attn;
      macs->ffn += ffn_macs;
    }
  }
  return WidthFeatures{std::move(out)};
}

void refine_backward(const WidthFeatures& width, const FeatureVolume& feat,
                     const RefineParams& params, const RefineCache& cache,
                     const Tensor& dy, RefineGrads& grads,
                     Tensor* dwidth, Tensor* dfeat) {
  const std::size_t n = width.cameras(), w = width.width(), c = width.channels();
  const std::size_t h = feat.height();
  if (cache.cameras.size() != n) throw ShapeError("refine_backward: cache camera count");
  if (grads.ffn.layers.empty()) grads = make_zero_grads(params);
  if (dwidth) {
    if (dwidth->empty()) *dwidth = Tensor(width.data.dims());
    check_same_dims(*dwidth, width.data, "refine_backward: dwidth");
  }
  if (dfeat) {
    if (dfeat->empty()) *dfeat = Tensor(feat.data.dims());
    check_same_dims(*dfeat, feat.data, "refine_backward: dfeat");
  }

  for (std::size_t cam = 0; cam < n; ++cam) {
    const RefineCameraCache& cc = cache.cameras[cam];
    Tensor dcam({w, c});
    std::copy(dy.data() + cam * w * c, dy.data() + (cam + 1) * w * c, dcam.data());

    // FFN stage: out = norm(r2 + ffn(r2))
    Tensor dr3;
    if (params.use_norm) {
      dr3 = Tensor({w, c});
      layer_norm_backward(params.norm_ffn, cc.norm_ffn, dcam, grads.norm_ffn, &dr3);
    } else {
      dr3 = dcam;
    }
    Tensor dr2 = dr3;  // residual path
    Tensor dr2_ffn({w, c});
    mlp_backward(params.ffn, cc.ffn, dr3, grads.ffn, &dr2_ffn);
    dr2 += dr2_ffn;

    // Cross stage: r2_pre = r1 + sum_j cross_j(r1_j, col_j)
    Tensor dr2_pre;
    if (params.use_norm) {
      dr2_pre = Tensor({w, c});
      layer_norm_backward(params.norm_cross, cc.norm_cross, dr2, grads.norm_cross, &dr2_pre);
    } else {
      dr2_pre = dr2;
    }
    Tensor dr1 = dr2_pre;  // residual path
    for (std::size_t j = 0; j < w; ++j) {
      Tensor da({1, c});
      std::copy(dr2_pre.data() + j * c, dr2_pre.data() + (j + 1) * c, da.data());
      Tensor q({1, c});
      std::copy(cc.r1.data() + j * c, cc.r1.data() + (j + 1) * c, q.data());
      Tensor col = column_slice(feat.data, cam, j);
      Tensor dq({1, c}), dcol({h, c});
      mha_backward(q, col, col, params.cross_attn, cc.cross[j], da, grads.cross_attn,
                   &dq, &dcol, &dcol);
      for (std::size_t ch = 0; ch < c; ++ch) dr1.data()[j * c + ch] += dq[ch];
      if (dfeat) {
        for (std::size_t i = 0; i < h; ++i) {
          double* dst = dfeat->data() + ((cam * h + i) * w + j) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += dcol.data()[i * c + ch];
        }
      }
    }

    // Self stage: r1_pre = w0 + self(w0)
    Tensor dr1_pre;
    if (params.use_norm) {
      dr1_pre = Tensor({w, c});
      layer_norm_backward(params.norm_self, cc.norm_self, dr1, grads.norm_self, &dr1_pre);
    } else {
      dr1_pre = dr1;
    }
    Tensor dw0 = dr1_pre;  // residual path
    Tensor dq({w, c}), dk({w, c}), dv({w, c});
    mha_backward(cc.w0, cc.w0, cc.w0, params.self_attn, cc.self, dr1_pre, grads.self_attn,
                 &dq, &dk, &dv);
    dw0 += dq;
    dw0 += dk;
    dw0 += dv;
    if (dwidth) {
      double* dst = dwidth->data() + cam * w * c;
      for (std::size_t idx = 0; idx < w * c; ++idx) dst[idx] += dw0[idx];
    }
  }
}

RefineGrads make_zero_grads(const RefineParams& p) {
  RefineGrads g;
  g.self_attn = make_zero_grads(p.self_attn);
  g.cross_attn = make_zero_grads(p.cross_attn);
  g.ffn = make_zero_grads(p.ffn);
  const std::size_t c = p.norm_self.gain.size();
  g.norm_self = {Tensor({c}), Tensor({c})};
  g.norm_cross = {Tensor({c}), Tensor({c})};
  g.norm_ffn = {Tensor({c}), Tensor({c})};
  return g;
}

RefineCost refine_cost(std::size_t w, std::size_t h, std::size_t c) {
  if (w == 0 || h == 0) throw ConfigError("refine_cost: w and h must be >= 1");
  RefineCost cost;
  cost.self_macs = 2ull * w * w * c;   // scores w*w*c + values w*w*c
  cost.cross_macs = 2ull * w * h * c;  // per column: scores h*c + values h*c
  return cost;
}

std::uint64_t conv_refine_cost(std::size_t w, std::size_t c, std::size_t k,
                               std::size_t layers) {
  if (w == 0 || c == 0 || k == 0) throw ConfigError("conv_refine_cost: sizes must be >= 1");
  return static_cast<std::uint64_t>(layers) * w * c * c * k;
}

}  // namespace bvt
