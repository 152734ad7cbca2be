#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "bvt/decoder.hpp"
#include "bvt/gradcheck.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bvt;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& dims, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(dims);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

LinearLayer identity_layer(std::size_t c) {
  LinearLayer l;
  l.weight = Tensor({c, c});
  for (std::size_t i = 0; i < c; ++i) l.weight.at(i, i) = 1.0;
  l.bias = Tensor({c});
  return l;
}

void zero_out(Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0;
}

}  // namespace

TEST_CASE("make_grid centers are symmetric with uniform spacing") {
  const BevGrid g2 = make_grid(2, 2, 1.0);
  CHECK(g2.centers.at(std::size_t{0}, std::size_t{0}, std::size_t{0}) == -0.5);
  CHECK(g2.centers.at(std::size_t{0}, std::size_t{0}, std::size_t{1}) == -0.5);
  CHECK(g2.centers.at(std::size_t{0}, std::size_t{1}, std::size_t{1}) == 0.5);
  CHECK(g2.centers.at(std::size_t{1}, std::size_t{1}, std::size_t{0}) == 0.5);

  const BevGrid g = make_grid(128, 128, 51.2);
  const double spacing = g.centers.at(std::size_t{0}, std::size_t{1}, std::size_t{1}) -
                         g.centers.at(std::size_t{0}, std::size_t{0}, std::size_t{1});
  CHECK(spacing == doctest::Approx(0.8).epsilon(1e-12));

  // mirror cells negate exactly; the running sum carries only rounding noise
  for (std::size_t i = 0; i < 128; ++i)
    for (std::size_t j = 0; j < 128; ++j)
      for (std::size_t a = 0; a < 2; ++a)
        CHECK(g.centers.at(i, j, a) == -g.centers.at(127 - i, 127 - j, a));
  double sum_x = 0, sum_y = 0;
  for (std::size_t i = 0; i < 128; ++i)
    for (std::size_t j = 0; j < 128; ++j) {
      sum_x += g.centers.at(i, j, std::size_t{0});
      sum_y += g.centers.at(i, j, std::size_t{1});
    }
  CHECK(std::fabs(sum_x) <= 1e-9);
  CHECK(std::fabs(sum_y) <= 1e-9);

  CHECK_THROWS_AS(make_grid(0, 4, 1.0), ConfigError);
  CHECK_THROWS_AS(make_grid(4, 4, -1.0), ConfigError);
}

TEST_CASE("transform with a single key adds that value to every query") {
  Rng rng(501);
  const std::size_t c = 8;
  DecoderParams params;
  params.attn = MhaParams{identity_layer(c), identity_layer(c), identity_layer(c),
                          identity_layer(c), 2};
  params.ffn.layers = {identity_layer(c), identity_layer(c)};
  zero_out(params.ffn.layers.back().weight);
  zero_out(params.ffn.layers.back().bias);
  params.norm_attn = LayerNorm::init(c);
  params.norm_ffn = LayerNorm::init(c);

  WidthFeatures width{random_tensor({1, 1, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({1, 1, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({2, 2, c}, rng)};
  const Tensor out = transform(width, pe, bev_q, params);

  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      Tensor u({1, c});
      for (std::size_t ch = 0; ch < c; ++ch)
        u[ch] = bev_q.values.at(i, j, ch) + width.data[ch];
      const Tensor expect =
          oracle::layer_norm(oracle::layer_norm(u, params.norm_attn), params.norm_ffn);
      for (std::size_t ch = 0; ch < c; ++ch)
        CHECK(std::fabs(out.at(i, j, ch) - expect[ch]) <= 1e-12);
    }
}

TEST_CASE("transform with zeroed branches is the residual norm chain") {
  Rng rng(502);
  const std::size_t c = 8;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  zero_out(params.attn.wo.weight);
  zero_out(params.attn.wo.bias);
  zero_out(params.ffn.layers.back().weight);
  zero_out(params.ffn.layers.back().bias);
  WidthFeatures width{random_tensor({2, 3, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({2, 3, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({2, 2, c}, rng)};
  const Tensor out = transform(width, pe, bev_q, params);
  const Tensor q = bev_q.values.reshaped({4, c});
  const Tensor expect =
      oracle::layer_norm(oracle::layer_norm(q, params.norm_attn), params.norm_ffn);
  CHECK(max_abs_diff(out.reshaped({4, c}), expect) <= 1e-12);
}

TEST_CASE("transform matches the dense-loop oracle, with and without norms") {
  Rng rng(503);
  const std::size_t c = 8;
  for (bool use_norm : {true, false}) {
    DecoderParams params = DecoderParams::init(rng, c, 2, 16);
    params.use_norm = use_norm;
    WidthFeatures width{random_tensor({2, 6, c}, rng)};
    EncodingSet pe{EncodingKind::Width, random_tensor({2, 6, c}, rng)};
    EncodingSet bev_q{EncodingKind::Bev, random_tensor({4, 4, c}, rng)};
    const Tensor out = transform(width, pe, bev_q, params);
    const Tensor queries = bev_q.values.reshaped({16, c});
    const Tensor values = width.data.reshaped({12, c});
    const Tensor keys = values + pe.values.reshaped({12, c});
    const Tensor expect = oracle::decoder(queries, keys, values, params);
    CHECK(max_abs_diff(out.reshaped({16, c}), expect) <= 1e-9);
  }
}

TEST_CASE("attention is invariant to key order") {
  Rng rng(504);
  const std::size_t c = 8, n = 2, w = 5;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({n, w, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({n, w, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({3, 3, c}, rng)};
  const Tensor base = transform(width, pe, bev_q, params);

  // rotate the flattened key order by 3, features and PEs together
  const std::size_t rows = n * w, shift = 3;
  WidthFeatures width2{Tensor({n, w, c})};
  EncodingSet pe2{EncodingKind::Width, Tensor({n, w, c})};
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t dst = (r + shift) % rows;
    for (std::size_t ch = 0; ch < c; ++ch) {
      width2.data[dst * c + ch] = width.data[r * c + ch];
      pe2.values[dst * c + ch] = pe.values[r * c + ch];
    }
  }
  const Tensor rotated = transform(width2, pe2, bev_q, params);
  CHECK(max_abs_diff(base, rotated) <= 1e-12);
}

TEST_CASE("full-feature oracle degenerates to transform at h == 1") {
  Rng rng(505);
  const std::size_t c = 8, n = 2, w = 5;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  FeatureVolume feat{random_tensor({n, 1, w, c}, rng)};
  const WidthFeatures width = height_maxpool(feat);
  Tensor pe_values = random_tensor({n, w, c}, rng);
  EncodingSet width_pe{EncodingKind::Width, pe_values};
  EncodingSet pixel_pe{EncodingKind::Pixel, pe_values.reshaped({n, 1, w, c})};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({3, 3, c}, rng)};

  const Tensor a = transform(width, width_pe, bev_q, params);
  const Tensor b = transform_full_oracle(feat, pixel_pe, bev_q, params);
  CHECK(bits_equal(a, b));
}

TEST_CASE("full-feature oracle uses h-times more keys and differs in general") {
  Rng rng(506);
  const std::size_t c = 8, n = 2, h = 4, w = 5;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  FeatureVolume feat{random_tensor({n, h, w, c}, rng)};
  const WidthFeatures width = height_maxpool(feat);
  EncodingSet width_pe{EncodingKind::Width, random_tensor({n, w, c}, rng)};
  EncodingSet pixel_pe{EncodingKind::Pixel, random_tensor({n, h, w, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({3, 3, c}, rng)};

  DecoderMacs width_macs, full_macs;
  const Tensor a = transform(width, width_pe, bev_q, params, nullptr, &width_macs);
  const Tensor b = transform_full_oracle(feat, pixel_pe, bev_q, params, &full_macs);
  CHECK(width_macs.kv_count == n * w);
  CHECK(full_macs.kv_count == n * h * w);
  CHECK(full_macs.kv_count == h * width_macs.kv_count);
  CHECK(l2_norm(a - b) / l2_norm(b) > 1e-9);  // compression changes the output
}

TEST_CASE("decoder MAC counters match the closed form") {
  Rng rng(507);
  const std::size_t c = 8, ffn_hidden = 16;
  DecoderParams params = DecoderParams::init(rng, c, 2, ffn_hidden);
  WidthFeatures width{random_tensor({2, 6, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({2, 6, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({4, 4, c}, rng)};
  DecoderMacs macs;
  transform(width, pe, bev_q, params, nullptr, &macs);
  CHECK(macs.total() == decoder_cost(16, 12, c, ffn_hidden));

  // doubling the channel dim scales by the closed-form factor
  const std::size_t c2 = 2 * c;
  DecoderParams params2 = DecoderParams::init(rng, c2, 2, 2 * ffn_hidden);
  WidthFeatures width2{random_tensor({2, 6, c2}, rng)};
  EncodingSet pe2{EncodingKind::Width, random_tensor({2, 6, c2}, rng)};
  EncodingSet bev_q2{EncodingKind::Bev, random_tensor({4, 4, c2}, rng)};
  DecoderMacs macs2;
  transform(width2, pe2, bev_q2, params2, nullptr, &macs2);
  CHECK(macs2.total() == decoder_cost(16, 12, c2, 2 * ffn_hidden));
}

TEST_CASE("transform rejects mismatched inputs") {
  Rng rng(508);
  const std::size_t c = 8;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({2, 3, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({2, 4, c}, rng)};  // w mismatch
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({2, 2, c}, rng)};
  CHECK_THROWS_AS(transform(width, pe, bev_q, params), ShapeError);

  EncodingSet wrong_kind{EncodingKind::Pixel, random_tensor({2, 3, c}, rng)};
  CHECK_THROWS_AS(transform(width, wrong_kind, bev_q, params), ShapeError);
}

TEST_CASE("composed width-pipeline loss gradient is correct") {
  Rng rng(510);
  const std::size_t c = 8;
  RefineParams rparams = RefineParams::init(rng, c, 2, 16);
  DecoderParams dparams = DecoderParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({1, 4, c}, rng)};
  FeatureVolume feat{random_tensor({1, 3, 4, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({1, 4, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({2, 2, c}, rng)};
  Tensor w = random_tensor({2, 2, c}, rng);

  auto loss = [&](const Tensor& width_in) {
    const WidthFeatures refined = refine(WidthFeatures{width_in}, feat, rparams);
    const Tensor out = transform(refined, pe, bev_q, dparams);
    double s = 0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * w[i];
    return s;
  };

  // analytic gradient chains the decoder backward into the refine backward
  RefineCache rcache;
  const WidthFeatures refined = refine(width, feat, rparams, &rcache);
  TransformCache tcache;
  transform(refined, pe, bev_q, dparams, &tcache);
  DecoderGrads dgrads = make_zero_grads(dparams);
  Tensor drefined;
  transform_backward(dparams, tcache, w, dgrads, nullptr, &drefined, nullptr);
  RefineGrads rgrads = make_zero_grads(rparams);
  Tensor dwidth;
  refine_backward(width, feat, rparams, rcache, drefined.reshaped({1, 4, c}), rgrads,
                  &dwidth, nullptr);
  CHECK(grad_check(loss, width.data, dwidth) <= 1e-4);
}

TEST_CASE("transform gradients pass the checker") {
  Rng rng(509);
  const std::size_t c = 8;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({2, 3, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({2, 3, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({2, 2, c}, rng)};
  Tensor w = random_tensor({2, 2, c}, rng);
  TransformCache cache;
  transform(width, pe, bev_q, params, &cache);
  DecoderGrads grads = make_zero_grads(params);
  Tensor dq, dwidth, dpe;
  transform_backward(params, cache, w, grads, &dq, &dwidth, &dpe);

  auto weighted = [&w](const Tensor& t) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
    return s;
  };
  auto f_pe = [&](const Tensor& t) {
    return weighted(transform(width, EncodingSet{EncodingKind::Width, t}, bev_q, params));
  };
  CHECK(grad_check(f_pe, pe.values, dpe.reshaped(pe.values.dims())) <= 1e-4);
  auto f_q = [&](const Tensor& t) {
    return weighted(transform(width, pe, EncodingSet{EncodingKind::Bev, t}, params));
  };
  CHECK(grad_check(f_q, bev_q.values, dq.reshaped(bev_q.values.dims())) <= 1e-4);
  auto f_norm = [&](const Tensor& t) {
    DecoderParams p2 = params;
    p2.norm_ffn.gain = t;
    return weighted(transform(width, pe, bev_q, p2));
  };
  CHECK(grad_check(f_norm, params.norm_ffn.gain, grads.norm_ffn.gain) <= 1e-4);
}
