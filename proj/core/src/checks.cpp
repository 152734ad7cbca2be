#include "bvt/checks.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "bvt/bench.hpp"
#include "bvt/gradcheck.hpp"
#include "bvt/pipeline.hpp"
#include "bvt/sweep.hpp"
#include "bvt/tensor_io.hpp"

namespace bvt {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

Tensor random_tensor(const std::vector<std::size_t>& dims, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(dims);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double weighted_sum(const Tensor& x, const Tensor& w) {
  check_same_dims(x, w, "weighted_sum");
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w[i];
  return s;
}

MhaParams identity_mha(std::size_t c, std::size_t heads) {
  MhaParams p;
  auto eye = [c]() {
    LinearLayer l;
    l.weight = Tensor({c, c});
    for (std::size_t i = 0; i < c; ++i) l.weight.at(i, i) = 1.0;
    l.bias = Tensor({c});
    return l;
  };
  p.wq = eye();
  p.wk = eye();
  p.wv = eye();
  p.wo = eye();
  p.heads = heads;
  return p;
}

// Least-squares slope of ln(y) against ln(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

SceneSpec tiny_scene_spec() {
  SceneSpec spec;
  spec.n_cameras = 2;
  spec.h_i = 4;
  spec.w_i = 6;
  spec.channels = 8;
  spec.depth_bins = 4;
  spec.seed = 7;
  return spec;
}

PipelineConfig tiny_pipeline_cfg() {
  PipelineConfig cfg;
  cfg.h_b = 4;
  cfg.w_b = 4;
  cfg.heads = 2;
  cfg.fourier_bands = 4;
  return cfg;
}

// --------------------------------------------------------------------------
// numeric core

void check_matmul_associativity() {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 2 + (rng.next_u64() % 15), k = 2 + (rng.next_u64() % 15),
                      n = 2 + (rng.next_u64() % 15), q = 2 + (rng.next_u64() % 15);
    Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng),
           c = random_tensor({n, q}, rng);
    const double diff = max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c)));
    require(diff <= 1e-9, "matmul associativity gap " + std::to_string(diff));
  }
}

void check_softmax_normalized() {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({3, 5, 7}, rng, -1e6, 1e6);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      Tensor y = softmax(x, axis);
      require(y.all_finite(), "softmax produced non-finite values");
      // entries can underflow to exactly 0 at this input range
      for (std::size_t i = 0; i < y.size(); ++i)
        require(y[i] >= 0, "softmax produced negative entry");
      // sum over the axis for every slice
      std::size_t outer = 1, inner = 1;
      const std::size_t len = x.dim(axis);
      for (std::size_t i = 0; i < axis; ++i) outer *= x.dim(i);
      for (std::size_t i = axis + 1; i < 3; ++i) inner *= x.dim(i);
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t s = 0; s < inner; ++s) {
          double sum = 0;
          for (std::size_t l = 0; l < len; ++l) sum += y[o * len * inner + l * inner + s];
          require(std::fabs(sum - 1.0) <= 1e-9, "softmax slice sum != 1");
        }
    }
  }
}

void check_mha_uniform_mean() {
  Rng rng(13);
  const std::size_t c = 8, nk = 5, nq = 3;
  MhaParams p = identity_mha(c, 2);
  Tensor key_row = random_tensor({1, c}, rng);
  Tensor keys({nk, c});
  for (std::size_t j = 0; j < nk; ++j)
    for (std::size_t d = 0; d < c; ++d) keys.at(j, d) = key_row.at(std::size_t{0}, d);
  Tensor values = random_tensor({nk, c}, rng);
  Tensor queries = random_tensor({nq, c}, rng);
  Tensor out = mha(queries, keys, values, p);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t d = 0; d < c; ++d) {
      double mean = 0;
      for (std::size_t j = 0; j < nk; ++j) mean += values.at(j, d);
      mean /= static_cast<double>(nk);
      require(std::fabs(out.at(i, d) - mean) <= 1e-12, "uniform attention != value mean");
    }
}

void check_prng_reproducible() {
  Rng a(123, 5), b(123, 5), c(123, 6);
  bool differs = false;
  for (int i = 0; i < 1000; ++i) {
    const std::uint64_t va = a.next_u64();
    require(va == b.next_u64(), "same (seed, stream) diverged");
    if (va != c.next_u64()) differs = true;
  }
  require(differs, "different streams produced identical sequences");
}

// --------------------------------------------------------------------------
// gradient checks, toy dims (c=8, heads=2)

void check_grad_linear() {
  Rng rng(21);
  LinearLayer layer = LinearLayer::init(rng, 5, 8);
  Tensor x = random_tensor({4, 8}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  LinearGrads grads;
  Tensor dx;
  linear_backward(x, layer, w, grads, &dx);
  auto f_w = [&](const Tensor& t) {
    LinearLayer l2 = layer;
    l2.weight = t;
    return weighted_sum(linear_forward(x, l2), w);
  };
  require(grad_check(f_w, layer.weight, grads.weight) <= 1e-4, "linear weight grad");
  auto f_x = [&](const Tensor& t) { return weighted_sum(linear_forward(t, layer), w); };
  require(grad_check(f_x, x, dx) <= 1e-4, "linear input grad");
}

void check_grad_mlp() {
  Rng rng(22);
  Mlp m = Mlp::init(rng, {8, 6, 4});
  Tensor x = random_tensor({3, 8}, rng);
  Tensor w = random_tensor({3, 4}, rng);
  MlpCache cache;
  mlp_forward(m, x, &cache);
  MlpGrads grads = make_zero_grads(m);
  Tensor dx;
  mlp_backward(m, cache, w, grads, &dx);
  auto f = [&](const Tensor& t) {
    Mlp m2 = m;
    m2.layers[0].weight = t;
    return weighted_sum(mlp_forward(m2, x), w);
  };
  require(grad_check(f, m.layers[0].weight, grads.layers[0].weight) <= 1e-4,
          "mlp layer0 weight grad");
  auto f_x = [&](const Tensor& t) { return weighted_sum(mlp_forward(m, t), w); };
  require(grad_check(f_x, x, dx) <= 1e-4, "mlp input grad");
}

void check_grad_layer_norm() {
  Rng rng(23);
  LayerNorm ln = LayerNorm::init(8);
  for (std::size_t i = 0; i < 8; ++i) {
    ln.gain[i] = rng.uniform(0.5, 1.5);
    ln.shift[i] = rng.uniform(-0.5, 0.5);
  }
  Tensor x = random_tensor({4, 8}, rng);
  Tensor w = random_tensor({4, 8}, rng);
  LayerNormCache cache;
  layer_norm(x, ln, &cache);
  LayerNormGrads grads;
  Tensor dx;
  layer_norm_backward(ln, cache, w, grads, &dx);
  auto f_x = [&](const Tensor& t) { return weighted_sum(layer_norm(t, ln), w); };
  require(grad_check(f_x, x, dx) <= 1e-4, "layer norm input grad");
  auto f_g = [&](const Tensor& t) {
    LayerNorm l2 = ln;
    l2.gain = t;
    return weighted_sum(layer_norm(x, l2), w);
  };
  require(grad_check(f_g, ln.gain, grads.gain) <= 1e-4, "layer norm gain grad");
}

void check_grad_mha() {
  Rng rng(24);
  const std::size_t c = 8;
  MhaParams p = MhaParams::init(rng, c, 2);
  Tensor q = random_tensor({3, c}, rng), k = random_tensor({5, c}, rng),
         v = random_tensor({5, c}, rng);
  Tensor w = random_tensor({3, c}, rng);
  MhaCache cache;
  mha(q, k, v, p, &cache);
  MhaGrads grads = make_zero_grads(p);
  Tensor dq, dk, dv;
  mha_backward(q, k, v, p, cache, w, grads, &dq, &dk, &dv);
  auto f_wq = [&](const Tensor& t) {
    MhaParams p2 = p;
    p2.wq.weight = t;
    return weighted_sum(mha(q, k, v, p2), w);
  };
  require(grad_check(f_wq, p.wq.weight, grads.wq.weight) <= 1e-4, "mha wq grad");
  auto f_k = [&](const Tensor& t) { return weighted_sum(mha(q, t, v, p), w); };
  require(grad_check(f_k, k, dk) <= 1e-4, "mha key grad");
}

void check_grad_decoder() {
  Rng rng(25);
  const std::size_t c = 8;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({2, 3, c}, rng)};
  EncodingSet width_pe{EncodingKind::Width, random_tensor({2, 3, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({2, 2, c}, rng)};
  Tensor w = random_tensor({2, 2, c}, rng);
  TransformCache cache;
  transform(width, width_pe, bev_q, params, &cache);
  DecoderGrads grads = make_zero_grads(params);
  Tensor dqueries, dwidth, dpe;
  transform_backward(params, cache, w, grads, &dqueries, &dwidth, &dpe);
  auto f_wq = [&](const Tensor& t) {
    DecoderParams p2 = params;
    p2.attn.wq.weight = t;
    return weighted_sum(transform(width, width_pe, bev_q, p2), w);
  };
  require(grad_check(f_wq, params.attn.wq.weight, grads.attn.wq.weight) <= 1e-4,
          "decoder attention weight grad");
  auto f_ffn = [&](const Tensor& t) {
    DecoderParams p2 = params;
    p2.ffn.layers[0].weight = t;
    return weighted_sum(transform(width, width_pe, bev_q, p2), w);
  };
  require(grad_check(f_ffn, params.ffn.layers[0].weight, grads.ffn.layers[0].weight) <= 1e-4,
          "decoder ffn weight grad");
  auto f_width = [&](const Tensor& t) {
    return weighted_sum(transform(WidthFeatures{t}, width_pe, bev_q, params), w);
  };
  require(grad_check(f_width, width.data, dwidth.reshaped(width.data.dims())) <= 1e-4,
          "decoder width-feature grad");
}

void check_grad_refine() {
  Rng rng(26);
  const std::size_t c = 8;
  RefineParams params = RefineParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({1, 4, c}, rng)};
  FeatureVolume feat{random_tensor({1, 3, 4, c}, rng)};
  Tensor w = random_tensor({1, 4, c}, rng);
  RefineCache cache;
  refine(width, feat, params, &cache);
  RefineGrads grads = make_zero_grads(params);
  Tensor dwidth, dfeat;
  refine_backward(width, feat, params, cache, w, grads, &dwidth, &dfeat);
  auto f_cross = [&](const Tensor& t) {
    RefineParams p2 = params;
    p2.cross_attn.wv.weight = t;
    return weighted_sum(refine(width, feat, p2).data, w);
  };
  require(grad_check(f_cross, params.cross_attn.wv.weight, grads.cross_attn.wv.weight) <=
              1e-4,
          "refine cross-attention grad");
  auto f_feat = [&](const Tensor& t) {
    return weighted_sum(refine(width, FeatureVolume{t}, params).data, w);
  };
  require(grad_check(f_feat, feat.data, dfeat) <= 1e-4, "refine feature grad");
  auto f_width = [&](const Tensor& t) {
    return weighted_sum(refine(WidthFeatures{t}, feat, params).data, w);
  };
  require(grad_check(f_width, width.data, dwidth) <= 1e-4, "refine width grad");
}

void check_grad_aux_head() {
  Rng rng(27);
  const std::size_t c = 8, w_i = 6;
  AuxHeadParams params = AuxHeadParams::init(rng, c, 2, 3, 3, 4, 3);
  WidthFeatures width{random_tensor({1, w_i, c}, rng)};
  const std::vector<WidthTarget> targets{{0, 1, 3, 2, 1, 1}, {0, 4, 5, 0, 2, 2}};
  AuxCache cache;
  AuxLogits logits = aux_forward(width, params, &cache);
  AuxLogits dlogits = aux_loss_backward(logits, targets);
  AuxHeadGrads grads = make_zero_grads(params);
  aux_backward(width, params, cache, dlogits, grads, nullptr);
  auto loss_with_trunk0 = [&](const Tensor& t) {
    AuxHeadParams p2 = params;
    p2.trunk[0].weight = t;
    return aux_loss(aux_forward(width, p2), targets).total;
  };
  require(grad_check(loss_with_trunk0, params.trunk[0].weight, grads.trunk[0].weight) <=
              1e-4,
          "aux trunk grad");
  auto loss_with_depth = [&](const Tensor& t) {
    AuxHeadParams p2 = params;
    p2.depth_branch.weight = t;
    return aux_loss(aux_forward(width, p2), targets).total;
  };
  require(grad_check(loss_with_depth, params.depth_branch.weight,
                     grads.depth_branch.weight) <= 1e-4,
          "aux depth branch grad");
}

// --------------------------------------------------------------------------
// camera geometry

CameraModel random_camera(Rng& rng) {
  CameraModel cam;
  cam.rotation = rotation_z(rng.uniform(-3, 3)) * rotation_x(rng.uniform(-3, 3)) *
                 rotation_y(rng.uniform(-3, 3));
  cam.translation = {rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
  const double f = rng.uniform(20, 60);
  cam.intrinsics.m = {f, 0, rng.uniform(10, 30), 0, f, rng.uniform(10, 30), 0, 0, 1};
  cam.validate_and_cache();
  return cam;
}

void check_camera_roundtrip() {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    CameraModel cam = random_camera(rng);
    const double u = rng.uniform(0, 40), v = rng.uniform(0, 40), d = rng.uniform(0.5, 50);
    DepthBins bins;
    bins.values = {d};
    const Vec3 p = project_to_ego(lift_pixel(u, v, bins)[0], cam);
    // invert: back to pixel coordinates and camera depth
    const Vec3 cam_frame = cam.rotation.transposed() * (p - cam.translation);
    const Vec3 hom = cam.intrinsics * cam_frame;
    require(std::fabs(hom.z - d) <= 1e-9, "camera roundtrip depth mismatch");
    require(std::fabs(hom.x / hom.z - u) <= 1e-9 && std::fabs(hom.y / hom.z - v) <= 1e-9,
            "camera roundtrip pixel mismatch");
  }
}

void check_polar_reconstruct() {
  Rng rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 p{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-5, 5)};
    const PolarCoord c = to_polar(p);
    if (c.d < 1e-9) continue;
    require(std::fabs(c.d * c.cos_theta - p.x) <= 1e-9 &&
                std::fabs(c.d * c.sin_theta - p.y) <= 1e-9 && c.z == p.z,
            "polar reconstruction failed");
    require(std::fabs(c.sin_theta * c.sin_theta + c.cos_theta * c.cos_theta - 1.0) <= 1e-9,
            "sin^2 + cos^2 != 1");
  }
}

void check_polar_singularity() {
  const PolarCoord c = to_polar({0, 0, 2.5});
  require(c.d == 0.0 && c.sin_theta == 0.0 && c.cos_theta == 1.0 && c.z == 2.5,
          "polar singularity convention violated");
}

void check_perturb_identity_at_zero() {
  const Scene scene = gen_scene(tiny_scene_spec());
  Rng rng(33);
  for (PerturbKind kind : {PerturbKind::Rotation, PerturbKind::Translation}) {
    PerturbSpec spec{Axis::Y, kind, 0.0, TranslationFrame::Camera};
    const CameraRig out = perturb_rig(scene.rig, spec, rng);
    for (std::size_t n = 0; n < out.count(); ++n) {
      require(out.cameras[n].rotation.m == scene.rig.cameras[n].rotation.m,
              "sigma=0 changed a rotation");
      require(out.cameras[n].translation.x == scene.rig.cameras[n].translation.x &&
                  out.cameras[n].translation.y == scene.rig.cameras[n].translation.y &&
                  out.cameras[n].translation.z == scene.rig.cameras[n].translation.z,
              "sigma=0 changed a translation");
    }
  }
}

void check_perturb_rotation_orthonormal() {
  const Scene scene = gen_scene(tiny_scene_spec());
  Rng rng(34);
  for (Axis axis : {Axis::X, Axis::Y, Axis::Z}) {
    PerturbSpec spec{axis, PerturbKind::Rotation, 0.3, TranslationFrame::Camera};
    const CameraRig out = perturb_rig(scene.rig, spec, rng);
    for (const auto& cam : out.cameras) {
      const Mat3 rtr = cam.rotation.transposed() * cam.rotation;
      const Mat3 eye = Mat3::identity();
      for (std::size_t i = 0; i < 9; ++i)
        require(std::fabs(rtr.m[i] - eye.m[i]) <= 1e-9, "perturbed rotation lost orthonormality");
    }
  }
}

void check_perturb_z_offset_projection() {
  const Scene scene = gen_scene(tiny_scene_spec());
  Rng rng(35);
  // camera-frame Y offset on a level rig is a pure ego-z offset
  PerturbSpec spec{Axis::Y, PerturbKind::Translation, 0.5, TranslationFrame::Camera};
  const CameraRig perturbed = perturb_rig(scene.rig, spec, rng);
  for (std::size_t n = 0; n < scene.rig.count(); ++n) {
    for (int trial = 0; trial < 10; ++trial) {
      const Vec3 hom{rng.uniform(0, 40), rng.uniform(0, 12), rng.uniform(1, 50)};
      const Vec3 a = project_to_ego(hom, scene.rig.cameras[n]);
      const Vec3 b = project_to_ego(hom, perturbed.cameras[n]);
      require(a.x == b.x && a.y == b.y, "x/y changed under vertical offset");
    }
    require(scene.rig.cameras[n].translation.z != perturbed.cameras[n].translation.z,
            "vertical offset did not move the camera");
  }
}

// --------------------------------------------------------------------------
// positional encoding

struct PeFixture {
  Scene scene = gen_scene(tiny_scene_spec());
  PipelineParams params;
  PeFixture() {
    Rng rng(41);
    params = init_pipeline(scene.spec, tiny_pipeline_cfg(), rng);
  }
};

void check_pe_pixel_shape() {
  PeFixture fx;
  const ReferenceCoefficients coeffs =
      predict_coefficients(fx.scene.features, fx.params.coeff_head);
  Rng rng(42);
  Mlp agg = Mlp::init(rng, {reference_pe_dim(true, fx.params.enc), 8, 8});
  const EncodingSet pe = pixel_refpe(fx.scene.features, fx.scene.rig, fx.scene.bins, coeffs,
                                     agg, true, fx.params.enc);
  require(pe.values.dims() == fx.scene.features.data.dims(),
          "pixel encoding shape != feature shape");
}

void check_pe_width_z_invariance() {
  PeFixture fx;
  const ReferenceCoefficients coeffs =
      predict_coefficients(fx.scene.features, fx.params.coeff_head);
  const HeightDistribution heights =
      predict_height_distribution(fx.scene.features, fx.params.height_head);
  CameraRig shifted = fx.scene.rig;
  for (auto& cam : shifted.cameras) cam.translation.z += 0.7;
  const EncodingSet a = width_refpe(fx.scene.features, fx.scene.rig, fx.scene.bins, coeffs,
                                    heights, fx.params.width_pe_mlp, fx.params.enc);
  const EncodingSet b = width_refpe(fx.scene.features, shifted, fx.scene.bins, coeffs,
                                    heights, fx.params.width_pe_mlp, fx.params.enc);
  require(bits_equal(a.values, b.values), "width encoding not z-invariant");
}

void check_pe_query_pixel_consistency() {
  Rng rng(43);
  FourierEncoder enc{4};
  Mlp shared = Mlp::init(rng, {reference_pe_dim(true, enc), 8, 8});
  // identity camera: the pixel's single reference point is the anchor itself
  CameraModel cam;
  cam.intrinsics = Mat3::identity();
  cam.rotation = Mat3::identity();
  cam.translation = {0, 0, 0};
  cam.validate_and_cache();
  CameraRig rig;
  rig.cameras = {cam};
  rig.names = {"identity"};
  const std::size_t h = 2, w = 3;
  FeatureVolume feat{Tensor({1, h, w, 8})};
  ReferenceCoefficients ones{Tensor::full({1, h, w, 1}, 1.0)};
  for (int trial = 0; trial < 20; ++trial) {
    const double depth = rng.uniform(0.5, 10.0);
    DepthBins bins;
    bins.values = {depth};
    const EncodingSet pe = pixel_refpe(feat, rig, bins, ones, shared, true, enc);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const Vec3 anchor{pixel_u(j) * depth, pixel_v(i) * depth, depth};
        const Tensor q = query_refpe(anchor, shared, enc);
        for (std::size_t ch = 0; ch < q.size(); ++ch)
          require(std::fabs(q[ch] - pe.values.at(std::size_t{0}, i, j, ch)) <= 1e-12,
                  "query/pixel encoding paths disagree");
      }
  }
}

void check_pe_normalization() {
  PeFixture fx;
  const ReferenceCoefficients coeffs =
      predict_coefficients(fx.scene.features, fx.params.coeff_head);
  validate_coefficients(coeffs);
  const HeightDistribution heights =
      predict_height_distribution(fx.scene.features, fx.params.height_head);
  validate_height_distribution(heights);
  // attention rows sum to 1
  Rng rng(44);
  MhaParams p = MhaParams::init(rng, 8, 2);
  Tensor q = random_tensor({3, 8}, rng), k = random_tensor({5, 8}, rng);
  MhaCache cache;
  mha(q, k, k, p, &cache);
  const std::size_t heads = cache.attn.dim(0), nq = cache.attn.dim(1),
                    nk = cache.attn.dim(2);
  for (std::size_t hh = 0; hh < heads; ++hh)
    for (std::size_t i = 0; i < nq; ++i) {
      double sum = 0;
      for (std::size_t j = 0; j < nk; ++j) sum += cache.attn.at(hh, i, j);
      require(std::fabs(sum - 1.0) <= 1e-9, "attention row does not sum to 1");
    }
}

void check_pe_deterministic() {
  PeFixture fx;
  const ReferenceCoefficients coeffs =
      predict_coefficients(fx.scene.features, fx.params.coeff_head);
  const HeightDistribution heights =
      predict_height_distribution(fx.scene.features, fx.params.height_head);
  const EncodingSet a = width_refpe(fx.scene.features, fx.scene.rig, fx.scene.bins, coeffs,
                                    heights, fx.params.width_pe_mlp, fx.params.enc);
  const EncodingSet b = width_refpe(fx.scene.features, fx.scene.rig, fx.scene.bins, coeffs,
                                    heights, fx.params.width_pe_mlp, fx.params.enc);
  require(bits_equal(a.values, b.values), "width encoding not deterministic");
}

// --------------------------------------------------------------------------
// width pipeline

void check_pool_row_duplication() {
  Rng rng(51);
  FeatureVolume feat{random_tensor({2, 3, 4, 5}, rng)};
  const WidthFeatures base = height_maxpool(feat);
  // duplicate row 1: new volume rows are 0,1,1,2
  Tensor dup({2, 4, 4, 5});
  const std::size_t map[4] = {0, 1, 1, 2};
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t c = 0; c < 5; ++c) dup.at(n, i, j, c) = feat.data.at(n, map[i], j, c);
  const WidthFeatures dup_pool = height_maxpool(FeatureVolume{dup});
  require(bits_equal(base.data, dup_pool.data), "max pool changed under row duplication");
}

void check_pool_monotone_commute() {
  Rng rng(52);
  FeatureVolume feat{random_tensor({2, 3, 4, 5}, rng)};
  auto mono = [](double v) { return 3.0 * v + 0.5; };
  Tensor mapped = feat.data;
  for (std::size_t i = 0; i < mapped.size(); ++i) mapped[i] = mono(mapped[i]);
  Tensor pooled_then_mapped = height_maxpool(feat).data;
  for (std::size_t i = 0; i < pooled_then_mapped.size(); ++i)
    pooled_then_mapped[i] = mono(pooled_then_mapped[i]);
  const Tensor mapped_then_pooled = height_maxpool(FeatureVolume{mapped}).data;
  require(bits_equal(pooled_then_mapped, mapped_then_pooled),
          "max pool does not commute with monotone map");
}

void check_refine_camera_isolation() {
  Rng rng(53);
  const std::size_t c = 8;
  RefineParams params = RefineParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({2, 4, c}, rng)};
  FeatureVolume feat{random_tensor({2, 3, 4, c}, rng)};
  const Tensor base = refine(width, feat, params).data;
  // zero out camera 1 everywhere
  WidthFeatures width2 = width;
  FeatureVolume feat2 = feat;
  for (std::size_t i = 4 * c; i < width2.data.size(); ++i) width2.data[i] = 0;
  for (std::size_t i = 3 * 4 * c; i < feat2.data.size(); ++i) feat2.data[i] = 0;
  const Tensor altered = refine(width2, feat2, params).data;
  for (std::size_t i = 0; i < 4 * c; ++i)
    require(base[i] == altered[i], "camera 0 output changed when camera 1 was zeroed");
}

void check_refine_column_locality() {
  Rng rng(54);
  const std::size_t c = 8, w = 5, h = 3;
  RefineParams params = RefineParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({1, w, c}, rng)};
  FeatureVolume feat{random_tensor({1, h, w, c}, rng)};
  const Tensor base = refine(width, feat, params).data;
  FeatureVolume feat2 = feat;
  const std::size_t poked = 2;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) feat2.data.at(std::size_t{0}, i, poked, ch) += 1.0;
  const Tensor altered = refine(width, feat2, params).data;
  for (std::size_t j = 0; j < w; ++j) {
    if (j == poked) continue;
    for (std::size_t ch = 0; ch < c; ++ch)
      require(base.at(std::size_t{0}, j, ch) == altered.at(std::size_t{0}, j, ch),
              "cross attention leaked across columns");
  }
}

void check_refine_cost_scaling() {
  const std::size_t c = 8;
  std::vector<double> ws, self_counts, hs, cross_counts;
  for (std::size_t w : {8, 16, 32, 64}) {
    Rng rng(55);
    RefineParams params = RefineParams::init(rng, c, 2, 16);
    WidthFeatures width{random_tensor({1, w, c}, rng)};
    FeatureVolume feat{random_tensor({1, 16, w, c}, rng)};
    RefineMacs macs;
    refine(width, feat, params, nullptr, &macs);
    const RefineCost cost = refine_cost(w, 16, c);
    require(macs.self.attn == cost.self_macs && macs.cross.attn == cost.cross_macs,
            "measured attention MACs != closed form");
    ws.push_back(static_cast<double>(w));
    self_counts.push_back(static_cast<double>(macs.self.attn));
  }
  for (std::size_t h : {8, 16, 32, 64}) {
    Rng rng(56);
    RefineParams params = RefineParams::init(rng, c, 2, 16);
    WidthFeatures width{random_tensor({1, 16, c}, rng)};
    FeatureVolume feat{random_tensor({1, h, 16, c}, rng)};
    RefineMacs macs;
    refine(width, feat, params, nullptr, &macs);
    hs.push_back(static_cast<double>(h));
    cross_counts.push_back(static_cast<double>(macs.cross.attn));
  }
  const double self_slope = loglog_slope(ws, self_counts);
  const double cross_slope = loglog_slope(hs, cross_counts);
  require(std::fabs(self_slope - 2.0) <= 0.1, "self-attention cost not quadratic in w");
  require(std::fabs(cross_slope - 1.0) <= 0.05, "cross-attention cost not linear in h");
}

// --------------------------------------------------------------------------
// decoder

void check_decoder_kv_ratio() {
  PeFixture fx;
  const FeaturePathCache cache = run_feature_path(fx.scene, fx.params);
  EncodingSet width_pe = width_refpe(fx.scene.features, fx.scene.rig, fx.scene.bins,
                                     cache.coeffs, cache.heights, fx.params.width_pe_mlp,
                                     fx.params.enc);
  DecoderMacs width_macs;
  transform(cache.width, width_pe, cache.bev_queries, fx.params.decoder, nullptr,
            &width_macs);
  const EncodingSet pixel_pe =
      pixel_refpe(fx.scene.features, fx.scene.rig, fx.scene.bins, cache.coeffs,
                  fx.params.width_pe_mlp, false, fx.params.enc);
  DecoderMacs full_macs;
  transform_full_oracle(fx.scene.features, pixel_pe, cache.bev_queries, fx.params.decoder,
                        &full_macs);
  require(full_macs.kv_count == width_macs.kv_count * fx.scene.spec.h_i,
          "key/value cardinality ratio != h_i");
}

void check_decoder_key_permutation() {
  Rng rng(61);
  const std::size_t c = 8, n = 2, w = 5;
  DecoderParams params = DecoderParams::init(rng, c, 2, 16);
  WidthFeatures width{random_tensor({n, w, c}, rng)};
  EncodingSet pe{EncodingKind::Width, random_tensor({n, w, c}, rng)};
  EncodingSet bev_q{EncodingKind::Bev, random_tensor({3, 3, c}, rng)};
  const Tensor base = transform(width, pe, bev_q, params);
  // reverse the flattened key order, applied to features and PEs identically
  WidthFeatures width2{Tensor({n, w, c})};
  EncodingSet pe2{EncodingKind::Width, Tensor({n, w, c})};
  const std::size_t rows = n * w;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t ch = 0; ch < c; ++ch) {
      width2.data[(rows - 1 - r) * c + ch] = width.data[r * c + ch];
      pe2.values[(rows - 1 - r) * c + ch] = pe.values[r * c + ch];
    }
  const Tensor permuted = transform(width2, pe2, bev_q, params);
  require(max_abs_diff(base, permuted) <= 1e-12, "attention depends on key order");
}

void check_decoder_z_invariance() {
  PeFixture fx;
  const FeaturePathCache cache = run_feature_path(fx.scene, fx.params);
  const Tensor clean = bev_from_geometry(fx.scene.rig, fx.scene, cache, fx.params);
  Rng rng(62);
  PerturbSpec spec{Axis::Y, PerturbKind::Translation, 0.4, TranslationFrame::Camera};
  const CameraRig perturbed = perturb_rig(fx.scene.rig, spec, rng);
  const Tensor shifted = bev_from_geometry(perturbed, fx.scene, cache, fx.params);
  require(bits_equal(clean, shifted), "BEV features changed under a pure-z perturbation");
}

void check_decoder_determinism() {
  const SceneSpec spec = tiny_scene_spec();
  const PipelineConfig cfg = tiny_pipeline_cfg();
  Rng rng_a(63), rng_b(63);
  const Scene scene_a = gen_scene(spec), scene_b = gen_scene(spec);
  const PipelineParams params_a = init_pipeline(spec, cfg, rng_a);
  const PipelineParams params_b = init_pipeline(spec, cfg, rng_b);
  require(bits_equal(run_pipeline(scene_a, params_a), run_pipeline(scene_b, params_b)),
          "pipeline output differs across identically seeded runs");
}

void check_decoder_full_oracle_gap() {
  PeFixture fx;
  const double gap = compression_gap(fx.scene, fx.params);
  require(std::isfinite(gap) && gap > 1e-12, "width compression shows no gap to the oracle");
}

// --------------------------------------------------------------------------
// aux head

void check_aux_loss_nonnegative() {
  Rng rng(71);
  AuxHeadParams params = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 3);
  WidthFeatures width{random_tensor({1, 6, 8}, rng)};
  const std::vector<WidthTarget> targets{{0, 1, 3, 2, 1, 1}};
  const AuxLossBreakdown loss = aux_loss(aux_forward(width, params), targets);
  require(loss.total >= 0 && loss.cls >= 0 && loss.depth >= 0 && loss.height >= 0,
          "negative loss");
  // saturated-correct logits drive the loss to zero
  AuxLogits perfect;
  perfect.cls = Tensor({1, 6, 3});
  perfect.depth = Tensor({1, 6, 4});
  perfect.height = Tensor({1, 6, 3});
  const double big = 60.0;
  for (std::size_t j = 0; j < 6; ++j) {
    const bool inside = (j >= 1 && j <= 3);
    perfect.cls.at(std::size_t{0}, j, inside ? std::size_t{1} : std::size_t{0}) = big;
    perfect.depth.at(std::size_t{0}, j, std::size_t{2}) = big;
    perfect.height.at(std::size_t{0}, j, std::size_t{1}) = big;
  }
  require(aux_loss(perfect, targets).total <= 1e-9, "saturated-correct loss not ~0");
}

void check_aux_removability() {
  const Scene scene = gen_scene(tiny_scene_spec());
  Rng rng(72);
  PipelineParams params = init_pipeline(scene.spec, tiny_pipeline_cfg(), rng);
  AuxHeadParams head = AuxHeadParams::init(rng, scene.spec.channels, 2, 3, 3,
                                           scene.spec.depth_bins, scene.spec.h_i);
  require(removability_check(scene, params, head), "aux head is not removable");
  // still removable after head-only training
  const FeaturePathCache cache = run_feature_path(scene, params);
  const std::vector<WidthTarget> targets{{0, 1, 3, 1, 2, 1}};
  train_aux_head(head, cache.width, targets, 1, 0.05);
  require(removability_check(scene, params, head),
          "aux head stopped being removable after training");
}

void check_aux_training_progress() {
  Rng rng(73);
  AuxHeadParams head = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 4);
  WidthFeatures width{random_tensor({1, 8, 8}, rng)};
  const std::vector<WidthTarget> targets{{0, 1, 3, 2, 1, 1}, {0, 5, 6, 0, 3, 2}};
  const AuxTrainStats stats = train_aux_head(head, width, targets, 200, 0.1);
  require(stats.final_loss <= 0.5 * stats.initial_loss,
          "200 training steps did not halve the loss");
}

// --------------------------------------------------------------------------
// harness

void check_sweep_zero_sigma() {
  const Scene scene = gen_scene(tiny_scene_spec());
  Rng rng(81);
  const PipelineParams params = init_pipeline(scene.spec, tiny_pipeline_cfg(), rng);
  SweepRequest req;
  req.kinds = {PerturbKind::Rotation};
  req.axes = {Axis::Y};
  req.sigmas = {0.0, 0.05};
  req.trials = 2;
  const auto rows = run_sweep(scene, params, req, 9);
  require(rows[0].sigma == 0.0 && rows[0].drift_mean == 0.0 && rows[0].drift_std == 0.0,
          "sigma=0 produced nonzero drift");
  require(rows[1].drift_mean > 0.0, "rotation produced zero drift");
}

void check_sweep_z_series() {
  const Scene scene = gen_scene(tiny_scene_spec());
  Rng rng(82);
  const PipelineParams params = init_pipeline(scene.spec, tiny_pipeline_cfg(), rng);
  SweepRequest req;
  req.kinds = {PerturbKind::Translation};
  req.axes = {Axis::Y};  // vertical in the ego frame for the level ring rig
  req.sigmas = {0.0, 0.05, 0.2};
  req.trials = 2;
  const auto rows = run_sweep(scene, params, req, 9);
  for (const auto& r : rows)
    require(r.drift_mean == 0.0 && r.drift_std == 0.0,
            "height-only perturbation produced drift");
}

void check_bench_mac_reproducible() {
  const std::vector<BenchSize> sizes{{4, 6, 8, 4}};
  const BenchResult a = run_bench(sizes, 3, 5);
  const BenchResult b = run_bench(sizes, 3, 5);
  require(a.rows.size() == b.rows.size(), "bench row count differs");
  for (std::size_t i = 0; i < a.rows.size(); ++i)
    require(a.rows[i].macs == b.rows[i].macs, "MAC counts differ between runs");
}

}  // namespace

std::vector<Check> default_checks() {
  return {
      {"matmul.associativity", check_matmul_associativity},
      {"softmax.normalized", check_softmax_normalized},
      {"mha.uniform-mean", check_mha_uniform_mean},
      {"prng.reproducible", check_prng_reproducible},
      {"grad.linear", check_grad_linear},
      {"grad.mlp", check_grad_mlp},
      {"grad.layer-norm", check_grad_layer_norm},
      {"grad.mha", check_grad_mha},
      {"grad.decoder", check_grad_decoder},
      {"grad.refine", check_grad_refine},
      {"grad.aux-head", check_grad_aux_head},
      {"camera.roundtrip", check_camera_roundtrip},
      {"polar.reconstruct", check_polar_reconstruct},
      {"polar.singularity", check_polar_singularity},
      {"perturb.identity-at-zero", check_perturb_identity_at_zero},
      {"perturb.rotation-orthonormal", check_perturb_rotation_orthonormal},
      {"perturb.z-offset-projection", check_perturb_z_offset_projection},
      {"pe.pixel-shape", check_pe_pixel_shape},
      {"pe.width-z-invariance", check_pe_width_z_invariance},
      {"pe.query-pixel-consistency", check_pe_query_pixel_consistency},
      {"pe.normalization", check_pe_normalization},
      {"pe.deterministic", check_pe_deterministic},
      {"pool.row-duplication", check_pool_row_duplication},
      {"pool.monotone-commute", check_pool_monotone_commute},
      {"refine.camera-isolation", check_refine_camera_isolation},
      {"refine.column-locality", check_refine_column_locality},
      {"refine.cost-scaling", check_refine_cost_scaling},
      {"decoder.kv-ratio", check_decoder_kv_ratio},
      {"decoder.key-permutation", check_decoder_key_permutation},
      {"decoder.z-invariance", check_decoder_z_invariance},
      {"decoder.determinism", check_decoder_determinism},
      {"decoder.full-oracle-gap", check_decoder_full_oracle_gap},
      {"aux.loss-nonnegative", check_aux_loss_nonnegative},
      {"aux.removability", check_aux_removability},
      {"aux.training-progress", check_aux_training_progress},
      {"sweep.zero-sigma", check_sweep_zero_sigma},
      {"sweep.z-series", check_sweep_z_series},
      {"bench.mac-reproducible", check_bench_mac_reproducible},
  };
}

bool glob_match(const std::string& pattern, const std::string& name) {
  if (pattern.empty()) return true;
  std::size_t p = 0, n = 0;
  std::size_t star = std::string::npos, star_n = 0;
  while (n < name.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == name[n])) {
      ++p;
      ++n;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      star_n = n;
    } else if (star != std::string::npos) {
      p = star + 1;
      n = ++star_n;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

CheckReport run_checks(const std::vector<Check>& checks, const std::string& filter,
                       std::ostream& log) {
  CheckReport report;
  for (const auto& check : checks) {
    if (!glob_match(filter, check.name)) continue;
    CheckOutcome outcome;
    outcome.name = check.name;
    try {
      check.run();
      outcome.passed = true;
      ++report.passed;
      log << "[PASS] " << check.name << "\n";
    } catch (const std::exception& e) {
      outcome.passed = false;
      outcome.message = e.what();
      ++report.failed;
      log << "[FAIL] " << check.name << ": " << e.what() << "\n";
    }
    report.outcomes.push_back(std::move(outcome));
  }
  log << report.passed << " passed, " << report.failed << " failed\n";
  return report;
}

}  // namespace bvt
