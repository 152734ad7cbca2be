#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <filesystem>
#include <fstream>

#include "bvt/auxhead.hpp"
#include "bvt/gradcheck.hpp"
#include "bvt/pipeline.hpp"
#include "doctest.h"

using namespace bvt;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& dims, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(dims);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Independent cross-entropy: -log softmax[target], no shared code with the
// library's loss path.
double ce_by_hand(const std::vector<double>& logits, std::size_t target) {
  double sum = 0;
  for (double l : logits) sum += std::exp(l);
  return -std::log(std::exp(logits[target]) / sum);
}

}  // namespace

TEST_CASE("conv1d zero weights give zero logits and uniform softmax") {
  Rng rng(601);
  AuxHeadParams params = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 3);
  for (auto& conv : params.trunk) {
    for (std::size_t i = 0; i < conv.weight.size(); ++i) conv.weight[i] = 0;
    for (std::size_t i = 0; i < conv.bias.size(); ++i) conv.bias[i] = 0;
  }
  for (Conv1d* branch : {&params.cls_branch, &params.depth_branch, &params.height_branch}) {
    for (std::size_t i = 0; i < branch->weight.size(); ++i) branch->weight[i] = 0;
    for (std::size_t i = 0; i < branch->bias.size(); ++i) branch->bias[i] = 0;
  }
  WidthFeatures width{random_tensor({1, 6, 8}, rng)};
  const AuxLogits logits = aux_forward(width, params);
  for (std::size_t i = 0; i < logits.cls.size(); ++i) CHECK(logits.cls[i] == 0.0);
  const Tensor sm = softmax(logits.depth, 2);
  for (std::size_t i = 0; i < sm.size(); ++i)
    CHECK(sm[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("kernel-1 trunk keeps columns independent") {
  Rng rng(602);
  AuxHeadParams params = AuxHeadParams::init(rng, 8, 2, 1, 3, 4, 3);
  WidthFeatures width{random_tensor({1, 6, 8}, rng)};
  const AuxLogits base = aux_forward(width, params);
  WidthFeatures poked = width;
  for (std::size_t ch = 0; ch < 8; ++ch)
    poked.data.at(std::size_t{0}, std::size_t{2}, ch) += 1.5;
  const AuxLogits after = aux_forward(poked, params);
  for (std::size_t j = 0; j < 6; ++j) {
    if (j == 2) continue;
    for (std::size_t k = 0; k < 3; ++k)
      CHECK(base.cls.at(std::size_t{0}, j, k) == after.cls.at(std::size_t{0}, j, k));
  }
}

TEST_CASE("kernel-3 impulse response spreads one column per layer") {
  Rng rng(603);
  const std::size_t w = 9;
  for (std::size_t layers : {1u, 2u}) {
    AuxHeadParams params = AuxHeadParams::init(rng, 4, layers, 3, 3, 4, 3);
    // remove biases so zero input gives exactly zero logits
    for (auto& conv : params.trunk)
      for (std::size_t i = 0; i < conv.bias.size(); ++i) conv.bias[i] = 0;
    for (Conv1d* b : {&params.cls_branch, &params.depth_branch, &params.height_branch})
      for (std::size_t i = 0; i < b->bias.size(); ++i) b->bias[i] = 0;

    WidthFeatures impulse{Tensor({1, w, 4})};
    const std::size_t center = 4;
    for (std::size_t ch = 0; ch < 4; ++ch)
      impulse.data.at(std::size_t{0}, center, ch) = 1.0;
    const AuxLogits out = aux_forward(impulse, params);
    for (std::size_t j = 0; j < w; ++j) {
      const bool reachable =
          j + layers >= center && j <= center + layers;  // |j - center| <= layers
      bool nonzero = false;
      for (std::size_t k = 0; k < 3; ++k)
        if (out.cls.at(std::size_t{0}, j, k) != 0.0) nonzero = true;
      if (!reachable) CHECK(!nonzero);
    }
  }
}

TEST_CASE("aux_loss with no targets is background-only") {
  Rng rng(604);
  AuxHeadParams params = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 3);
  WidthFeatures width{random_tensor({2, 6, 8}, rng)};
  const AuxLossBreakdown loss = aux_loss(aux_forward(width, params), {});
  CHECK(loss.depth == 0.0);
  CHECK(loss.height == 0.0);
  CHECK(loss.cls > 0.0);
  CHECK(loss.total == loss.cls);
  CHECK(loss.positive_columns == 0);
}

TEST_CASE("saturated-correct logits drive the loss to zero") {
  const std::vector<WidthTarget> targets{{0, 2, 3, 1, 2, 1}};
  for (double mag : {10.0, 30.0, 90.0}) {
    AuxLogits logits;
    logits.cls = Tensor({1, 6, 3});
    logits.depth = Tensor({1, 6, 4});
    logits.height = Tensor({1, 6, 3});
    for (std::size_t j = 0; j < 6; ++j) {
      const bool inside = (j >= 2 && j <= 3);
      logits.cls.at(std::size_t{0}, j, inside ? std::size_t{1} : std::size_t{0}) = mag;
      logits.depth.at(std::size_t{0}, j, std::size_t{1}) = mag;
      logits.height.at(std::size_t{0}, j, std::size_t{2}) = mag;
    }
    const double total = aux_loss(logits, targets).total;
    CHECK(total >= 0.0);
    // CE limit: each branch contributes at most (K-1) e^{-mag}
    CHECK(total <= 10 * std::exp(-mag) + 1e-12);
  }
}

TEST_CASE("aux_loss matches a hand-rolled cross-entropy sum") {
  Rng rng(605);
  const std::size_t w = 6;
  AuxHeadParams params = AuxHeadParams::init(rng, 8, 1, 3, 3, 4, 5);
  WidthFeatures width{random_tensor({1, w, 8}, rng)};
  const AuxLogits logits = aux_forward(width, params);
  const std::vector<WidthTarget> targets{{0, 1, 2, 3, 4, 2}};  // spans columns 1..2
  const AuxLossBreakdown got = aux_loss(logits, targets);

  auto row = [](const Tensor& t, std::size_t j) {
    std::vector<double> v(t.dim(2));
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = t.at(std::size_t{0}, j, k);
    return v;
  };
  double cls = 0, depth = 0, height = 0;
  for (std::size_t j = 0; j < w; ++j) {
    const bool inside = (j == 1 || j == 2);
    cls += ce_by_hand(row(logits.cls, j), inside ? 2 : 0);
    if (inside) {
      depth += ce_by_hand(row(logits.depth, j), 3);
      height += ce_by_hand(row(logits.height, j), 4);
    }
  }
  CHECK(std::fabs(got.cls - cls / w) <= 1e-12);
  CHECK(std::fabs(got.depth - depth / 2) <= 1e-12);
  CHECK(std::fabs(got.height - height / 2) <= 1e-12);
  CHECK(got.positive_columns == 2);
}

TEST_CASE("overlapping spans resolve to the nearest center") {
  // target 0 spans 0..4 (center 2), target 1 spans 3..7 (center 5);
  // column 4 is closer to center 5, column 3 ties and goes to index 0
  const std::vector<WidthTarget> targets{{0, 0, 4, 0, 0, 1}, {0, 3, 7, 1, 0, 1}};
  AuxLogits logits;
  logits.cls = Tensor({1, 8, 2});
  logits.depth = Tensor({1, 8, 2});
  logits.height = Tensor({1, 8, 1});
  const double mag = 200.0;
  // depth logits encode each column's expected owner: bin 0 for target 0
  const std::size_t owner_bin[8] = {0, 0, 0, 0, 1, 1, 1, 1};
  for (std::size_t j = 0; j < 8; ++j) {
    logits.cls.at(std::size_t{0}, j, std::size_t{1}) = mag;
    logits.depth.at(std::size_t{0}, j, owner_bin[j]) = mag;
  }
  CHECK(aux_loss(logits, targets).depth <= 1e-9);

  // flipping column 3's bin to target 1 must now be penalized
  AuxLogits wrong = logits;
  wrong.depth.at(std::size_t{0}, std::size_t{3}, std::size_t{0}) = 0;
  wrong.depth.at(std::size_t{0}, std::size_t{3}, std::size_t{1}) = mag;
  CHECK(aux_loss(wrong, targets).depth > 1.0);
}

TEST_CASE("aux_loss validates targets") {
  AuxLogits logits;
  logits.cls = Tensor({1, 4, 3});
  logits.depth = Tensor({1, 4, 2});
  logits.height = Tensor({1, 4, 2});
  CHECK_THROWS_AS(aux_loss(logits, std::vector<WidthTarget>{{0, 2, 5, 0, 0, 1}}),
                  ConfigError);  // span past w
  CHECK_THROWS_AS(aux_loss(logits, std::vector<WidthTarget>{{0, 1, 2, 0, 0, 0}}),
                  ConfigError);  // background class
  CHECK_THROWS_AS(aux_loss(logits, std::vector<WidthTarget>{{3, 1, 2, 0, 0, 1}}),
                  ConfigError);  // camera out of range
}

TEST_CASE("aux gradients pass the checker") {
  Rng rng(606);
  AuxHeadParams params = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 3);
  WidthFeatures width{random_tensor({1, 6, 8}, rng)};
  const std::vector<WidthTarget> targets{{0, 1, 3, 2, 1, 1}, {0, 4, 5, 0, 2, 2}};
  AuxCache cache;
  const AuxLogits logits = aux_forward(width, params, &cache);
  const AuxLogits dlogits = aux_loss_backward(logits, targets);
  AuxHeadGrads grads = make_zero_grads(params);
  Tensor dwidth;
  aux_backward(width, params, cache, dlogits, grads, &dwidth);

  auto loss_of = [&](AuxHeadParams& p) {
    return aux_loss(aux_forward(width, p), targets).total;
  };
  auto f_trunk = [&](const Tensor& t) {
    AuxHeadParams p2 = params;
    p2.trunk[1].weight = t;
    return loss_of(p2);
  };
  CHECK(grad_check(f_trunk, params.trunk[1].weight, grads.trunk[1].weight) <= 1e-4);
  auto f_cls = [&](const Tensor& t) {
    AuxHeadParams p2 = params;
    p2.cls_branch.weight = t;
    return loss_of(p2);
  };
  CHECK(grad_check(f_cls, params.cls_branch.weight, grads.cls_branch.weight) <= 1e-4);
  auto f_height = [&](const Tensor& t) {
    AuxHeadParams p2 = params;
    p2.height_branch.bias = t;
    return loss_of(p2);
  };
  CHECK(grad_check(f_height, params.height_branch.bias, grads.height_branch.bias) <= 1e-4);
  auto f_width = [&](const Tensor& t) {
    return aux_loss(aux_forward(WidthFeatures{t}, params), targets).total;
  };
  CHECK(grad_check(f_width, width.data, dwidth) <= 1e-4);
}

TEST_CASE("toy training halves the loss and stays removable") {
  const SceneSpec spec{.n_cameras = 1, .h_i = 4, .w_i = 8, .channels = 8, .depth_bins = 4,
                       .seed = 11};
  const Scene scene = gen_scene(spec);
  Rng rng(607);
  PipelineConfig cfg;
  cfg.h_b = cfg.w_b = 4;
  cfg.heads = 2;
  cfg.fourier_bands = 4;
  PipelineParams params = init_pipeline(spec, cfg, rng);
  AuxHeadParams head = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 4);

  const FeaturePathCache cache = run_feature_path(scene, params);
  const std::vector<WidthTarget> targets{{0, 1, 3, 2, 1, 1}, {0, 5, 6, 0, 3, 2}};

  CHECK(removability_check(scene, params, head));
  const Tensor before = run_pipeline(scene, params);
  const AuxTrainStats stats = train_aux_head(head, cache.width, targets, 200, 0.1);
  CHECK(stats.final_loss <= 0.5 * stats.initial_loss);
  CHECK(stats.final_loss >= 0.0);
  const Tensor after = run_pipeline(scene, params);
  CHECK(bits_equal(before, after));
  CHECK(removability_check(scene, params, head));
}

TEST_CASE("wiring the head into the decoder input is detectable") {
  const SceneSpec spec{.n_cameras = 1, .h_i = 4, .w_i = 8, .channels = 8, .depth_bins = 4,
                       .seed = 12};
  const Scene scene = gen_scene(spec);
  Rng rng(608);
  PipelineConfig cfg;
  cfg.h_b = cfg.w_b = 4;
  cfg.heads = 2;
  cfg.fourier_bands = 4;
  const PipelineParams params = init_pipeline(spec, cfg, rng);
  AuxHeadParams head = AuxHeadParams::init(rng, 8, 2, 3, 3, 4, 4);

  FeaturePathCache cache = run_feature_path(scene, params);
  const Tensor clean = bev_from_geometry(scene.rig, scene, cache, params);

  // mis-wired variant: class logits leak into the decoder's width features
  const AuxLogits logits = aux_forward(cache.width, head);
  FeaturePathCache tampered = cache;
  for (std::size_t n = 0; n < 1; ++n)
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t ch = 0; ch < 8; ++ch)
        tampered.width.data.at(n, j, ch) +=
            logits.cls.at(n, j, ch % logits.cls.dim(2));
  const Tensor leaked = bev_from_geometry(scene.rig, scene, tampered, params);
  CHECK(!bits_equal(clean, leaked));
}

TEST_CASE("targets load from json and reject malformed entries") {
  const auto path = std::filesystem::temp_directory_path() / "bvt_targets.json";
  {
    std::ofstream f(path);
    f << R"([{"camera":0,"span":[1,3],"depth_bin":2,"height_row":1,"class":1},)"
      << R"({"camera":1,"span":[4,5],"depth_bin":0,"height_row":2,"class":3}])";
  }
  const auto targets = load_targets_json(path.string());
  REQUIRE(targets.size() == 2);
  CHECK(targets[0].camera == 0);
  CHECK(targets[0].lo == 1);
  CHECK(targets[0].hi == 3);
  CHECK(targets[1].class_id == 3);
  std::filesystem::remove(path);

  const auto bad = std::filesystem::temp_directory_path() / "bvt_targets_bad.json";
  {
    std::ofstream f(bad);
    f << R"([{"camera":0,"span":[3,1],"depth_bin":0,"height_row":0,"class":1}])";
  }
  CHECK_THROWS_AS(load_targets_json(bad.string()), ConfigError);
  std::filesystem::remove(bad);
}
