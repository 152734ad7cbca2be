#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>
#include <sstream>

#include "bvt/bench.hpp"
#include "bvt/checks.hpp"
#include "bvt/pipeline.hpp"
#include "bvt/sweep.hpp"
#include "doctest.h"

using namespace bvt;

namespace {

SceneSpec small_spec() {
  SceneSpec spec;
  spec.n_cameras = 2;
  spec.h_i = 4;
  spec.w_i = 6;
  spec.channels = 8;
  spec.depth_bins = 4;
  spec.seed = 17;
  return spec;
}

PipelineConfig small_cfg() {
  PipelineConfig cfg;
  cfg.h_b = cfg.w_b = 4;
  cfg.heads = 2;
  cfg.fourier_bands = 4;
  return cfg;
}

}  // namespace

TEST_CASE("gen_scene is deterministic and builds the ring geometry") {
  SceneSpec spec;
  spec.n_cameras = 6;
  spec.h_i = 4;
  spec.w_i = 8;
  spec.channels = 4;
  const Scene a = gen_scene(spec), b = gen_scene(spec);
  CHECK(bits_equal(a.features.data, b.features.data));
  for (std::size_t n = 0; n < 6; ++n)
    CHECK(a.rig.cameras[n].rotation.m == b.rig.cameras[n].rotation.m);

  // yaw spacing exactly 60 degrees: consecutive forward vectors
  for (std::size_t n = 0; n < 6; ++n) {
    const auto& r0 = a.rig.cameras[n].rotation;
    const auto& r1 = a.rig.cameras[(n + 1) % 6].rotation;
    // forward = third column
    const double dot = r0.at(0, 2) * r1.at(0, 2) + r0.at(1, 2) * r1.at(1, 2) +
                       r0.at(2, 2) * r1.at(2, 2);
    CHECK(std::fabs(dot - 0.5) <= 1e-12);  // cos 60
  }
  for (const auto& cam : a.rig.cameras) {
    const Mat3 rtr = cam.rotation.transposed() * cam.rotation;
    const Mat3 eye = Mat3::identity();
    for (std::size_t i = 0; i < 9; ++i) CHECK(std::fabs(rtr.m[i] - eye.m[i]) <= 1e-12);
    // level camera: down axis is exactly ego -z
    CHECK(cam.rotation.at(0, 1) == 0.0);
    CHECK(cam.rotation.at(1, 1) == 0.0);
    CHECK(cam.rotation.at(2, 1) == -1.0);
  }
  CHECK_THROWS_AS(gen_scene(SceneSpec{.n_cameras = 0}), ConfigError);
}

TEST_CASE("pipeline stage MAC counters are filled and reproducible") {
  const Scene scene = gen_scene(small_spec());
  Rng rng(701);
  const PipelineParams params = init_pipeline(scene.spec, small_cfg(), rng);
  StageMacs a, b;
  const Tensor out1 = run_pipeline(scene, params, &a);
  const Tensor out2 = run_pipeline(scene, params, &b);
  CHECK(bits_equal(out1, out2));
  CHECK(a.pool == 0);
  CHECK(a.refine > 0);
  CHECK(a.pe > 0);
  CHECK(a.decoder > 0);
  CHECK(a.refine == b.refine);
  CHECK(a.pe == b.pe);
  CHECK(a.decoder == b.decoder);
  CHECK(a.decoder_kv == scene.spec.n_cameras * scene.spec.w_i);
  CHECK(out1.dims() == std::vector<std::size_t>{4, 4, 8});
}

TEST_CASE("run_sweep: zero sigma and the vertical series have exactly zero drift") {
  const Scene scene = gen_scene(small_spec());
  Rng rng(702);
  const PipelineParams params = init_pipeline(scene.spec, small_cfg(), rng);

  SweepRequest req;
  req.kinds = {PerturbKind::Translation};
  req.axes = {Axis::Y};
  req.sigmas = {0.0, 0.05, 0.2};
  req.trials = 3;
  const auto rows = run_sweep(scene, params, req, 19);
  REQUIRE(rows.size() == 3);
  for (const auto& r : rows) {
    CHECK(r.drift_mean == 0.0);
    CHECK(r.drift_std == 0.0);
    CHECK(r.trials == 3);
  }

  SweepRequest rot;
  rot.kinds = {PerturbKind::Rotation};
  rot.axes = {Axis::Y};
  rot.sigmas = {0.05, 0.0};  // delivered ascending regardless of input order
  rot.trials = 2;
  const auto rrows = run_sweep(scene, params, rot, 19);
  CHECK(rrows[0].sigma == 0.0);
  CHECK(rrows[0].drift_mean == 0.0);
  CHECK(rrows[1].sigma == 0.05);
  CHECK(rrows[1].drift_mean > 0.0);
}

TEST_CASE("sweep csv output is byte-stable across runs") {
  const Scene scene = gen_scene(small_spec());
  Rng rng(703);
  const PipelineParams params = init_pipeline(scene.spec, small_cfg(), rng);
  SweepRequest req;
  req.kinds = {PerturbKind::Rotation};
  req.axes = {Axis::X, Axis::Y};
  req.sigmas = {0.0, 0.1};
  req.trials = 2;
  std::ostringstream a, b;
  write_sweep_csv(a, run_sweep(scene, params, req, 23));
  write_sweep_csv(b, run_sweep(scene, params, req, 23));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("kind,axis,sigma,drift_mean,drift_std,trials\n", 0) == 0);
  // different seed, different drift column
  std::ostringstream c;
  write_sweep_csv(c, run_sweep(scene, params, req, 24));
  CHECK(a.str() != c.str());
}

TEST_CASE("run_bench reports stages, kv ratio and deterministic MACs") {
  const std::vector<BenchSize> sizes{{4, 6, 8, 4}};
  const BenchResult a = run_bench(sizes, 3, 29);
  REQUIRE(a.rows.size() == 5);  // pool, refine, pe, decoder, decoder_full
  CHECK(a.rows[0].stage == "pool");
  CHECK(a.rows[0].macs == 0);
  CHECK(a.rows[3].stage == "decoder");
  CHECK(a.rows[4].stage == "decoder_full");
  REQUIRE(a.kv.size() == 1);
  CHECK(a.kv[0].full_kv == a.kv[0].width_kv * sizes[0].h_i);

  const BenchResult b = run_bench(sizes, 3, 29);
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].macs == b.rows[i].macs);

  std::ostringstream csv;
  write_bench_csv(csv, a);
  CHECK(csv.str().rfind("stage,h_i,w_i,c,h_b,macs,ms_median\n", 0) == 0);

  CHECK_THROWS_AS(run_bench(sizes, 2, 29), ConfigError);
  CHECK_THROWS_AS(run_bench({}, 3, 29), ConfigError);
}

TEST_CASE("bench size tokens parse") {
  const BenchSize s = parse_bench_size("16x44x64x32");
  CHECK(s.h_i == 16);
  CHECK(s.w_i == 44);
  CHECK(s.c == 64);
  CHECK(s.h_b == 32);
  CHECK_THROWS_AS(parse_bench_size("16x44x64"), ConfigError);
  CHECK_THROWS_AS(parse_bench_size("16x44xZx32"), ConfigError);
  CHECK(default_bench_sizes().size() == 4);
}

TEST_CASE("glob matching") {
  CHECK(glob_match("", "anything"));
  CHECK(glob_match("polar*", "polar.reconstruct"));
  CHECK(!glob_match("polar*", "camera.roundtrip"));
  CHECK(glob_match("*.z-invariance", "decoder.z-invariance"));
  CHECK(glob_match("grad.?lp", "grad.mlp"));
  CHECK(!glob_match("grad.?lp", "grad.help"));
  CHECK(glob_match("*", ""));
}

TEST_CASE("run_checks filters, reports failures and keeps going") {
  std::ostringstream log;
  const auto all = default_checks();
  const CheckReport polar = run_checks(all, "polar*", log);
  CHECK(polar.outcomes.size() == 2);
  CHECK(polar.all_passed());

  // an injected fault is caught and does not stop the run: a coefficient
  // tensor that skipped its softmax normalization fails validation
  std::vector<Check> with_fault;
  with_fault.push_back({"injected.unnormalized-coefficients", [] {
                          ReferenceCoefficients c{Tensor::full({1, 1, 1, 4}, 0.5)};
                          validate_coefficients(c);
                        }});
  with_fault.push_back({"injected.passing", [] {}});
  std::ostringstream log2;
  const CheckReport report = run_checks(with_fault, "", log2);
  CHECK(report.failed == 1);
  CHECK(report.passed == 1);
  CHECK(!report.all_passed());
  CHECK(log2.str().find("[FAIL] injected.unnormalized-coefficients") != std::string::npos);
}

TEST_CASE("the full invariant suite passes") {
  std::ostringstream log;
  const CheckReport report = run_checks(default_checks(), "", log);
  CHECK(report.failed == 0);
  CHECK(report.passed >= 35);
}
