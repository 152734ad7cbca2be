// bvt command-line harness: scene generation, robustness sweeps, stage
// benchmarks, the invariant suite and a demo pipeline run.
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bvt/bench.hpp"
#include "bvt/checks.hpp"
#include "bvt/pipeline.hpp"
#include "bvt/sweep.hpp"
#include "bvt/tensor_io.hpp"

namespace {

std::uint64_t env_default_seed() {
  if (const char* env = std::getenv("BVT_SEED")) {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      throw bvt::ConfigError("BVT_SEED is not a valid integer");
    }
  }
  return 42;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) parts.push_back(item);
  return parts;
}

bvt::PerturbKind parse_kind(const std::string& s) {
  if (s == "rot" || s == "rotation") return bvt::PerturbKind::Rotation;
  if (s == "trans" || s == "translation") return bvt::PerturbKind::Translation;
  throw bvt::ConfigError("unknown perturbation kind: " + s);
}

bvt::Axis parse_axis(const std::string& s) {
  if (s == "x") return bvt::Axis::X;
  if (s == "y") return bvt::Axis::Y;
  if (s == "z") return bvt::Axis::Z;
  throw bvt::ConfigError("unknown axis: " + s);
}

// Scene from a rig JSON + features dump produced by gen-scene.
bvt::Scene load_scene(const std::string& rig_path, const std::string& feats_path,
                      std::size_t depth_bins, double depth_min, double depth_max,
                      std::uint64_t seed) {
  bvt::Scene scene;
  scene.rig = bvt::load_rig_json(rig_path);
  bvt::Tensor feats = bvt::read_bvt_file(feats_path);
  if (feats.ndim() != 4) throw bvt::ConfigError("features dump must be rank 4 (n, h, w, c)");
  if (feats.dim(0) != scene.rig.count())
    throw bvt::ConfigError("features camera count does not match the rig");
  scene.spec.n_cameras = feats.dim(0);
  scene.spec.h_i = feats.dim(1);
  scene.spec.w_i = feats.dim(2);
  scene.spec.channels = feats.dim(3);
  scene.spec.depth_bins = depth_bins;
  scene.spec.depth_min = depth_min;
  scene.spec.depth_max = depth_max;
  scene.spec.seed = seed;
  scene.bins = bvt::DepthBins::uniform(depth_min, depth_max, depth_bins);
  scene.features = bvt::FeatureVolume{std::move(feats)};
  return scene;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw bvt::ConfigError("cannot open " + path + " for writing");
  f << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"width-compressed BEV view transformation harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 0;
  bool seed_given = false;
  app.add_option("--seed", seed, "PRNG seed (default: BVT_SEED env var or 42)")
      ->each([&](const std::string&) { seed_given = true; });

  // shared scene/pipeline knobs
  std::size_t cams = 6, h_i = 16, w_i = 44, channels = 64, depth_bins = 32, bev = 32;
  double depth_min = 1.0, depth_max = 60.0, bev_range = 51.2;

  // gen-scene
  auto* gen = app.add_subcommand("gen-scene", "generate a synthetic rig + feature dump");
  std::vector<std::string> gen_out;
  gen->add_option("--cams", cams, "number of cameras");
  gen->add_option("--rows", h_i, "feature rows (image height at feature stride)");
  gen->add_option("--cols", w_i, "feature columns");
  gen->add_option("--channels", channels, "feature channels");
  gen->add_option("--out", gen_out, "output paths: rig.json feats.bvt")
      ->expected(2)
      ->required();

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "extrinsic perturbation robustness sweep");
  std::vector<std::string> scene_files;
  std::string kinds_arg = "rot,trans", axes_arg = "x,y,z";
  std::string sigmas_arg = "0,0.01,0.02,0.05,0.1,0.2";
  std::size_t trials = 16;
  std::size_t threads = 0;
  std::string sweep_out = "sweep.csv";
  std::string frame_arg = "camera";
  sweep_cmd->add_option("--scene", scene_files, "scene inputs: rig.json feats.bvt")
      ->expected(2)
      ->required();
  sweep_cmd->add_option("--kinds", kinds_arg, "comma list: rot,trans");
  sweep_cmd->add_option("--axes", axes_arg, "comma list: x,y,z");
  sweep_cmd->add_option("--sigmas", sigmas_arg, "comma list of noise magnitudes");
  sweep_cmd->add_option("--trials", trials, "trials per (kind, axis, sigma)");
  sweep_cmd->add_option("--threads", threads,
                        "worker threads (0 = hardware concurrency); output is "
                        "identical at any count");
  sweep_cmd->add_option("--trans-frame", frame_arg,
                        "frame of translation offsets: camera | ego");
  sweep_cmd->add_option("--bev", bev, "BEV grid cells per side");
  sweep_cmd->add_option("--depth-bins", depth_bins, "number of depth bins");
  sweep_cmd->add_option("--out", sweep_out, "output CSV path");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "per-stage MAC counts and latency");
  std::string sizes_arg;
  std::size_t repeats = 3;
  std::string bench_out = "bench.csv";
  bench_cmd->add_option("--sizes", sizes_arg,
                        "comma list of HxWxCxB settings (default: paper-mirror sweep)");
  bench_cmd->add_option("--repeats", repeats, "timing repeats per stage (>= 3)");
  bench_cmd->add_option("--out", bench_out, "output CSV path");

  // check
  auto* check_cmd = app.add_subcommand("check", "run the invariant suite");
  std::string filter;
  check_cmd->add_option("--filter", filter, "glob over check names, e.g. 'polar*'");

  // demo
  auto* demo_cmd = app.add_subcommand("demo", "run the default pipeline once");
  std::string dump_bev;
  demo_cmd->add_option("--dump-bev", dump_bev, "write the BEV features to this BVT1 file");
  demo_cmd->add_option("--bev", bev, "BEV grid cells per side");
  demo_cmd->add_option("--cams", cams, "number of cameras");
  demo_cmd->add_option("--rows", h_i, "feature rows");
  demo_cmd->add_option("--cols", w_i, "feature columns");
  demo_cmd->add_option("--channels", channels, "feature channels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!seed_given) seed = env_default_seed();

    if (gen->parsed()) {
      bvt::SceneSpec spec;
      spec.n_cameras = cams;
      spec.h_i = h_i;
      spec.w_i = w_i;
      spec.channels = channels;
      spec.depth_bins = depth_bins;
      spec.seed = seed;
      const bvt::Scene scene = bvt::gen_scene(spec);
      bvt::save_rig_json(gen_out[0], scene.rig);
      bvt::write_bvt_file(gen_out[1], scene.features.data);
      std::cout << "wrote " << gen_out[0] << " (" << scene.rig.count() << " cameras) and "
                << gen_out[1] << " (" << scene.features.data.size() << " values)\n";
      return 0;
    }

    if (sweep_cmd->parsed()) {
      const bvt::Scene scene =
          load_scene(scene_files[0], scene_files[1], depth_bins, depth_min, depth_max, seed);
      bvt::PipelineConfig cfg;
      cfg.h_b = cfg.w_b = bev;
      cfg.bev_range = bev_range;
      bvt::Rng rng = bvt::Rng(seed).fork(2);
      const bvt::PipelineParams params = bvt::init_pipeline(scene.spec, cfg, rng);
      bvt::SweepRequest req;
      req.kinds.clear();
      for (const auto& k : split_commas(kinds_arg)) req.kinds.push_back(parse_kind(k));
      req.axes.clear();
      for (const auto& a : split_commas(axes_arg)) req.axes.push_back(parse_axis(a));
      req.sigmas.clear();
      for (const auto& s : split_commas(sigmas_arg)) req.sigmas.push_back(std::stod(s));
      req.trials = trials;
      req.threads = threads;
      if (frame_arg == "camera") {
        req.frame = bvt::TranslationFrame::Camera;
      } else if (frame_arg == "ego") {
        req.frame = bvt::TranslationFrame::Ego;
      } else {
        throw bvt::ConfigError("unknown translation frame: " + frame_arg);
      }
      const auto rows = bvt::run_sweep(scene, params, req, seed);
      std::ostringstream csv;
      bvt::write_sweep_csv(csv, rows);
      write_text_file(sweep_out, csv.str());
      std::cout << "wrote " << sweep_out << " (" << rows.size() << " rows)\n";
      return 0;
    }

    if (bench_cmd->parsed()) {
      std::vector<bvt::BenchSize> sizes;
      if (sizes_arg.empty()) {
        sizes = bvt::default_bench_sizes();
      } else {
        for (const auto& tok : split_commas(sizes_arg))
          sizes.push_back(bvt::parse_bench_size(tok));
      }
      const bvt::BenchResult result = bvt::run_bench(sizes, repeats, seed);
      std::ostringstream csv;
      bvt::write_bench_csv(csv, result);
      write_text_file(bench_out, csv.str());
      std::cout << "wrote " << bench_out << " (" << result.rows.size()
                << " rows; wall-clock column is advisory)\n";
      for (const auto& kv : result.kv)
        std::cout << "  " << kv.size.h_i << "x" << kv.size.w_i << "x" << kv.size.c
                  << ": decoder keys " << kv.width_kv << ", full-feature oracle keys "
                  << kv.full_kv << " (ratio " << (kv.full_kv / kv.width_kv) << ")\n";
      return 0;
    }

    if (check_cmd->parsed()) {
      const bvt::CheckReport report =
          bvt::run_checks(bvt::default_checks(), filter, std::cout);
      return report.all_passed() ? 0 : 1;
    }

    if (demo_cmd->parsed()) {
      bvt::SceneSpec spec;
      spec.n_cameras = cams;
      spec.h_i = h_i;
      spec.w_i = w_i;
      spec.channels = channels;
      spec.seed = seed;
      const bvt::Scene scene = bvt::gen_scene(spec);
      bvt::PipelineConfig cfg;
      cfg.h_b = cfg.w_b = bev;
      cfg.bev_range = bev_range;
      bvt::Rng rng = bvt::Rng(seed).fork(2);
      const bvt::PipelineParams params = bvt::init_pipeline(spec, cfg, rng);
      bvt::StageMacs macs;
      bvt::BevGrid grid = params.grid;
      grid.features = bvt::run_pipeline(scene, params, &macs);
      const bvt::Tensor& bev_feats = grid.features;
      std::cout << "BEV features: " << bev_feats.dim(0) << "x" << bev_feats.dim(1) << "x"
                << bev_feats.dim(2) << ", |F|_2 = " << bvt::l2_norm(bev_feats) << "\n";
      std::cout << "stage MACs: pool=" << macs.pool << " refine=" << macs.refine
                << " pe=" << macs.pe << " decoder=" << macs.decoder << "\n";
      std::cout << "decoder keys: " << macs.decoder_kv << " ("
                << scene.spec.h_i << "x fewer than the " << macs.decoder_kv * scene.spec.h_i
                << " full-feature keys)\n";
      std::cout << "compression gap vs full-feature oracle: "
                << bvt::compression_gap(scene, params) << "\n";
      if (!dump_bev.empty()) {
        bvt::write_bvt_file(dump_bev, bev_feats);
        std::cout << "wrote " << dump_bev << "\n";
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
