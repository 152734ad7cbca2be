#include "bvt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <ostream>

#include "strfmt.hpp"

namespace bvt {

std::vector<BenchSize> default_bench_sizes() {
  // input resolutions {256x704, 384x1056, 512x1408} at stride 16, channels
  // 64/128, desk-scale BEV grid
  return {{16, 44, 64, 32}, {24, 66, 64, 32}, {32, 88, 64, 32}, {32, 88, 128, 32}};
}

BenchSize parse_bench_size(const std::string& token) {
  BenchSize s;
  std::size_t* fields[4] = {&s.h_i, &s.w_i, &s.c, &s.h_b};
  std::size_t pos = 0;
  for (int f = 0; f < 4; ++f) {
    std::size_t next = token.find('x', pos);
    const std::string part =
        (f == 3) ? token.substr(pos) : token.substr(pos, next - pos);
    if (part.empty() || (f < 3 && next == std::string::npos))
      throw ConfigError("parse_bench_size: expected HxWxCxB, got " + token);
    try {
      *fields[f] = std::stoul(part);
    } catch (const std::exception&) {
      throw ConfigError("parse_bench_size: bad number in " + token);
    }
    pos = (f == 3) ? pos : next + 1;
  }
  if (s.h_i == 0 || s.w_i == 0 || s.c == 0 || s.h_b == 0)
    throw ConfigError("parse_bench_size: sizes must be positive");
  return s;
}

namespace {

double median_ms(std::vector<double>& samples) {
  std::sort(samples.begin(), samples.end());
  const std::size_t n = samples.size();
  return (n % 2 == 1) ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

template <class F>
double time_stage(F&& fn, std::size_t repeats) {
  std::vector<double> samples;
  samples.reserve(repeats);
  fn();  // warm up
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  return median_ms(samples);
}

}  // namespace

BenchResult run_bench(const std::vector<BenchSize>& sizes, std::size_t repeats,
                      std::uint64_t seed) {
  if (repeats < 3) throw ConfigError("run_bench: repeats must be >= 3");
  if (sizes.empty()) throw ConfigError("run_bench: no size settings");

  BenchResult result;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const BenchSize& size = sizes[si];
    SceneSpec spec;
    spec.h_i = size.h_i;
    spec.w_i = size.w_i;
    spec.channels = size.c;
    spec.seed = seed;
    PipelineConfig cfg;
    cfg.h_b = size.h_b;
    cfg.w_b = size.h_b;  // square BEV grid
    Rng rng(seed, 1000 + si);
    const Scene scene = gen_scene(spec);
    const PipelineParams params = init_pipeline(spec, cfg, rng);

    // pool
    const WidthFeatures pooled = height_maxpool(scene.features);
    const double pool_ms = time_stage([&] { height_maxpool(scene.features); }, repeats);
    result.rows.push_back({"pool", size, 0, pool_ms});

    // refine
    RefineMacs refine_macs;
    const WidthFeatures refined =
        refine(pooled, scene.features, params.refine, nullptr, &refine_macs);
    const double refine_ms =
        time_stage([&] { refine(pooled, scene.features, params.refine); }, repeats);
    result.rows.push_back({"refine", size, refine_macs.total(), refine_ms});

    // pe: coefficient + height heads, width encoding, BEV queries
    std::uint64_t pe_macs = 0;
    const ReferenceCoefficients coeffs =
        predict_coefficients(scene.features, params.coeff_head, &pe_macs);
    const HeightDistribution heights =
        predict_height_distribution(scene.features, params.height_head, &pe_macs);
    const EncodingSet width_pe =
        width_refpe(scene.features, scene.rig, scene.bins, coeffs, heights,
                    params.width_pe_mlp, params.enc, params.cfg.scales, &pe_macs);
    const EncodingSet bev_q = bev_query_pe(params.grid, params.bev_pe_mlp, params.enc,
                                           params.cfg.scales, &pe_macs);
    const double pe_ms = time_stage(
        [&] {
          predict_coefficients(scene.features, params.coeff_head);
          predict_height_distribution(scene.features, params.height_head);
          width_refpe(scene.features, scene.rig, scene.bins, coeffs, heights,
                      params.width_pe_mlp, params.enc, params.cfg.scales);
          bev_query_pe(params.grid, params.bev_pe_mlp, params.enc, params.cfg.scales);
        },
        repeats);
    result.rows.push_back({"pe", size, pe_macs, pe_ms});

    // decoder over width features
    DecoderMacs dec_macs;
    transform(refined, width_pe, bev_q, params.decoder, nullptr, &dec_macs);
    const double dec_ms =
        time_stage([&] { transform(refined, width_pe, bev_q, params.decoder); }, repeats);
    result.rows.push_back({"decoder", size, dec_macs.total(), dec_ms});

    // full-feature oracle decoder, the uncompressed comparison point
    const EncodingSet pixel_pe =
        pixel_refpe(scene.features, scene.rig, scene.bins, coeffs, params.width_pe_mlp,
                    false, params.enc, params.cfg.scales);
    DecoderMacs full_macs;
    transform_full_oracle(scene.features, pixel_pe, bev_q, params.decoder, &full_macs);
    const double full_ms = time_stage(
        [&] { transform_full_oracle(scene.features, pixel_pe, bev_q, params.decoder); },
        repeats);
    result.rows.push_back({"decoder_full", size, full_macs.total(), full_ms});

    result.kv.push_back({size, dec_macs.kv_count, full_macs.kv_count});
  }
  return result;
}

void write_bench_csv(std::ostream& out, const BenchResult& result) {
  out << "stage,h_i,w_i,c,h_b,macs,ms_median\n";
  for (const auto& r : result.rows) {
    out << r.stage << ',' << r.size.h_i << ',' << r.size.w_i << ',' << r.size.c << ','
        << r.size.h_b << ',' << detail::fmt_u64(r.macs) << ','
        << detail::fmt_double(r.ms_median) << '\n';
  }
}

}  // namespace bvt
