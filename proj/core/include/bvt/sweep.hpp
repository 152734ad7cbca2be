// Extrinsic-perturbation robustness sweep: relative BEV feature drift as a
// function of noise magnitude, per perturbation kind and axis.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "bvt/pipeline.hpp"

namespace bvt {

struct SweepRequest {
  std::vector<PerturbKind> kinds{PerturbKind::Rotation, PerturbKind::Translation};
  std::vector<Axis> axes{Axis::X, Axis::Y, Axis::Z};
  std::vector<double> sigmas{0.0, 0.01, 0.02, 0.05, 0.1, 0.2};
  std::size_t trials = 16;
  TranslationFrame frame = TranslationFrame::Camera;
  std::size_t threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct SweepRow {
  PerturbKind kind;
  Axis axis;
  double sigma;
  double drift_mean;
  double drift_std;  // sample standard deviation over trials
  std::size_t trials;
};

// ||F_B(perturbed) - F_B(clean)||_2 / ||F_B(clean)||_2.
double bev_drift(const Tensor& clean, const Tensor& perturbed);

// Clean pipeline once, then independent noise per camera per trial. Tasks
// run across worker threads; every (kind, axis, sigma, trial) cell derives
// its draws from its own PRNG stream and writes into a fixed slot, so the
// result is byte-identical regardless of scheduling or thread count.
std::vector<SweepRow> run_sweep(const Scene& scene, const PipelineParams& params,
                                const SweepRequest& request, std::uint64_t seed);

// Header: kind,axis,sigma,drift_mean,drift_std,trials
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);

}  // namespace bvt
