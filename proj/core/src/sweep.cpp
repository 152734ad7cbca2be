#include "bvt/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <ostream>
#include <thread>

#include "strfmt.hpp"

namespace bvt {

void SweepRequest::validate() const {
  if (kinds.empty() || axes.empty() || sigmas.empty())
    throw ConfigError("SweepRequest: empty kind/axis/sigma list");
  if (trials == 0) throw ConfigError("SweepRequest: trials must be >= 1");
  for (double s : sigmas)
    if (s < 0) throw ConfigError("SweepRequest: sigma must be >= 0");
}

double bev_drift(const Tensor& clean, const Tensor& perturbed) {
  return l2_norm(perturbed - clean) / l2_norm(clean);
}

namespace {

struct SweepTask {
  PerturbSpec spec;
  std::uint64_t stream;
  std::size_t slot;
};

}  // namespace

std::vector<SweepRow> run_sweep(const Scene& scene, const PipelineParams& params,
                                const SweepRequest& request, std::uint64_t seed) {
  request.validate();
  std::vector<double> sigmas = request.sigmas;
  std::sort(sigmas.begin(), sigmas.end());

  const FeaturePathCache cache = run_feature_path(scene, params);
  const Tensor clean = bev_from_geometry(scene.rig, scene, cache, params);

  // One PRNG stream per (kind, axis, trial): the sigmas of a series share
  // their unit draws, so drift-vs-sigma is read off a coupled family instead
  // of independently noisy estimates. Marginals per cell are still
  // N(0, sigma^2), independent per camera and trial.
  std::vector<SweepTask> tasks;
  tasks.reserve(request.kinds.size() * request.axes.size() * sigmas.size() * request.trials);
  for (std::size_t ki = 0; ki < request.kinds.size(); ++ki)
    for (std::size_t ai = 0; ai < request.axes.size(); ++ai)
      for (std::size_t si = 0; si < sigmas.size(); ++si)
        for (std::size_t trial = 0; trial < request.trials; ++trial) {
          SweepTask task;
          task.spec = {request.axes[ai], request.kinds[ki], sigmas[si], request.frame};
          task.stream =
              (static_cast<std::uint64_t>(ki) * request.axes.size() + ai) * request.trials +
              trial;
          task.slot = tasks.size();
          tasks.push_back(task);
        }

  std::vector<double> drifts(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    try {
      for (std::size_t t = next.fetch_add(1); t < tasks.size(); t = next.fetch_add(1)) {
        Rng rng(seed, tasks[t].stream);
        const CameraRig perturbed = perturb_rig(scene.rig, tasks[t].spec, rng);
        drifts[tasks[t].slot] =
            bev_drift(clean, bev_from_geometry(perturbed, scene, cache, params));
      }
    } catch (...) {
      const std::lock_guard<std::mutex> lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  };

  std::size_t n_threads = request.threads ? request.threads
                                          : std::thread::hardware_concurrency();
  n_threads = std::max<std::size_t>(1, std::min(n_threads, tasks.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  std::vector<SweepRow> rows;
  std::size_t slot = 0;
  for (std::size_t ki = 0; ki < request.kinds.size(); ++ki)
    for (std::size_t ai = 0; ai < request.axes.size(); ++ai)
      for (std::size_t si = 0; si < sigmas.size(); ++si) {
        double sum = 0, sum_sq = 0;
        for (std::size_t trial = 0; trial < request.trials; ++trial, ++slot) {
          sum += drifts[slot];
          sum_sq += drifts[slot] * drifts[slot];
        }
        const double n = static_cast<double>(request.trials);
        const double mean = sum / n;
        double stddev = 0.0;
        if (request.trials > 1) {
          const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
          stddev = std::sqrt(var);
        }
        rows.push_back({request.kinds[ki], request.axes[ai], sigmas[si], mean, stddev,
                        request.trials});
      }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "kind,axis,sigma,drift_mean,drift_std,trials\n";
  for (const auto& r : rows) {
    out << perturb_kind_name(r.kind) << ',' << axis_name(r.axis) << ','
        << detail::fmt_double(r.sigma) << ',' << detail::fmt_double(r.drift_mean) << ','
        << detail::fmt_double(r.drift_std) << ',' << r.trials << '\n';
  }
}

}  // namespace bvt
