#include "bvt/auxhead.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"

namespace bvt {

std::vector<WidthTarget> load_targets_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("load_targets_json: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("load_targets_json: parse error: ") + e.what());
  }
  if (!j.is_array()) throw ConfigError("load_targets_json: expected a top-level array");
  std::vector<WidthTarget> targets;
  for (const auto& jt : j) {
    WidthTarget t;
    t.camera = jt.at("camera").get<std::size_t>();
    const auto span = jt.at("span");
    if (span.size() != 2) throw ConfigError("load_targets_json: span must be [lo, hi]");
    t.lo = span[0].get<std::size_t>();
    t.hi = span[1].get<std::size_t>();
    t.depth_bin = jt.at("depth_bin").get<std::size_t>();
    t.height_row = jt.at("height_row").get<std::size_t>();
    t.class_id = jt.at("class").get<std::size_t>();
    if (t.lo > t.hi) throw ConfigError("load_targets_json: span lo > hi");
    if (t.class_id == 0) throw ConfigError("load_targets_json: class 0 is background");
    targets.push_back(t);
  }
  return targets;
}

Conv1d Conv1d::init(Rng& rng, std::size_t out, std::size_t in, std::size_t k) {
  if (k % 2 == 0) throw ConfigError("Conv1d: kernel size must be odd");
  Conv1d c;
  c.weight = Tensor({out, in, k});
  c.bias = Tensor({out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * k));
  for (std::size_t i = 0; i < c.weight.size(); ++i) c.weight[i] = rng.uniform(-bound, bound);
  for (std::size_t i = 0; i < c.bias.size(); ++i) c.bias[i] = rng.uniform(-bound, bound);
  return c;
}

Tensor conv1d_forward(const Tensor& x, const Conv1d& conv, std::uint64_t* macs) {
  if (x.ndim() != 3) throw ShapeError("conv1d_forward: expects (n, w, c)");
  const std::size_t n = x.dim(0), w = x.dim(1), cin = x.dim(2);
  if (cin != conv.in_channels()) throw ShapeError("conv1d_forward: channel mismatch");
  const std::size_t cout = conv.out_channels(), k = conv.kernel();
  const std::size_t half = k / 2;
  Tensor y({n, w, cout});
  for (std::size_t cam = 0; cam < n; ++cam) {
    for (std::size_t j = 0; j < w; ++j) {
      double* yr = y.data() + (cam * w + j) * cout;
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = conv.bias[o];
        for (std::size_t dk = 0; dk < k; ++dk) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(j + dk) -
                                     static_cast<std::ptrdiff_t>(half);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(w)) continue;  // zero pad
          const double* xr = x.data() + (cam * w + static_cast<std::size_t>(src)) * cin;
          const double* wr = conv.weight.data() + (o * cin) * k + dk;
          for (std::size_t ci = 0; ci < cin; ++ci) acc += wr[ci * k] * xr[ci];
        }
        yr[o] = acc;
      }
    }
  }
  if (macs) *macs += static_cast<std::uint64_t>(n) * w * cout * cin * k;
  return y;
}

void conv1d_backward(const Tensor& x, const Conv1d& conv, const Tensor& dy,
                     Conv1dGrads& grads, Tensor* dx) {
  const std::size_t n = x.dim(0), w = x.dim(1), cin = x.dim(2);
  const std::size_t cout = conv.out_channels(), k = conv.kernel();
  const std::size_t half = k / 2;
  if (dy.ndim() != 3 || dy.dim(0) != n || dy.dim(1) != w || dy.dim(2) != cout)
    throw ShapeError("conv1d_backward: dy shape mismatch");
  if (grads.weight.empty()) grads.weight = Tensor(conv.weight.dims());
  if (grads.bias.empty()) grads.bias = Tensor(conv.bias.dims());
  if (dx) {
    if (dx->empty()) *dx = Tensor(x.dims());
    check_same_dims(*dx, x, "conv1d_backward: dx");
  }
  for (std::size_t cam = 0; cam < n; ++cam) {
    for (std::size_t j = 0; j < w; ++j) {
      const double* dyr = dy.data() + (cam * w + j) * cout;
      for (std::size_t o = 0; o < cout; ++o) {
        const double g = dyr[o];
        grads.bias[o] += g;
        for (std::size_t dk = 0; dk < k; ++dk) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(j + dk) -
                                     static_cast<std::ptrdiff_t>(half);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* xr = x.data() + (cam * w + static_cast<std::size_t>(src)) * cin;
          double* gw = grads.weight.data() + (o * cin) * k + dk;
          for (std::size_t ci = 0; ci < cin; ++ci) gw[ci * k] += g * xr[ci];
          if (dx) {
            double* dxr = dx->data() + (cam * w + static_cast<std::size_t>(src)) * cin;
            const double* wr = conv.weight.data() + (o * cin) * k + dk;
            for (std::size_t ci = 0; ci < cin; ++ci) dxr[ci] += g * wr[ci * k];
          }
        }
      }
    }
  }
}

AuxHeadParams AuxHeadParams::init(Rng& rng, std::size_t c, std::size_t trunk_layers,
                                  std::size_t trunk_kernel, std::size_t n_classes,
                                  std::size_t depth_bins, std::size_t height_rows) {
  if (n_classes < 2) throw ConfigError("AuxHeadParams: need background + 1 class");
  AuxHeadParams p;
  for (std::size_t i = 0; i < trunk_layers; ++i)
    p.trunk.push_back(Conv1d::init(rng, c, c, trunk_kernel));
  p.cls_branch = Conv1d::init(rng, n_classes, c, 1);
  p.depth_branch = Conv1d::init(rng, depth_bins, c, 1);
  p.height_branch = Conv1d::init(rng, height_rows, c, 1);
  return p;
}

AuxLogits aux_forward(const WidthFeatures& width, const AuxHeadParams& params,
                      AuxCache* cache, std::uint64_t* macs) {
  Tensor cur = width.data;
  if (cache) {
    cache->trunk_inputs.clear();
    cache->trunk_pre_act.clear();
  }
  for (const auto& conv : params.trunk) {
    if (cache) cache->trunk_inputs.push_back(cur);
    Tensor pre = conv1d_forward(cur, conv, macs);
    if (cache) cache->trunk_pre_act.push_back(pre);
    cur = relu(pre);
  }
  if (cache) cache->trunk_out = cur;
  AuxLogits logits;
  logits.cls = conv1d_forward(cur, params.cls_branch, macs);
  logits.depth = conv1d_forward(cur, params.depth_branch, macs);
  logits.height = conv1d_forward(cur, params.height_branch, macs);
  return logits;
}

namespace {

constexpr std::size_t kBackground = std::numeric_limits<std::size_t>::max();

// Index of the assigned target for every (camera, column), or kBackground.
std::vector<std::size_t> assign_columns(std::span<const WidthTarget> targets,
                                        std::size_t n, std::size_t w) {
  std::vector<std::size_t> owner(n * w, kBackground);
  for (std::size_t cam = 0; cam < n; ++cam) {
    for (std::size_t j = 0; j < w; ++j) {
      double best_dist = std::numeric_limits<double>::infinity();
      std::size_t best = kBackground;
      for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        const auto& t = targets[ti];
        if (t.camera != cam || j < t.lo || j > t.hi) continue;
        const double dist = std::fabs(static_cast<double>(j) - t.center());
        if (dist < best_dist) {  // strict keeps the earlier index on ties
          best_dist = dist;
          best = ti;
        }
      }
      owner[cam * w + j] = best;
    }
  }
  return owner;
}

// Cross-entropy of class `target` under logits row of length `len`.
double cross_entropy(const double* logits, std::size_t len, std::size_t target) {
  double mx = logits[0];
  for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, logits[i]);
  double sum = 0;
  for (std::size_t i = 0; i < len; ++i) sum += std::exp(logits[i] - mx);
  return std::log(sum) + mx - logits[target];
}

// softmax(logits) - onehot(target), scaled, accumulated into dst.
void cross_entropy_grad(const double* logits, std::size_t len, std::size_t target,
                        double scale, double* dst) {
  double mx = logits[0];
  for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, logits[i]);
  double sum = 0;
  for (std::size_t i = 0; i < len; ++i) sum += std::exp(logits[i] - mx);
  for (std::size_t i = 0; i < len; ++i)
    dst[i] += scale * (std::exp(logits[i] - mx) / sum - (i == target ? 1.0 : 0.0));
}

void validate_targets(std::span<const WidthTarget> targets, std::size_t n, std::size_t w,
                      std::size_t n_classes, std::size_t depth_bins,
                      std::size_t height_rows) {
  for (const auto& t : targets) {
    if (t.camera >= n) throw ConfigError("WidthTarget: camera index out of range");
    if (t.lo > t.hi || t.hi >= w) throw ConfigError("WidthTarget: bad column span");
    if (t.class_id == 0 || t.class_id >= n_classes)
      throw ConfigError("WidthTarget: bad class id");
    if (t.depth_bin >= depth_bins) throw ConfigError("WidthTarget: bad depth bin");
    if (t.height_row >= height_rows) throw ConfigError("WidthTarget: bad height row");
  }
}

}  // namespace

AuxLossBreakdown aux_loss(const AuxLogits& logits, std::span<const WidthTarget> targets) {
  const std::size_t n = logits.cls.dim(0), w = logits.cls.dim(1);
  const std::size_t n_classes = logits.cls.dim(2);
  const std::size_t depth_bins = logits.depth.dim(2);
  const std::size_t height_rows = logits.height.dim(2);
  validate_targets(targets, n, w, n_classes, depth_bins, height_rows);
  const auto owner = assign_columns(targets, n, w);

  AuxLossBreakdown out;
  double cls_sum = 0, depth_sum = 0, height_sum = 0;
  std::size_t positives = 0;
  for (std::size_t cam = 0; cam < n; ++cam) {
    for (std::size_t j = 0; j < w; ++j) {
      const std::size_t col = cam * w + j;
      const std::size_t ti = owner[col];
      const std::size_t cls = (ti == kBackground) ? 0 : targets[ti].class_id;
      cls_sum += cross_entropy(logits.cls.data() + col * n_classes, n_classes, cls);
      if (ti != kBackground) {
        ++positives;
        depth_sum += cross_entropy(logits.depth.data() + col * depth_bins, depth_bins,
                                   targets[ti].depth_bin);
        height_sum += cross_entropy(logits.height.data() + col * height_rows, height_rows,
                                    targets[ti].height_row);
      }
    }
  }
  out.cls = cls_sum / static_cast<double>(n * w);
  out.depth = positives ? depth_sum / static_cast<double>(positives) : 0.0;
  out.height = positives ? height_sum / static_cast<double>(positives) : 0.0;
  out.total = out.cls + out.depth + out.height;
  out.positive_columns = positives;
  return out;
}

AuxLogits aux_loss_backward(const AuxLogits& logits, std::span<const WidthTarget> targets) {
  const std::size_t n = logits.cls.dim(0), w = logits.cls.dim(1);
  const std::size_t n_classes = logits.cls.dim(2);
  const std::size_t depth_bins = logits.depth.dim(2);
  const std::size_t height_rows = logits.height.dim(2);
  validate_targets(targets, n, w, n_classes, depth_bins, height_rows);
  const auto owner = assign_columns(targets, n, w);

  std::size_t positives = 0;
  for (std::size_t col = 0; col < n * w; ++col)
    if (owner[col] != kBackground) ++positives;
  const double cls_scale = 1.0 / static_cast<double>(n * w);
  const double pos_scale = positives ? 1.0 / static_cast<double>(positives) : 0.0;

  AuxLogits d;
  d.cls = Tensor(logits.cls.dims());
  d.depth = Tensor(logits.depth.dims());
  d.height = Tensor(logits.height.dims());
  for (std::size_t col = 0; col < n * w; ++col) {
    const std::size_t ti = owner[col];
    const std::size_t cls = (ti == kBackground) ? 0 : targets[ti].class_id;
    cross_entropy_grad(logits.cls.data() + col * n_classes, n_classes, cls, cls_scale,
                       d.cls.data() + col * n_classes);
    if (ti != kBackground) {
      cross_entropy_grad(logits.depth.data() + col * depth_bins, depth_bins,
                         targets[ti].depth_bin, pos_scale,
                         d.depth.data() + col * depth_bins);
      cross_entropy_grad(logits.height.data() + col * height_rows, height_rows,
                         targets[ti].height_row, pos_scale,
                         d.height.data() + col * height_rows);
    }
  }
  return d;
}

void aux_backward(const WidthFeatures& width, const AuxHeadParams& params,
                  const AuxCache& cache, const AuxLogits& dlogits,
                  AuxHeadGrads& grads, Tensor* dwidth) {
  if (grads.trunk.size() != params.trunk.size()) grads = make_zero_grads(params);
  Tensor dtrunk(cache.trunk_out.dims());
  conv1d_backward(cache.trunk_out, params.cls_branch, dlogits.cls, grads.cls_branch,
                  &dtrunk);
  conv1d_backward(cache.trunk_out, params.depth_branch, dlogits.depth, grads.depth_branch,
                  &dtrunk);
  conv1d_backward(cache.trunk_out, params.height_branch, dlogits.height,
                  grads.height_branch, &dtrunk);

  Tensor cur = std::move(dtrunk);
  for (std::size_t li = params.trunk.size(); li-- > 0;) {
    const Tensor& pre = cache.trunk_pre_act[li];
    for (std::size_t i = 0; i < cur.size(); ++i)
      if (pre[i] <= 0) cur[i] = 0;
    Tensor dprev;
    Tensor* dprev_ptr = (li == 0) ? dwidth : &dprev;
    conv1d_backward(cache.trunk_inputs[li], params.trunk[li], cur, grads.trunk[li],
                    dprev_ptr);
    if (li > 0) cur = std::move(dprev);
  }
  (void)width;
}

AuxHeadGrads make_zero_grads(const AuxHeadParams& p) {
  auto zero = [](const Conv1d& c) {
    return Conv1dGrads{Tensor(c.weight.dims()), Tensor(c.bias.dims())};
  };
  AuxHeadGrads g;
  for (const auto& conv : p.trunk) g.trunk.push_back(zero(conv));
  g.cls_branch = zero(p.cls_branch);
  g.depth_branch = zero(p.depth_branch);
  g.height_branch = zero(p.height_branch);
  return g;
}

namespace {

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
}

}  // namespace

AuxTrainStats train_aux_head(AuxHeadParams& params, const WidthFeatures& width,
                             std::span<const WidthTarget> targets,
                             std::size_t steps, double learning_rate) {
  AuxTrainStats stats;
  stats.steps = steps;
  for (std::size_t step = 0; step < steps; ++step) {
    AuxCache cache;
    AuxLogits logits = aux_forward(width, params, &cache);
    const AuxLossBreakdown loss = aux_loss(logits, targets);
    if (step == 0) stats.initial_loss = loss.total;
    AuxLogits dlogits = aux_loss_backward(logits, targets);
    AuxHeadGrads grads = make_zero_grads(params);
    aux_backward(width, params, cache, dlogits, grads, nullptr);
    for (std::size_t li = 0; li < params.trunk.size(); ++li) {
      sgd_step(params.trunk[li].weight, grads.trunk[li].weight, learning_rate);
      sgd_step(params.trunk[li].bias, grads.trunk[li].bias, learning_rate);
    }
    sgd_step(params.cls_branch.weight, grads.cls_branch.weight, learning_rate);
    sgd_step(params.cls_branch.bias, grads.cls_branch.bias, learning_rate);
    sgd_step(params.depth_branch.weight, grads.depth_branch.weight, learning_rate);
    sgd_step(params.depth_branch.bias, grads.depth_branch.bias, learning_rate);
    sgd_step(params.height_branch.weight, grads.height_branch.weight, learning_rate);
    sgd_step(params.height_branch.bias, grads.height_branch.bias, learning_rate);
  }
  AuxLogits logits = aux_forward(width, params);
  stats.final_loss = aux_loss(logits, targets).total;
  return stats;
}

}  // namespace bvt
