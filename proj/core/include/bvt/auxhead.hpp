// Training-only complementary head over width features: a 1D conv trunk with
// class, categorical-depth and height-row branches. Gradients stop at the
// head, so detaching it cannot change the BEV output.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "bvt/nn.hpp"
#include "bvt/tensor.hpp"
#include "bvt/width.hpp"

namespace bvt {

// Column-range label: columns in [lo, hi] belong to this object.
struct WidthTarget {
  std::size_t camera = 0;
  std::size_t lo = 0, hi = 0;  // inclusive feature-column span
  std::size_t depth_bin = 0;
  std::size_t height_row = 0;
  std::size_t class_id = 1;    // 0 is reserved for background

  double center() const { return 0.5 * (static_cast<double>(lo) + static_cast<double>(hi)); }
};

std::vector<WidthTarget> load_targets_json(const std::string& path);

// 1D convolution over the width axis, zero padded to keep w. weight is
// (out, in, k) with odd k.
struct Conv1d {
  Tensor weight;
  Tensor bias;  // (out)

  static Conv1d init(Rng& rng, std::size_t out, std::size_t in, std::size_t k);
  std::size_t out_channels() const { return weight.dim(0); }
  std::size_t in_channels() const { return weight.dim(1); }
  std::size_t kernel() const { return weight.dim(2); }
};

struct Conv1dGrads {
  Tensor weight;
  Tensor bias;
};

// x: (n, w, in) -> (n, w, out).
Tensor conv1d_forward(const Tensor& x, const Conv1d& conv, std::uint64_t* macs = nullptr);
void conv1d_backward(const Tensor& x, const Conv1d& conv, const Tensor& dy,
                     Conv1dGrads& grads, Tensor* dx);

struct AuxHeadParams {
  std::vector<Conv1d> trunk;  // ReLU between layers
  Conv1d cls_branch;          // kernel 1, out = n_classes (incl. background 0)
  Conv1d depth_branch;        // kernel 1, out = depth bins
  Conv1d height_branch;       // kernel 1, out = image rows

  static AuxHeadParams init(Rng& rng, std::size_t c, std::size_t trunk_layers,
                            std::size_t trunk_kernel, std::size_t n_classes,
                            std::size_t depth_bins, std::size_t height_rows);
  std::size_t n_classes() const { return cls_branch.out_channels(); }
  std::size_t depth_bins() const { return depth_branch.out_channels(); }
  std::size_t height_rows() const { return height_branch.out_channels(); }
};

struct AuxLogits {
  Tensor cls;     // (n, w, n_classes)
  Tensor depth;   // (n, w, depth_bins)
  Tensor height;  // (n, w, height_rows)
};

struct AuxCache {
  std::vector<Tensor> trunk_inputs;   // input of each trunk layer
  std::vector<Tensor> trunk_pre_act;  // pre-ReLU trunk outputs
  Tensor trunk_out;
};

struct AuxHeadGrads {
  std::vector<Conv1dGrads> trunk;
  Conv1dGrads cls_branch, depth_branch, height_branch;
};

AuxLogits aux_forward(const WidthFeatures& width, const AuxHeadParams& params,
                      AuxCache* cache = nullptr, std::uint64_t* macs = nullptr);

// Column assignment: a column inside one or more spans belongs to the target
// with the nearest center (ties: lower target index); everything else is
// background. Cross-entropy on all three branches; depth/height terms only on
// assigned columns. Breakdown: cls averaged over all columns, depth/height
// averaged over positive columns.
struct AuxLossBreakdown {
  double total = 0, cls = 0, depth = 0, height = 0;
  std::size_t positive_columns = 0;
};

AuxLossBreakdown aux_loss(const AuxLogits& logits, std::span<const WidthTarget> targets);

// d(total loss)/d(logits), same shapes as the logits.
AuxLogits aux_loss_backward(const AuxLogits& logits, std::span<const WidthTarget> targets);

// Full backward from logit grads to head parameter grads; dwidth may be null
// (it exists so tests can show no gradient reaches the rest of the model
// unless explicitly requested).
void aux_backward(const WidthFeatures& width, const AuxHeadParams& params,
                  const AuxCache& cache, const AuxLogits& dlogits,
                  AuxHeadGrads& grads, Tensor* dwidth);
AuxHeadGrads make_zero_grads(const AuxHeadParams& p);

// Plain full-batch SGD on head parameters only.
struct AuxTrainStats {
  double initial_loss = 0;
  double final_loss = 0;
  std::size_t steps = 0;
};

AuxTrainStats train_aux_head(AuxHeadParams& params, const WidthFeatures& width,
                             std::span<const WidthTarget> targets,
                             std::size_t steps, double learning_rate);

}  // namespace bvt
