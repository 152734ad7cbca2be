#include "bvt/scene.hpp"

#include <cmath>
#include <numbers>

namespace bvt {

void SceneSpec::validate() const {
  if (n_cameras == 0 || h_i == 0 || w_i == 0 || channels == 0)
    throw ConfigError("SceneSpec: dimensions must be positive");
  if (depth_bins == 0) throw ConfigError("SceneSpec: need at least one depth bin");
  if (depth_min <= 0 || (depth_bins > 1 && depth_max <= depth_min))
    throw ConfigError("SceneSpec: bad depth range");
}

Scene gen_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.spec = spec;
  scene.bins = DepthBins::uniform(spec.depth_min, spec.depth_max, spec.depth_bins);

  // Level cameras on an evenly spaced yaw ring, looking outward. Camera frame:
  // x right, y down, z forward; with the camera level, down maps to ego -z
  // exactly, which is what makes vertical offsets pure-z in the ego frame.
  for (std::size_t n = 0; n < spec.n_cameras; ++n) {
    const double yaw = 2.0 * std::numbers::pi * static_cast<double>(n) /
                       static_cast<double>(spec.n_cameras);
    const double cy = std::cos(yaw), sy = std::sin(yaw);
    CameraModel cam;
    // columns: right (sy, -cy, 0), down (0, 0, -1), forward (cy, sy, 0)
    cam.rotation.m = {sy, 0, cy,
                      -cy, 0, sy,
                      0, -1, 0};
    cam.translation = {spec.ring_radius * cy, spec.ring_radius * sy, spec.camera_height};
    const double focal = static_cast<double>(spec.w_i);
    cam.intrinsics.m = {focal, 0, static_cast<double>(spec.w_i) / 2.0,
                        0, focal, static_cast<double>(spec.h_i) / 2.0,
                        0, 0, 1};
    cam.validate_and_cache();
    scene.rig.cameras.push_back(cam);
    scene.rig.names.push_back("cam" + std::to_string(n));
  }
  scene.rig.validate();

  Rng feature_rng = Rng(spec.seed).fork(1);
  Tensor feats({spec.n_cameras, spec.h_i, spec.w_i, spec.channels});
  for (std::size_t i = 0; i < feats.size(); ++i) feats[i] = feature_rng.uniform(-1.0, 1.0);
  scene.features = FeatureVolume{std::move(feats)};
  return scene;
}

}  // namespace bvt
