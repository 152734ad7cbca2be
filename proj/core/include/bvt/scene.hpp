// Synthetic multi-camera scenes: a surround ring of level pinhole cameras
// plus PRNG-filled image features, all reproducible from one seed.
#pragma once

#include <cstdint>

#include "bvt/camera.hpp"
#include "bvt/width.hpp"

namespace bvt {

struct SceneSpec {
  std::size_t n_cameras = 6;
  std::size_t h_i = 16;
  std::size_t w_i = 44;
  std::size_t channels = 64;
  std::size_t depth_bins = 32;
  double depth_min = 1.0;
  double depth_max = 60.0;
  double ring_radius = 1.5;   // camera distance from ego origin, meters
  double camera_height = 1.6; // meters above the BEV plane
  std::uint64_t seed = 42;

  void validate() const;
};

struct Scene {
  SceneSpec spec;
  CameraRig rig;
  DepthBins bins;
  FeatureVolume features;
};

// Cameras sit on an evenly spaced yaw ring looking outward, level with the
// ground, so each camera's down axis is exactly ego -z. Intrinsics: focal
// w_i, principal point centered.
Scene gen_scene(const SceneSpec& spec);

}  // namespace bvt
