// Multi-view pinhole geometry: depth-binned pixel lifting, projection into
// the shared ego frame, polar conversion, and the extrinsic perturbation
// sampler used by the robustness sweep.
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "bvt/rng.hpp"
#include "bvt/tensor.hpp"

namespace bvt {

struct Vec3 {
  double x = 0, y = 0, z = 0;
};

// Row-major 3x3 matrix, enough linear algebra for camera work.
struct Mat3 {
  std::array<double, 9> m{};

  static Mat3 identity();
  double& at(std::size_t r, std::size_t c) { return m[3 * r + c]; }
  double at(std::size_t r, std::size_t c) const { return m[3 * r + c]; }
  Mat3 transposed() const;
  double det() const;
  Mat3 inverse() const;  // throws ConfigError when singular
};

Mat3 operator*(const Mat3& a, const Mat3& b);
Vec3 operator*(const Mat3& a, const Vec3& v);
Vec3 operator+(const Vec3& a, const Vec3& b);
Vec3 operator-(const Vec3& a, const Vec3& b);

Mat3 rotation_x(double angle);
Mat3 rotation_y(double angle);
Mat3 rotation_z(double angle);

struct CameraModel {
  Mat3 intrinsics;       // pixel units
  Mat3 rotation;         // camera -> ego
  Vec3 translation;      // camera origin in ego frame, meters
  Mat3 intrinsics_inv;   // cached at validation time

  // Checks invertibility of the intrinsics and orthonormality of the rotation
  // (R^T R == I and |det R| == 1, both within 1e-9). Throws ConfigError.
  void validate_and_cache();
};

struct CameraRig {
  std::vector<CameraModel> cameras;
  std::vector<std::string> names;

  std::size_t count() const { return cameras.size(); }
  void validate() const;  // n >= 1, unique names
};

struct DepthBins {
  std::vector<double> values;  // strictly increasing, all > 0

  static DepthBins uniform(double d_min, double d_max, std::size_t count);
  std::size_t count() const { return values.size(); }
  void validate() const;
};

struct PolarCoord {
  double d = 0;          // distance on the BEV plane
  double sin_theta = 0;
  double cos_theta = 1;
  double z = 0;
};

// Homogeneous reference points (u*d_k, v*d_k, d_k) for each depth bin.
std::vector<Vec3> lift_pixel(double u, double v, const DepthBins& bins);

// R * I^-1 * p_hom + T: a camera pixel ray into the ego frame.
Vec3 project_to_ego(const Vec3& p_hom, const CameraModel& cam);

// d = sqrt(x^2+y^2), sin = y/d, cos = x/d; below d = 1e-9 the angle is
// undefined and we fix (sin, cos) = (0, 1).
PolarCoord to_polar(const Vec3& p);

enum class Axis { X, Y, Z };
enum class PerturbKind { Rotation, Translation };
// Frame in which a translation offset is expressed before being added to T.
// Camera: T' = R * (e_axis * delta); Ego: T' = e_axis * delta.
enum class TranslationFrame { Camera, Ego };

struct PerturbSpec {
  Axis axis = Axis::X;
  PerturbKind kind = PerturbKind::Rotation;
  double sigma = 0;  // radians (rotation) or meters (translation), >= 0
  TranslationFrame frame = TranslationFrame::Camera;
};

// Independent zero-mean Gaussian noise per camera. Rotation: R_hat = R * R'
// with R' a rotation about the chosen camera axis; translation: T_hat = T + T'.
// The input rig is left untouched; sigma == 0 returns an identical copy.
CameraRig perturb_rig(const CameraRig& rig, const PerturbSpec& spec, Rng& rng);

// Rig JSON: {"cameras":[{"name":..., "intrinsics":[9], "rotation":[9],
// "translation":[3]}]}; all matrices row-major. Loader validates invariants.
CameraRig load_rig_json(const std::string& path);
void save_rig_json(const std::string& path, const CameraRig& rig);

const char* axis_name(Axis a);
const char* perturb_kind_name(PerturbKind k);

}  // namespace bvt
