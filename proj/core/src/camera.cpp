#include "bvt/camera.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"

namespace bvt {

Mat3 Mat3::identity() {
  Mat3 r;
  r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Mat3 Mat3::inverse() const {
  const double d = det();
  if (std::fabs(d) < 1e-12) throw ConfigError("Mat3::inverse: singular matrix");
  const double inv = 1.0 / d;
  Mat3 r;
  r.m[0] = (m[4] * m[8] - m[5] * m[7]) * inv;
  r.m[1] = (m[2] * m[7] - m[1] * m[8]) * inv;
  r.m[2] = (m[1] * m[5] - m[2] * m[4]) * inv;
  r.m[3] = (m[5] * m[6] - m[3] * m[8]) * inv;
  r.m[4] = (m[0] * m[8] - m[2] * m[6]) * inv;
  r.m[5] = (m[2] * m[3] - m[0] * m[5]) * inv;
  r.m[6] = (m[3] * m[7] - m[4] * m[6]) * inv;
  r.m[7] = (m[1] * m[6] - m[0] * m[7]) * inv;
  r.m[8] = (m[0] * m[4] - m[1] * m[3]) * inv;
  return r;
}

Mat3 operator*(const Mat3& a, const Mat3& b) {
  Mat3 r;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < 3; ++k) s += a.at(i, k) * b.at(k, j);
      r.at(i, j) = s;
    }
  return r;
}

Vec3 operator*(const Mat3& a, const Vec3& v) {
  return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z,
          a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
          a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
}

Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

Mat3 rotation_x(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r.m = {1, 0, 0, 0, c, -s, 0, s, c};
  return r;
}

Mat3 rotation_y(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r.m = {c, 0, s, 0, 1, 0, -s, 0, c};
  return r;
}

Mat3 rotation_z(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat3 r;
  r.m = {c, -s, 0, s, c, 0, 0, 0, 1};
  return r;
}

void CameraModel::validate_and_cache() {
  constexpr double tol = 1e-9;
  for (std::size_t i = 0; i < 9; ++i)
    if (!std::isfinite(intrinsics.m[i]) || !std::isfinite(rotation.m[i]))
      throw ConfigError("CameraModel: non-finite matrix entry");
  if (!std::isfinite(translation.x) || !std::isfinite(translation.y) ||
      !std::isfinite(translation.z))
    throw ConfigError("CameraModel: non-finite translation");
  if (std::fabs(std::fabs(rotation.det()) - 1.0) > tol)
    throw ConfigError("CameraModel: |det(R)| != 1");
  const Mat3 rtr = rotation.transposed() * rotation;
  const Mat3 eye = Mat3::identity();
  for (std::size_t i = 0; i < 9; ++i)
    if (std::fabs(rtr.m[i] - eye.m[i]) > tol)
      throw ConfigError("CameraModel: R^T R != I, rotation not orthonormal");
  intrinsics_inv = intrinsics.inverse();  // throws ConfigError when singular
}

void CameraRig::validate() const {
  if (cameras.empty()) throw ConfigError("CameraRig: need at least one camera");
  if (names.size() != cameras.size())
    throw ConfigError("CameraRig: names/cameras count mismatch");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw ConfigError("CameraRig: duplicate camera name " + n);
}

DepthBins DepthBins::uniform(double d_min, double d_max, std::size_t count) {
  if (count == 0) throw ConfigError("DepthBins: count must be >= 1");
  DepthBins b;
  b.values.resize(count);
  if (count == 1) {
    b.values[0] = d_min;
  } else {
    const double step = (d_max - d_min) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k)
      b.values[k] = d_min + static_cast<double>(k) * step;
  }
  b.validate();
  return b;
}

void DepthBins::validate() const {
  if (values.empty()) throw ConfigError("DepthBins: empty");
  if (values.front() <= 0) throw ConfigError("DepthBins: depths must be positive");
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) throw ConfigError("DepthBins: non-finite depth");
    if (k > 0 && values[k] <= values[k - 1])
      throw ConfigError("DepthBins: not strictly increasing");
  }
}

std::vector<Vec3> lift_pixel(double u, double v, const DepthBins& bins) {
  std::vector<Vec3> points;
  points.reserve(bins.count());
  for (double d : bins.values) points.push_back({u * d, v * d, d});
  return points;
}

Vec3 project_to_ego(const Vec3& p_hom, const CameraModel& cam) {
  return cam.rotation * (cam.intrinsics_inv * p_hom) + cam.translation;
}

PolarCoord to_polar(const Vec3& p) {
  constexpr double eps = 1e-9;
  PolarCoord c;
  c.d = std::sqrt(p.x * p.x + p.y * p.y);
  c.z = p.z;
  if (c.d < eps) {
    c.sin_theta = 0.0;
    c.cos_theta = 1.0;
  } else {
    c.sin_theta = p.y / c.d;
    c.cos_theta = p.x / c.d;
  }
  return c;
}

namespace {

Vec3 unit_axis(Axis a) {
  switch (a) {
    case Axis::X: return {1, 0, 0};
    case Axis::Y: return {0, 1, 0};
    case Axis::Z: return {0, 0, 1};
  }
  throw ConfigError("unknown axis");
}

Mat3 axis_rotation(Axis a, double angle) {
  switch (a) {
    case Axis::X: return rotation_x(angle);
    case Axis::Y: return rotation_y(angle);
    case Axis::Z: return rotation_z(angle);
  }
  throw ConfigError("unknown axis");
}

}  // namespace

CameraRig perturb_rig(const CameraRig& rig, const PerturbSpec& spec, Rng& rng) {
  if (spec.sigma < 0) throw ConfigError("perturb_rig: sigma must be >= 0");
  CameraRig out = rig;
  for (auto& cam : out.cameras) {
    const double delta = rng.gaussian() * spec.sigma;
    if (delta == 0.0) continue;  // sigma == 0 must return the rig bit-for-bit
    if (spec.kind == PerturbKind::Rotation) {
      cam.rotation = cam.rotation * axis_rotation(spec.axis, delta);
    } else {
      const Vec3 e = unit_axis(spec.axis);
      const Vec3 offset_cam = {e.x * delta, e.y * delta, e.z * delta};
      const Vec3 offset = (spec.frame == TranslationFrame::Camera)
                              ? cam.rotation * offset_cam
                              : offset_cam;
      cam.translation = cam.translation + offset;
    }
  }
  return out;
}

CameraRig load_rig_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("load_rig_json: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("load_rig_json: parse error: ") + e.what());
  }
  if (!j.contains("cameras") || !j["cameras"].is_array())
    throw ConfigError("load_rig_json: missing cameras array");
  CameraRig rig;
  for (const auto& jc : j["cameras"]) {
    CameraModel cam;
    const auto ji = jc.at("intrinsics");
    const auto jr = jc.at("rotation");
    const auto jt = jc.at("translation");
    if (ji.size() != 9 || jr.size() != 9 || jt.size() != 3)
      throw ConfigError("load_rig_json: bad matrix sizes");
    for (std::size_t i = 0; i < 9; ++i) {
      cam.intrinsics.m[i] = ji[i].get<double>();
      cam.rotation.m[i] = jr[i].get<double>();
    }
    cam.translation = {jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>()};
    cam.validate_and_cache();
    rig.cameras.push_back(cam);
    rig.names.push_back(jc.at("name").get<std::string>());
  }
  rig.validate();
  return rig;
}

void save_rig_json(const std::string& path, const CameraRig& rig) {
  nlohmann::json j;
  j["cameras"] = nlohmann::json::array();
  for (std::size_t n = 0; n < rig.cameras.size(); ++n) {
    const auto& cam = rig.cameras[n];
    nlohmann::json jc;
    jc["name"] = rig.names[n];
    jc["intrinsics"] = cam.intrinsics.m;
    jc["rotation"] = cam.rotation.m;
    jc["translation"] = {cam.translation.x, cam.translation.y, cam.translation.z};
    j["cameras"].push_back(jc);
  }
  std::ofstream f(path);
  if (!f) throw ConfigError("save_rig_json: cannot open " + path);
  f << j.dump(2) << "\n";
}

const char* axis_name(Axis a) {
  switch (a) {
    case Axis::X: return "x";
    case Axis::Y: return "y";
    case Axis::Z: return "z";
  }
  return "?";
}

const char* perturb_kind_name(PerturbKind k) {
  return k == PerturbKind::Rotation ? "rot" : "trans";
}

}  // namespace bvt
