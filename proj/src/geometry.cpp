#include "codesign/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <stdexcept>

namespace codesign {

DesignBounds DesignBounds::from_ratios(const std::array<double, kNumLinks>& length_init,
                                       const std::array<double, 2>& length_ratio,
                                       const std::array<double, 2>& angle_ratio,
                                       double angle_scale_deg) {
  DesignBounds b;
  for (int i = 0; i < kNumLinks; ++i) {
    b.length_min[i] = length_init[i] * (1.0 + length_ratio[0]);
    b.length_max[i] = length_init[i] * (1.0 + length_ratio[1]);
  }
  const double scale = angle_scale_deg * std::numbers::pi / 180.0;
  b.angle_min = angle_ratio[0] * scale;
  b.angle_max = angle_ratio[1] * scale;
  return b;
}

double DesignBounds::max_total_length() const {
  double total = 0.0;
  for (double l : length_max) total += l;
  return total;
}

bool DesignBounds::well_ordered() const {
  for (int i = 0; i < kNumLinks; ++i) {
    if (!(length_min[i] > 0.0 && length_min[i] < length_max[i])) return false;
  }
  return angle_min < angle_max;
}

DesignVector clamp_design(const DesignVector& raw, const DesignBounds& bounds) {
  DesignVector out;
  for (int i = 0; i < kNumLinks; ++i) {
    out.lengths[i] = std::clamp(raw.lengths[i], bounds.length_min[i], bounds.length_max[i]);
  }
  for (int j = 0; j < kNumJoints; ++j) {
    out.angles[j] = std::clamp(raw.angles[j], bounds.angle_min, bounds.angle_max);
  }
  return out;
}

ToolGeometry build_tool(const DesignVector& design, double radius) {
  ToolGeometry tool;
  tool.anchor = Vec2::Zero();
  tool.segments.reserve(kNumLinks);
  Vec2 joint = tool.anchor;
  double heading = 0.0;
  for (int i = 0; i < kNumLinks; ++i) {
    if (i > 0) heading += design.angles[i - 1];
    Capsule c;
    c.start = joint;
    c.end = joint + design.lengths[i] * Vec2(std::cos(heading), std::sin(heading));
    c.radius = radius;
    tool.segments.push_back(c);
    joint = c.end;
  }
  return tool;
}

MaterialReport material_length(const DesignVector& design, const DesignBounds& bounds) {
  MaterialReport r;
  for (double l : design.lengths) r.d_used += l;
  r.d_max = bounds.max_total_length();
  return r;
}

ToolGeometry transform_tool(const ToolGeometry& tool, const Vec2& position, double angle) {
  const Eigen::Rotation2Dd rot(angle);
  ToolGeometry out;
  out.anchor = rot * tool.anchor + position;
  out.segments.reserve(tool.segments.size());
  for (const auto& s : tool.segments) {
    out.segments.push_back({rot * s.start + position, rot * s.end + position, s.radius});
  }
  return out;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof bits);
  put_u32(out, bits);
}

using Vec3 = Eigen::Vector3d;

void put_triangle(std::string& out, const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  if (len > 0.0) n /= len;
  for (const Vec3* v : std::array<const Vec3*, 4>{&n, &a, &b, &c}) {
    for (int k = 0; k < 3; ++k) put_f32(out, (*v)[k]);
  }
  out.push_back('\0');
  out.push_back('\0');
}

// Twelve outward-facing triangles of a box given its 8 corners: indices 0-3
// are the bottom face counter-clockwise seen from above, 4-7 the top face.
void put_prism(std::string& out, const std::array<Vec3, 8>& v) {
  static constexpr int kFaces[12][3] = {
      {0, 2, 1}, {0, 3, 2},  // bottom (normal -z)
      {4, 5, 6}, {4, 6, 7},  // top (+z)
      {0, 1, 5}, {0, 5, 4},  // side 0-1
      {1, 2, 6}, {1, 6, 5},  // side 1-2
      {2, 3, 7}, {2, 7, 6},  // side 2-3
      {3, 0, 4}, {3, 4, 7},  // side 3-0
  };
  for (const auto& f : kFaces) put_triangle(out, v[f[0]], v[f[1]], v[f[2]]);
}

}  // namespace

std::string export_stl(const ToolGeometry& geometry, double thickness) {
  if (!(thickness > 0.0)) throw std::invalid_argument("export_stl: thickness must be positive");
  for (std::size_t i = 0; i < geometry.segments.size(); ++i) {
    const auto& s = geometry.segments[i];
    if ((s.end - s.start).norm() <= 0.0) {
      throw std::invalid_argument("export_stl: segment " + std::to_string(i) + " has zero length");
    }
  }

  std::string out;
  const auto n_tri = static_cast<std::uint32_t>(12 * geometry.segments.size());
  out.reserve(kStlHeaderBytes + 4 + n_tri * kStlTriangleBytes);
  std::string header = "codesign binary tool mesh";
  header.resize(kStlHeaderBytes, ' ');
  out += header;
  put_u32(out, n_tri);

  for (const auto& s : geometry.segments) {
    const Vec2 dir = (s.end - s.start).normalized();
    const Vec2 normal(-dir.y(), dir.x());
    const Vec2 off = s.radius * normal;
    // Counter-clockwise footprint seen from +z.
    const std::array<Vec2, 4> foot = {s.start - off, s.end - off, s.end + off, s.start + off};
    std::array<Vec3, 8> v;
    for (int k = 0; k < 4; ++k) {
      v[k] = Vec3(foot[k].x(), foot[k].y(), 0.0);
      v[k + 4] = Vec3(foot[k].x(), foot[k].y(), thickness);
    }
    put_prism(out, v);
  }
  return out;
}

nlohmann::json to_json(const DesignRecord& record) {
  nlohmann::json j;
  j["task"] = record.task;
  j["goal"] = record.goal;
  j["lengths"] = record.design.lengths;
  j["angles_rad"] = record.design.angles;
  j["seed"] = record.seed;
  return j;
}

DesignRecord design_record_from_json(const nlohmann::json& j) {
  DesignRecord r;
  r.task = j.at("task").get<std::string>();
  r.goal = j.at("goal").get<std::vector<double>>();
  r.design.lengths = j.at("lengths").get<std::array<double, kNumLinks>>();
  r.design.angles = j.at("angles_rad").get<std::array<double, kNumJoints>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

}  // namespace codesign
