#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace codesign {

using Vec2 = Eigen::Vector2d;

inline constexpr int kNumLinks = 3;
inline constexpr int kNumJoints = 2;
inline constexpr int kDesignDim = kNumLinks + kNumJoints;

// Capsule radius shared by every 2D tool.
inline constexpr double kToolRadius = 0.1;

// Design-phase action: link lengths (world units) and relative joint angles
// (radians, link i+1 relative to link i).
struct DesignVector {
  std::array<double, kNumLinks> lengths{};
  std::array<double, kNumJoints> angles{};

  bool operator==(const DesignVector&) const = default;
};

// Per-field box bounds for a design vector.
struct DesignBounds {
  std::array<double, kNumLinks> length_min{};
  std::array<double, kNumLinks> length_max{};
  double angle_min = 0.0;
  double angle_max = 0.0;

  // Multiplicative reading of the tuning tables: a link may range over
  // init * (1 + ratio), angles over ratio * scale (degrees).
  static DesignBounds from_ratios(const std::array<double, kNumLinks>& length_init,
                                  const std::array<double, 2>& length_ratio,
                                  const std::array<double, 2>& angle_ratio,
                                  double angle_scale_deg);

  double max_total_length() const;
  bool well_ordered() const;
};

struct Capsule {
  Vec2 start = Vec2::Zero();
  Vec2 end = Vec2::Zero();
  double radius = kToolRadius;
};

// A rigid tool in its local frame. The anchor is the grasp point the
// controller actuates.
struct ToolGeometry {
  std::vector<Capsule> segments;
  Vec2 anchor = Vec2::Zero();
};

struct MaterialReport {
  double d_used = 0.0;
  double d_max = 0.0;
};

DesignVector clamp_design(const DesignVector& raw, const DesignBounds& bounds);

// Forward kinematics of the link chain: the first link leaves the anchor
// along +x, each following link is rotated by its relative angle.
ToolGeometry build_tool(const DesignVector& design, double radius = kToolRadius);

// d_max is the sum of the per-link upper bounds.
MaterialReport material_length(const DesignVector& design, const DesignBounds& bounds);

// Rigid transform of a tool into the world frame.
ToolGeometry transform_tool(const ToolGeometry& tool, const Vec2& position, double angle);

// Binary STL of the tool, each link extruded into a rectangular prism of
// width 2*radius and height `thickness`. Throws std::invalid_argument on a
// zero-length link or non-positive thickness.
std::string export_stl(const ToolGeometry& geometry, double thickness);

inline constexpr std::size_t kStlHeaderBytes = 80;
inline constexpr std::size_t kStlTriangleBytes = 50;

// Durable link between a policy output and a fabricated tool.
struct DesignRecord {
  std::string task;
  std::vector<double> goal;
  DesignVector design;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const DesignRecord& record);
DesignRecord design_record_from_json(const nlohmann::json& j);

}  // namespace codesign
