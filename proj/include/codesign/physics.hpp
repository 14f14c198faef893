#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "codesign/geometry.hpp"

namespace codesign {

enum class BodyKind { kinematic_tool, dynamic_circle, static_segment };

// A simulated body. Kinematic tools are driven purely by their commanded
// velocity; static segments carry one world-frame capsule in `geometry`.
struct Body {
  BodyKind kind = BodyKind::dynamic_circle;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
  double angle = 0.0;
  double angular_velocity = 0.0;
  double radius = 0.0;
  double mass = 1.0;
  // Fraction of velocity lost per second (top-down ground friction).
  double linear_damping = 0.0;
  ToolGeometry geometry;
};

struct Contact {
  Vec2 normal = Vec2::UnitY();  // unit, from the other shape toward the circle
  double depth = 0.0;
  Vec2 point = Vec2::Zero();
};

struct World {
  std::vector<Body> bodies;
  Vec2 gravity = Vec2::Zero();
  double dt = 1.0 / 60.0;
  double restitution = 0.0;         // circle vs tool / static
  double circle_restitution = 0.1;  // circle vs circle
  double friction = 0.3;
  int velocity_iterations = 4;
  double baumgarte = 0.2;
  double slop = 0.005;
  // Speed cap for dynamic circles. A circle of radius r moving at most this
  // fast relative to a capsule of radius rc cannot cross it in one step as
  // long as max_speed * dt < r + rc.
  double max_speed = 20.0;

  // World-frame capsules of a kinematic tool (cached per call).
  ToolGeometry tool_in_world(const Body& tool) const;
};

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, Vec2* closest = nullptr);

std::optional<Contact> circle_capsule_contact(const Vec2& center, double r, const Capsule& capsule);
std::optional<Contact> circle_circle_contact(const Vec2& center, double r, const Vec2& other,
                                             double other_r);

// Semi-implicit Euler: v += g dt (dynamic), x += v dt; kinematic bodies move
// by their commanded velocities exactly.
void integrate(World& world);

// Contact detection at current poses, sequential normal/friction impulses
// with the tool treated as infinite mass, then Baumgarte positional
// correction of circles.
void resolve_contacts(World& world);

// integrate + resolve_contacts.
void step(World& world);

// Highest tool or static surface under the vertical line at x.
std::optional<double> raycast_down(const World& world, double x);
// Same query against one world-frame tool.
std::optional<double> raycast_down(const ToolGeometry& geometry, double x);

double kinetic_energy(const World& world);

// Per-step trace in CSV: step, body_id, x, y, vx, vy.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& os);
  void write(int step, const World& world);

 private:
  std::ostream& os_;
};

}  // namespace codesign
