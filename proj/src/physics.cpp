#include "codesign/physics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace codesign {

ToolGeometry World::tool_in_world(const Body& tool) const {
  return transform_tool(tool.geometry, tool.position, tool.angle);
}

double segment_distance(const Vec2& p, const Vec2& a, const Vec2& b, Vec2* closest) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  const Vec2 q = a + t * ab;
  if (closest != nullptr) *closest = q;
  return (p - q).norm();
}

std::optional<Contact> circle_capsule_contact(const Vec2& center, double r, const Capsule& capsule) {
  Vec2 q;
  const double dist = segment_distance(center, capsule.start, capsule.end, &q);
  const double reach = r + capsule.radius;
  if (!(dist < reach)) return std::nullopt;
  Contact c;
  if (dist > 1e-12) {
    c.normal = (center - q) / dist;
  } else {
    // Center on the segment axis: push out along the segment's left normal.
    Vec2 d = capsule.end - capsule.start;
    if (d.squaredNorm() == 0.0) d = Vec2::UnitX();
    c.normal = Vec2(-d.y(), d.x()).normalized();
  }
  c.depth = reach - dist;
  c.point = q + capsule.radius * c.normal;
  return c;
}

std::optional<Contact> circle_circle_contact(const Vec2& center, double r, const Vec2& other,
                                             double other_r) {
  const Vec2 d = center - other;
  const double dist = d.norm();
  const double reach = r + other_r;
  if (!(dist < reach)) return std::nullopt;
  Contact c;
  c.normal = dist > 1e-12 ? Vec2(d / dist) : Vec2(Vec2::UnitY());
  c.depth = reach - dist;
  c.point = other + other_r * c.normal;
  return c;
}

void integrate(World& world) {
  const double dt = world.dt;
  for (auto& b : world.bodies) {
    switch (b.kind) {
      case BodyKind::dynamic_circle: {
        b.velocity += world.gravity * dt;
        if (b.linear_damping > 0.0) b.velocity /= (1.0 + dt * b.linear_damping);
        const double speed = b.velocity.norm();
        if (speed > world.max_speed) b.velocity *= world.max_speed / speed;
        b.position += b.velocity * dt;
        break;
      }
      case BodyKind::kinematic_tool:
        b.position += b.velocity * dt;
        b.angle += b.angular_velocity * dt;
        break;
      case BodyKind::static_segment:
        break;
    }
  }
}

namespace {

struct ContactPair {
  int a = -1;  // dynamic circle
  int b = -1;  // other body (dynamic circle, tool or static)
  bool b_dynamic = false;
  Contact contact;
  Vec2 surface_velocity = Vec2::Zero();  // of b at the contact point when b is not dynamic
  double inv_mass_sum = 0.0;
  double target_vn = 0.0;
  double jn = 0.0;
  double jt = 0.0;
};

Vec2 relative_velocity(const World& w, const ContactPair& p) {
  const Vec2 vb = p.b_dynamic ? w.bodies[p.b].velocity : p.surface_velocity;
  return w.bodies[p.a].velocity - vb;
}

void apply_impulse(World& w, const ContactPair& p, const Vec2& impulse) {
  auto& a = w.bodies[p.a];
  a.velocity += impulse / a.mass;
  if (p.b_dynamic) {
    auto& b = w.bodies[p.b];
    b.velocity -= impulse / b.mass;
  }
}

}  // namespace

void resolve_contacts(World& world) {
  auto& bodies = world.bodies;
  const int n = static_cast<int>(bodies.size());

  std::vector<std::pair<int, ToolGeometry>> tools;
  for (int k = 0; k < n; ++k) {
    if (bodies[k].kind == BodyKind::kinematic_tool) tools.emplace_back(k, world.tool_in_world(bodies[k]));
  }

  std::vector<ContactPair> pairs;
  for (int i = 0; i < n; ++i) {
    const Body& a = bodies[i];
    if (a.kind != BodyKind::dynamic_circle) continue;
    const double inv_a = 1.0 / a.mass;

    for (const auto& [k, geom] : tools) {
      const Body& tool = bodies[k];
      for (const auto& cap : geom.segments) {
        if (auto c = circle_capsule_contact(a.position, a.radius, cap)) {
          ContactPair p;
          p.a = i;
          p.b = k;
          p.contact = *c;
          const Vec2 r = c->point - tool.position;
          p.surface_velocity = tool.velocity + tool.angular_velocity * Vec2(-r.y(), r.x());
          p.inv_mass_sum = inv_a;
          pairs.push_back(p);
        }
      }
    }
    for (int k = 0; k < n; ++k) {
      const Body& s = bodies[k];
      if (s.kind != BodyKind::static_segment) continue;
      for (const auto& cap : s.geometry.segments) {
        if (auto c = circle_capsule_contact(a.position, a.radius, cap)) {
          ContactPair p;
          p.a = i;
          p.b = k;
          p.contact = *c;
          p.inv_mass_sum = inv_a;
          pairs.push_back(p);
        }
      }
    }
    for (int j = i + 1; j < n; ++j) {
      const Body& o = bodies[j];
      if (o.kind != BodyKind::dynamic_circle) continue;
      if (auto c = circle_circle_contact(a.position, a.radius, o.position, o.radius)) {
        ContactPair p;
        p.a = i;
        p.b = j;
        p.b_dynamic = true;
        p.contact = *c;
        p.inv_mass_sum = inv_a + 1.0 / o.mass;
        pairs.push_back(p);
      }
    }
  }
  if (pairs.empty()) return;

  for (auto& p : pairs) {
    const double e = p.b_dynamic ? world.circle_restitution : world.restitution;
    const double vn0 = relative_velocity(world, p).dot(p.contact.normal);
    p.target_vn = e * std::max(0.0, -vn0);
  }

  for (int it = 0; it < world.velocity_iterations; ++it) {
    for (auto& p : pairs) {
      const Vec2& nrm = p.contact.normal;
      const double vn = relative_velocity(world, p).dot(nrm);
      double dj = (p.target_vn - vn) / p.inv_mass_sum;
      const double jn_new = std::max(p.jn + dj, 0.0);
      dj = jn_new - p.jn;
      p.jn = jn_new;
      apply_impulse(world, p, dj * nrm);

      if (world.friction > 0.0) {
        const Vec2 tan(-nrm.y(), nrm.x());
        const double vt = relative_velocity(world, p).dot(tan);
        const double limit = world.friction * p.jn;
        const double jt_new = std::clamp(p.jt - vt / p.inv_mass_sum, -limit, limit);
        const double djt = jt_new - p.jt;
        p.jt = jt_new;
        apply_impulse(world, p, djt * tan);
      }
    }
  }

  for (const auto& p : pairs) {
    const double corr = world.baumgarte * std::max(p.contact.depth - world.slop, 0.0);
    if (corr <= 0.0) continue;
    auto& a = bodies[p.a];
    const Vec2 shift = corr / p.inv_mass_sum * p.contact.normal;
    a.position += shift / a.mass;
    if (p.b_dynamic) {
      auto& b = bodies[p.b];
      b.position -= shift / b.mass;
    }
  }
}

void step(World& world) {
  integrate(world);
  resolve_contacts(world);
}

namespace {

void capsule_top(const Capsule& c, double x, std::optional<double>& best) {
  auto consider = [&](double y) {
    if (!best || y > *best) best = y;
  };
  const double r = c.radius;
  for (const Vec2* e : {&c.start, &c.end}) {
    const double dx = x - e->x();
    if (std::abs(dx) <= r) consider(e->y() + std::sqrt(r * r - dx * dx));
  }
  const Vec2 d = c.end - c.start;
  if (std::abs(d.x()) < 1e-15) return;
  const Vec2 nrm = Vec2(-d.y(), d.x()).normalized();
  for (double side : {1.0, -1.0}) {
    const Vec2 p0 = c.start + side * r * nrm;
    const double t = (x - p0.x()) / d.x();
    if (t >= 0.0 && t <= 1.0) consider(p0.y() + t * d.y());
  }
}

}  // namespace

std::optional<double> raycast_down(const ToolGeometry& geometry, double x) {
  std::optional<double> best;
  for (const auto& c : geometry.segments) capsule_top(c, x, best);
  return best;
}

std::optional<double> raycast_down(const World& world, double x) {
  std::optional<double> best;
  for (const auto& b : world.bodies) {
    if (b.kind == BodyKind::kinematic_tool) {
      for (const auto& c : world.tool_in_world(b).segments) capsule_top(c, x, best);
    } else if (b.kind == BodyKind::static_segment) {
      for (const auto& c : b.geometry.segments) capsule_top(c, x, best);
    }
  }
  return best;
}

double kinetic_energy(const World& world) {
  double e = 0.0;
  for (const auto& b : world.bodies) {
    if (b.kind == BodyKind::dynamic_circle) e += 0.5 * b.mass * b.velocity.squaredNorm();
  }
  return e;
}

TraceWriter::TraceWriter(std::ostream& os) : os_(os) { os_ << "step,body_id,x,y,vx,vy\n"; }

void TraceWriter::write(int step, const World& world) {
  char buf[192];
  for (std::size_t i = 0; i < world.bodies.size(); ++i) {
    const auto& b = world.bodies[i];
    std::snprintf(buf, sizeof buf, "%d,%zu,%.9g,%.9g,%.9g,%.9g\n", step, i, b.position.x(),
                  b.position.y(), b.velocity.x(), b.velocity.y());
    os_ << buf;
  }
}

}  // namespace codesign
