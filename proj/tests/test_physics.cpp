#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "codesign/physics.hpp"

using namespace codesign;

namespace {

Body circle(const Vec2& p, double r, const Vec2& v = Vec2::Zero()) {
  Body b;
  b.kind = BodyKind::dynamic_circle;
  b.position = p;
  b.velocity = v;
  b.radius = r;
  return b;
}

Body tool_body(const DesignVector& d, const Vec2& at) {
  Body b;
  b.kind = BodyKind::kinematic_tool;
  b.position = at;
  b.geometry = build_tool(d);
  return b;
}

// Minimum distance from p to 1e5 evenly spaced points on [a, b].
double sampled_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  double best = 1e300;
  const int n = 100000;
  for (int i = 0; i <= n; ++i) {
    const Vec2 q = a + (b - a) * (static_cast<double>(i) / n);
    best = std::min(best, (p - q).norm());
  }
  return best;
}

}  // namespace

TEST_CASE("circle_capsule_contact examples") {
  const Capsule cap{Vec2(-1, 0), Vec2(1, 0), 0.1};
  CHECK_FALSE(circle_capsule_contact(Vec2(0, 2), 0.5, cap).has_value());
  const auto c = circle_capsule_contact(Vec2(0, 0.5), 0.5, cap);
  REQUIRE(c.has_value());
  CHECK(c->normal.x() == doctest::Approx(0.0));
  CHECK(c->normal.y() == doctest::Approx(1.0));
  CHECK(c->depth == doctest::Approx(0.1));
  // Normal points from the capsule toward the centre, also below and past the ends.
  const auto below = circle_capsule_contact(Vec2(0, -0.3), 0.5, cap);
  REQUIRE(below.has_value());
  CHECK(below->normal.y() == doctest::Approx(-1.0));
  const auto end = circle_capsule_contact(Vec2(1.3, 0.0), 0.5, cap);
  REQUIRE(end.has_value());
  CHECK(end->normal.x() == doctest::Approx(1.0));
}

TEST_CASE("contact decisions agree with dense sampling") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> ur(0.05, 1.0);
  int agree = 0, total = 0;
  for (int k = 0; k < 2000; ++k) {
    const Capsule cap{Vec2(u(rng), u(rng)), Vec2(u(rng), u(rng)), 0.1};
    const Vec2 p(u(rng), u(rng));
    const double r = ur(rng);
    const double oracle = sampled_distance(p, cap.start, cap.end);
    const double reach = r + cap.radius;
    const auto c = circle_capsule_contact(p, r, cap);
    // Skip pairs whose decision the oracle's own resolution cannot settle.
    if (std::abs(oracle - reach) < 1e-3) continue;
    ++total;
    const bool oracle_contact = oracle < reach;
    if (c.has_value() == oracle_contact) ++agree;
    if (c && oracle_contact) CHECK(std::abs(c->depth - (reach - oracle)) < 1e-3);
    CHECK(std::abs(segment_distance(p, cap.start, cap.end) - oracle) < 1e-3);
  }
  CHECK(agree == total);
}

TEST_CASE("circle_circle_contact") {
  CHECK_FALSE(circle_circle_contact(Vec2(0, 0), 0.5, Vec2(2, 0), 0.5).has_value());
  const auto c = circle_circle_contact(Vec2(0, 0), 0.5, Vec2(0.8, 0), 0.5);
  REQUIRE(c.has_value());
  CHECK(c->normal.x() == doctest::Approx(-1.0));
  CHECK(c->depth == doctest::Approx(0.2));
}

TEST_CASE("integrate") {
  SUBCASE("ballistic closed form") {
    World w;
    w.gravity = Vec2(0, -10);
    w.dt = 0.01;
    w.max_speed = 1e9;
    w.bodies.push_back(circle(Vec2(0, 0), 0.5));
    for (int i = 0; i < 100; ++i) integrate(w);
    CHECK(w.bodies[0].velocity.y() == doctest::Approx(-10.0).epsilon(1e-12));
    CHECK(w.bodies[0].position.y() == doctest::Approx(-5.05).epsilon(1e-12));
  }
  SUBCASE("fixed point") {
    World w;
    w.bodies.push_back(circle(Vec2(1, 2), 0.5));
    const World before = w;
    for (int i = 0; i < 10; ++i) step(w);
    CHECK(w.bodies[0].position == before.bodies[0].position);
    CHECK(w.bodies[0].velocity == before.bodies[0].velocity);
  }
  SUBCASE("kinematic translation") {
    World w;
    w.dt = 0.01;
    Body t = tool_body({{1, 1, 1}, {0, 0}}, Vec2(0, 0));
    t.velocity = Vec2(1, 0);
    w.bodies.push_back(t);
    for (int i = 0; i < 10; ++i) integrate(w);
    CHECK(w.bodies[0].position.x() == doctest::Approx(0.1).epsilon(1e-12));
  }
}

TEST_CASE("resolve_contacts") {
  SUBCASE("inelastic landing on a horizontal tool") {
    World w;
    w.gravity = Vec2(0, -10);
    w.restitution = 0.0;
    w.bodies.push_back(tool_body({{2, 2, 2}, {0, 0}}, Vec2(0, 0)));
    w.bodies.push_back(circle(Vec2(3, 2), 0.4));
    for (int i = 0; i < 300; ++i) step(w);
    const Body& b = w.bodies[1];
    CHECK(std::abs(b.velocity.y()) < 1e-6);
    CHECK(b.position.y() == doctest::Approx(0.5).epsilon(0.02));
    // Kinematic body is untouched by contacts.
    CHECK(w.bodies[0].velocity == Vec2::Zero());
    CHECK(w.bodies[0].position == Vec2::Zero());
  }
  SUBCASE("elastic head-on exchange") {
    World w;
    w.circle_restitution = 1.0;
    w.friction = 0.0;
    w.bodies.push_back(circle(Vec2(0, 0), 0.5, Vec2(1, 0)));
    w.bodies.push_back(circle(Vec2(0.99, 0), 0.5, Vec2(-1, 0)));
    resolve_contacts(w);
    CHECK(w.bodies[0].velocity.x() == doctest::Approx(-1.0));
    CHECK(w.bodies[1].velocity.x() == doctest::Approx(1.0));
    CHECK(std::abs(w.bodies[0].velocity.y()) < 1e-12);
  }
  SUBCASE("moving tool keeps its commanded velocity") {
    World w;
    w.gravity = Vec2(0, -10);
    Body t = tool_body({{2, 2, 2}, {0.4, -0.4}}, Vec2(0, 0));
    t.velocity = Vec2(2.0, 0.5);
    t.angular_velocity = 0.3;
    w.bodies.push_back(t);
    for (int i = 0; i < 5; ++i) w.bodies.push_back(circle(Vec2(1.0 + i, 0.45), 0.4));
    for (int i = 0; i < 100; ++i) {
      step(w);
      CHECK(w.bodies[0].velocity == Vec2(2.0, 0.5));
      CHECK(w.bodies[0].angular_velocity == 0.3);
    }
  }
}

TEST_CASE("ball settles in a V-shaped tool") {
  World w;
  w.gravity = Vec2(0, -10);
  // Down-right, then up-right: a V with its vertex between links 1 and 2.
  Body t;
  t.kind = BodyKind::kinematic_tool;
  t.position = Vec2(0, 0);
  t.geometry.segments = {{Vec2(-2, 2), Vec2(0, 0), 0.1}, {Vec2(0, 0), Vec2(2, 2), 0.1}};
  w.bodies.push_back(t);
  w.bodies.push_back(circle(Vec2(-1.2, 3.0), 0.4));
  for (int i = 0; i < 500; ++i) step(w);
  CHECK(w.bodies[1].velocity.norm() < 1e-2);
  CHECK(std::abs(w.bodies[1].position.x()) < 0.05);
}

TEST_CASE("no tunneling at the speed cap") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ang(0.0, std::numbers::pi);
  const double dt = 1.0 / 60.0;
  for (double r : {0.25, 0.4, 0.5}) {
    for (int k = 0; k < 300; ++k) {
      World w;
      w.dt = dt;
      w.bodies.push_back(tool_body({{3, 3, 3}, {0, 0}}, Vec2(-4.5, 0)));
      // Approach the segment from above at the cap speed in a random downward direction.
      const double a = ang(rng);
      const Vec2 v = -w.max_speed * Vec2(std::cos(a), std::sin(a));
      const double start = std::uniform_real_distribution<double>(r + 0.1, r + 0.1 + w.max_speed * dt)(rng);
      w.bodies.push_back(circle(Vec2(0, start), r, v));
      for (int i = 0; i < 5; ++i) {
        step(w);
        CHECK(w.bodies[1].position.y() > 0.0);
      }
    }
  }
}

TEST_CASE("kinetic energy does not grow in inelastic contacts") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    World w;
    w.gravity = Vec2(0, -10);
    w.restitution = 0.0;
    w.circle_restitution = 0.0;
    w.bodies.push_back(tool_body({{2, 2, 2}, {0.3 * u(rng), 0.3 * u(rng)}}, Vec2(-3, 0)));
    for (int i = 0; i < 4; ++i) {
      w.bodies.push_back(circle(Vec2(2 * u(rng), 0.6 + 0.5 * u(rng)), 0.3, Vec2(3 * u(rng), 3 * u(rng))));
    }
    for (int s = 0; s < 20; ++s) {
      integrate(w);
      const double before = kinetic_energy(w);
      resolve_contacts(w);
      CHECK(kinetic_energy(w) <= before * (1.0 + 1e-6) + 1e-12);
    }
  }
}

TEST_CASE("raycast_down") {
  World w;
  Body s;
  s.kind = BodyKind::static_segment;
  s.geometry.segments = {{Vec2(-1, 0), Vec2(1, 0), 0.1}};
  w.bodies.push_back(s);
  const auto hit = raycast_down(w, 0.0);
  REQUIRE(hit.has_value());
  CHECK(*hit == doctest::Approx(0.1));
  CHECK_FALSE(raycast_down(w, 5.0).has_value());

  SUBCASE("agreement with dense sampling") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int k = 0; k < 300; ++k) {
      const Capsule cap{Vec2(u(rng), u(rng)), Vec2(u(rng), u(rng)), 0.1};
      ToolGeometry g;
      g.segments = {cap};
      const double x = u(rng);
      // Oracle: highest point of the capsule over a dense grid of its boundary.
      std::optional<double> best;
      const int n = 20000;
      for (int i = 0; i <= n; ++i) {
        const Vec2 q = cap.start + (cap.end - cap.start) * (static_cast<double>(i) / n);
        const double dx = x - q.x();
        if (std::abs(dx) <= cap.radius) {
          const double y = q.y() + std::sqrt(cap.radius * cap.radius - dx * dx);
          if (!best || y > *best) best = y;
        }
      }
      const auto got = raycast_down(g, x);
      if (best.has_value() && got.has_value()) {
        CHECK(std::abs(*best - *got) < 1e-3);
      } else if (best.has_value() != got.has_value()) {
        // Only grazing rays may disagree on existence.
        const double d = segment_distance(Vec2(x, 0), Vec2(cap.start.x(), 0), Vec2(cap.end.x(), 0));
        CHECK(std::abs(d - cap.radius) < 1e-3);
      }
    }
  }
}

TEST_CASE("stepping is deterministic") {
  auto run = [] {
    World w;
    w.gravity = Vec2(0, -10);
    Body t = tool_body({{2, 2, 2}, {0.5, -0.3}}, Vec2(0, 0));
    t.velocity = Vec2(0.7, 0.0);
    w.bodies.push_back(t);
    for (int i = 0; i < 6; ++i) w.bodies.push_back(circle(Vec2(0.5 + 0.8 * i, 2.0 + 0.3 * i), 0.3));
    std::ostringstream os;
    TraceWriter trace(os);
    for (int s = 0; s < 200; ++s) {
      step(w);
      trace.write(s, w);
    }
    return os.str();
  };
  const std::string a = run();
  CHECK(a == run());
  CHECK(a.rfind("step,body_id,x,y,vx,vy\n", 0) == 0);
}
