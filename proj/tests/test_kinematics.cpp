#include <cmath>
#include <random>
#include <stdexcept>

#include "criticality_suite.hpp"
#include "doctest.h"
#include "urfclust/kinematics.hpp"

using namespace urfclust::kinematics;

namespace {

OrientedRect square(double x, double y, double heading = 0.0) { return {{x, y}, heading, 0.5, 0.5}; }

// Euler integration with the same no-reversing rule.
VehicleState euler(VehicleState s, double dt, double step = 1e-3) {
  const int n = static_cast<int>(std::lround(dt / step));
  for (int i = 0; i < n; ++i) {
    const double v = s.velocity;
    double v_next = std::max(0.0, v + s.acceleration * step);
    // average of the two velocities, valid unless the stop happens inside this step
    double ds = 0.5 * (v + v_next) * step;
    if (v + s.acceleration * step < 0.0) ds = v * v / (2.0 * -s.acceleration);
    s.position = s.position + ds * Vec2{std::cos(s.orientation), std::sin(s.orientation)};
    s.velocity = v_next;
  }
  return s;
}

bool point_in_rect(Vec2 p, const OrientedRect& r, double eps = 1e-9) {
  const Vec2 d = p - r.center;
  const Vec2 u{std::cos(r.heading), std::sin(r.heading)};
  const Vec2 v{-u.y, u.x};
  return std::fabs(dot(d, u)) <= r.half_length + eps && std::fabs(dot(d, v)) <= r.half_width + eps;
}

// Brute-force overlap: sample each rectangle's closed area (boundary
// included) and test containment in the other.
bool sampled_overlap(const OrientedRect& a, const OrientedRect& b, int n = 60) {
  for (const auto* pair : {&a, &b}) {
    const OrientedRect& r = *pair;
    const OrientedRect& other = pair == &a ? b : a;
    const Vec2 u{std::cos(r.heading), std::sin(r.heading)};
    const Vec2 v{-u.y, u.x};
    for (int i = 0; i <= n; ++i)
      for (int j = 0; j <= n; ++j) {
        const double s = -r.half_length + 2.0 * r.half_length * i / n;
        const double t = -r.half_width + 2.0 * r.half_width * j / n;
        if (point_in_rect(r.center + s * u + t * v, other)) return true;
      }
  }
  return false;
}

ScenarioWindow random_window(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-12.0, 12.0), heading(0.0, 2 * suite::kPi), vel(0.0, 30.0),
      acc(-8.0, 3.0), len(1.5, 3.0), wid(0.7, 1.2);
  auto state = [&](Vec2 p) { return make_state(p, vel(rng), acc(rng), heading(rng), len(rng), wid(rng)); };
  ScenarioWindow w;
  w.ego_t0 = state({0, 0});
  w.target_t0 = state({pos(rng), pos(rng)});
  w.ego_t_minus2 = state({pos(rng), pos(rng)});
  w.target_t_minus2 = state({pos(rng), pos(rng)});
  return w;
}

}  // namespace

TEST_CASE("make_state validates and normalizes") {
  CHECK_THROWS_AS(make_state({0, 0}, -1, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_state({0, 0}, 1, 0, 0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(make_state({0, 0}, 1, 0, 0, 1.0, -1.0), std::invalid_argument);
  const auto s = make_state({0, 0}, 1, 0, -suite::kPi / 2);
  CHECK(s.orientation == doctest::Approx(3 * suite::kPi / 2));
  CHECK(normalize_angle(4 * suite::kPi) == doctest::Approx(0.0));
}

TEST_CASE("predict_pose examples") {
  const auto s = make_state({0, 0}, 10, 0, 0);
  const auto p = predict_pose(s, 0.3);
  CHECK(p.position.x == doctest::Approx(3.0));
  CHECK(p.position.y == doctest::Approx(0.0));

  const auto same = predict_pose(make_state({1, 2}, 7, 1.5, 1.0), 0.0);
  CHECK(same.position.x == 1.0);
  CHECK(same.position.y == 2.0);
  CHECK(same.velocity == 7.0);

  const auto braking = make_state({0, 0}, 2, -10, 0);
  const auto b = predict_pose(braking, 0.3);
  CHECK(b.velocity == 0.0);
  CHECK(b.position.x == doctest::Approx(0.2).epsilon(1e-12));
  const auto e = euler(braking, 0.3);
  CHECK(b.position.x == doctest::Approx(e.position.x).epsilon(1e-6));
  CHECK_THROWS(predict_pose(braking, -0.1));
}

TEST_CASE("predict_pose composes without a clamp and matches Euler stepping") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> v(3, 30), a(-2, 2), h(0, 6.28), t(0, 0.5);
  for (int i = 0; i < 500; ++i) {
    const auto s = make_state({v(rng), v(rng)}, v(rng), a(rng), h(rng));
    const double t1 = t(rng), t2 = t(rng);
    const auto direct = predict_pose(s, t1 + t2);
    const auto composed = predict_pose(predict_pose(s, t1), t2);
    CHECK(direct.position.x == doctest::Approx(composed.position.x).epsilon(1e-9));
    CHECK(direct.position.y == doctest::Approx(composed.position.y).epsilon(1e-9));
    CHECK(direct.velocity == doctest::Approx(composed.velocity).epsilon(1e-12));
  }
  for (int i = 0; i < 100; ++i) {
    const auto s = make_state({0, 0}, std::uniform_real_distribution<double>(0, 5)(rng),
                              std::uniform_real_distribution<double>(-12, 3)(rng), h(rng));
    const auto p = predict_pose(s, 0.3), e = euler(s, 0.3);
    CHECK(p.position.x == doctest::Approx(e.position.x).epsilon(1e-6));
    CHECK(p.position.y == doctest::Approx(e.position.y).epsilon(1e-6));
  }
}

TEST_CASE("polygons_overlap examples") {
  CHECK(polygons_overlap(square(0, 0), square(0, 0)));
  CHECK_FALSE(polygons_overlap(square(0, 0), square(10, 0)));
  CHECK(polygons_overlap(square(0, 0), square(1, 0)));
  CHECK(sampled_overlap(square(0, 0), square(1, 0)));
  CHECK_FALSE(polygons_overlap(square(0, 0), square(1.001, 0)));
  // Rotated diamond whose vertex sits just outside the square's edge.
  const double r = std::sqrt(0.5);
  CHECK_FALSE(polygons_overlap(square(0, 0), square(0.5 + r + 1e-6, 0, suite::kPi / 4)));
  CHECK(polygons_overlap(square(0, 0), square(0.5 + r - 1e-6, 0, suite::kPi / 4)));
}

TEST_CASE("polygons_overlap agrees with a sampled oracle and is symmetric") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> c(-3, 3), h(0, 6.28), e(0.2, 2.0);
  int agree_true = 0;
  for (int i = 0; i < 2000; ++i) {
    const OrientedRect a{{c(rng), c(rng)}, h(rng), e(rng), e(rng)};
    const OrientedRect b{{c(rng), c(rng)}, h(rng), e(rng), e(rng)};
    const bool sat = polygons_overlap(a, b);
    CHECK(sat == polygons_overlap(b, a));
    const double d = rect_distance(a, b);
    CHECK(d == doctest::Approx(rect_distance(b, a)).epsilon(1e-12));
    if (sampled_overlap(a, b, 30)) {
      CHECK(sat);
      ++agree_true;
    }
    if (!sat) CHECK(d > 0.0);
    if (d > 1e-6) CHECK_FALSE(sat);
    if (sat) CHECK(d == 0.0);
  }
  CHECK(agree_true > 200);
}

TEST_CASE("collision_predicted examples") {
  // head-on with a 1 m gap at 20 m/s closing: contact at 0.05 s
  const auto head_on = suite::window_at_t0(make_state({0, 0}, 10, 0, 0), make_state({5.5, 0}, 10, 0, suite::kPi));
  CHECK(collision_predicted(head_on));
  CHECK(polygons_overlap(footprint(predict_pose(head_on.ego_t0, 0.05)),
                         footprint(predict_pose(head_on.target_t0, 0.05))));
  const auto parallel = suite::window_at_t0(make_state({0, 0}, 20, 0, 0), make_state({0, 4.8}, 20, 0, 0));
  CHECK_FALSE(collision_predicted(parallel));
  const auto parked = suite::window_at_t0(make_state({0, 0}, 0, 0, 0), make_state({10, 0}, 0, 0, 0));
  CHECK_FALSE(collision_predicted(parked));
}

TEST_CASE("criticality suite reproduces the truth table") {
  for (const auto& c : suite::criticality_cases()) {
    INFO(c.name);
    CHECK(criticality_index(c.window) == c.expected);
    CHECK(criticality_index(swap_vehicles(c.window)) == c.expected);
  }
}

TEST_CASE("criticality second branch thresholds") {
  // d_rel = 0.2 m at the horizon with 5 and 3 m/s, no overlap
  const auto w = suite::window_at_t0(make_state({0, 0}, 5, 0, 0), make_state({0, 2.0}, 3, 0, 0));
  CHECK_FALSE(collision_predicted(w));
  CHECK(criticality_index(w) == 1);
  const auto far = suite::window_at_t0(make_state({0, 0}, 5, 0, 0), make_state({0, 6.8}, 3, 0, 0));
  CHECK(criticality_index(far) == 0);
}

TEST_CASE("prefilter examples") {
  // 100 m apart, closing at 1 m/s
  const auto far = suite::window_at_t0(make_state({0, 0}, 1, 0, 0), make_state({100, 0}, 0, 0, 0));
  CHECK(closing_speed(far) == doctest::Approx(1.0));
  CHECK_FALSE(prefilter(far));
  const auto near = suite::window_at_t0(make_state({0, 0}, 8, 0, 0), make_state({10, 0}, 0, 0, 0));
  CHECK(center_distance(near) == doctest::Approx(10.0));
  CHECK(closing_speed(near) == doctest::Approx(8.0));
  CHECK(prefilter(near));
}

TEST_CASE("prefilter never drops a critical window (10k random windows)") {
  std::mt19937_64 rng(2024);
  int critical = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto w = random_window(rng);
    if (criticality_index(w) == 1) {
      ++critical;
      CHECK(prefilter(w));
    }
  }
  MESSAGE("critical windows in sample: " << critical);
  CHECK(critical > 300);
}

TEST_CASE("rigid motions and swapping leave every predicate unchanged") {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> ang(0, 6.28), off(-500, 500);
  for (int i = 0; i < 2000; ++i) {
    const auto w = random_window(rng);
    const auto t = transform_window(w, ang(rng), {off(rng), off(rng)});
    CHECK(criticality_index(t) == criticality_index(w));
    CHECK(collision_predicted(t) == collision_predicted(w));
    CHECK(prefilter(t) == prefilter(w));
    CHECK(criticality_index(swap_vehicles(w)) == criticality_index(w));
    CHECK(center_distance(t) == doctest::Approx(center_distance(w)).epsilon(1e-9));
  }
}
