#include "urfclust/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace urfclust::kinematics {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kGeomEps = 1e-9;

Vec2 heading_vector(double heading) { return {std::cos(heading), std::sin(heading)}; }

Vec2 velocity_vector(const VehicleState& s) { return s.velocity * heading_vector(s.orientation); }

void project(const std::array<Vec2, 4>& pts, Vec2 axis, double& lo, double& hi) {
  lo = hi = dot(pts[0], axis);
  for (int i = 1; i < 4; ++i) {
    double p = dot(pts[i], axis);
    lo = std::min(lo, p);
    hi = std::max(hi, p);
  }
}

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  Vec2 ab = b - a;
  double len2 = dot(ab, ab);
  double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  Vec2 d = p - (a + t * ab);
  return std::sqrt(dot(d, d));
}

}  // namespace

double normalize_angle(double radians) {
  double r = std::fmod(radians, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

VehicleState make_state(Vec2 position, double velocity, double acceleration,
                        double orientation, double half_length, double half_width) {
  if (!(velocity >= 0.0)) throw std::invalid_argument("vehicle velocity must be >= 0");
  if (!(half_length > 0.0) || !(half_width > 0.0))
    throw std::invalid_argument("vehicle extents must be > 0");
  return {position, velocity, acceleration, normalize_angle(orientation), half_length,
          half_width};
}

std::array<Vec2, 4> OrientedRect::corners() const {
  Vec2 f = heading_vector(heading);
  Vec2 l{-f.y, f.x};
  Vec2 hf = half_length * f;
  Vec2 hl = half_width * l;
  return {center + hf + hl, center - hf + hl, center - hf - hl, center + hf - hl};
}

OrientedRect footprint(const VehicleState& s) {
  return {s.position, s.orientation, s.half_length, s.half_width};
}

VehicleState predict_pose(const VehicleState& state, double dt) {
  if (dt < 0.0) throw std::invalid_argument("predict_pose: dt must be >= 0");
  VehicleState out = state;
  double v = state.velocity;
  double a = state.acceleration;
  double travel;
  if (a < 0.0 && v + a * dt < 0.0) {
    double t_stop = -v / a;
    travel = v * t_stop + 0.5 * a * t_stop * t_stop;
    out.velocity = 0.0;
  } else {
    travel = v * dt + 0.5 * a * dt * dt;
    out.velocity = std::max(0.0, v + a * dt);
  }
  out.position = state.position + travel * heading_vector(state.orientation);
  return out;
}

bool polygons_overlap(const OrientedRect& a, const OrientedRect& b) {
  auto ca = a.corners();
  auto cb = b.corners();
  const Vec2 axes[4] = {heading_vector(a.heading), heading_vector(a.heading + std::numbers::pi / 2),
                        heading_vector(b.heading), heading_vector(b.heading + std::numbers::pi / 2)};
  for (const Vec2& axis : axes) {
    double alo, ahi, blo, bhi;
    project(ca, axis, alo, ahi);
    project(cb, axis, blo, bhi);
    if (blo - ahi > kGeomEps || alo - bhi > kGeomEps) return false;
  }
  return true;
}

double rect_distance(const OrientedRect& a, const OrientedRect& b) {
  if (polygons_overlap(a, b)) return 0.0;
  auto ca = a.corners();
  auto cb = b.corners();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int e = 0; e < 4; ++e) {
      best = std::min(best, point_segment_distance(ca[i], cb[e], cb[(e + 1) % 4]));
      best = std::min(best, point_segment_distance(cb[i], ca[e], ca[(e + 1) % 4]));
    }
  }
  return best;
}

bool collision_predicted(const ScenarioWindow& w, const CriticalityParams& params) {
  int samples = static_cast<int>(std::lround(params.horizon / params.sample_step));
  samples = std::max(samples, 1);
  for (int k = 1; k <= samples; ++k) {
    double t = k == samples ? params.horizon : k * params.sample_step;
    if (polygons_overlap(footprint(predict_pose(w.ego_t0, t)),
                         footprint(predict_pose(w.target_t0, t))))
      return true;
  }
  return false;
}

int criticality_index(const ScenarioWindow& w, const CriticalityParams& params) {
  if (collision_predicted(w, params)) return 1;
  VehicleState ego = predict_pose(w.ego_t0, params.horizon);
  VehicleState tgt = predict_pose(w.target_t0, params.horizon);
  double d_rel = rect_distance(footprint(ego), footprint(tgt));
  if (d_rel < params.near_distance && ego.velocity > params.min_velocity &&
      tgt.velocity > params.min_velocity)
    return 1;
  return 0;
}

double center_distance(const ScenarioWindow& w) {
  Vec2 d = w.target_t0.position - w.ego_t0.position;
  return std::sqrt(dot(d, d));
}

double closing_speed(const ScenarioWindow& w) {
  Vec2 rel_pos = w.target_t0.position - w.ego_t0.position;
  Vec2 rel_vel = velocity_vector(w.target_t0) - velocity_vector(w.ego_t0);
  double dist = std::sqrt(dot(rel_pos, rel_pos));
  if (dist == 0.0) return std::sqrt(dot(rel_vel, rel_vel));
  return -dot(rel_pos, rel_vel) / dist;
}

bool prefilter(const ScenarioWindow& w, const PrefilterParams& params) {
  if (!(params.max_center_distance > 0.0) || !(params.min_closing_speed > 0.0))
    throw std::invalid_argument("prefilter thresholds must be > 0");
  if (center_distance(w) >= params.max_center_distance) return false;
  if (closing_speed(w) > params.min_closing_speed) return true;
  return rect_distance(footprint(w.ego_t0), footprint(w.target_t0)) < params.near_gap;
}

namespace {

VehicleState transform_state(const VehicleState& s, double rotation, Vec2 translation) {
  double c = std::cos(rotation), sn = std::sin(rotation);
  VehicleState out = s;
  out.position = Vec2{c * s.position.x - sn * s.position.y, sn * s.position.x + c * s.position.y} +
                 translation;
  out.orientation = normalize_angle(s.orientation + rotation);
  return out;
}

}  // namespace

ScenarioWindow transform_window(const ScenarioWindow& w, double rotation, Vec2 translation) {
  return {transform_state(w.ego_t_minus2, rotation, translation),
          transform_state(w.ego_t0, rotation, translation),
          transform_state(w.target_t_minus2, rotation, translation),
          transform_state(w.target_t0, rotation, translation), w.window_seconds};
}

ScenarioWindow swap_vehicles(const ScenarioWindow& w) {
  return {w.target_t_minus2, w.target_t0, w.ego_t_minus2, w.ego_t0, w.window_seconds};
}

}  // namespace urfclust::kinematics
