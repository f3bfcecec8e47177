#pragma once

#include <array>

namespace urfclust::kinematics {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

/// Planar state of one vehicle. Orientation is the heading in radians and is
/// normalized into [0, 2*pi) on construction through make_state().
struct VehicleState {
  Vec2 position;
  double velocity = 0.0;      // m/s, >= 0
  double acceleration = 0.0;  // m/s^2 along the heading
  double orientation = 0.0;   // rad
  double half_length = 2.25;  // m
  double half_width = 0.9;    // m
};

/// Validates and normalizes a state. Throws std::invalid_argument on negative
/// velocity or non-positive extents.
VehicleState make_state(Vec2 position, double velocity, double acceleration,
                        double orientation, double half_length = 2.25,
                        double half_width = 0.9);

double normalize_angle(double radians);

inline constexpr double kWindowSeconds = 2.0;

/// Two-vehicle snippet from t-2 to t0.
struct ScenarioWindow {
  VehicleState ego_t_minus2;
  VehicleState ego_t0;
  VehicleState target_t_minus2;
  VehicleState target_t0;
  double window_seconds = kWindowSeconds;
};

struct OrientedRect {
  Vec2 center;
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;

  std::array<Vec2, 4> corners() const;
};

OrientedRect footprint(const VehicleState& state);

/// Constant acceleration along a fixed heading; the vehicle stops instead of
/// reversing.
VehicleState predict_pose(const VehicleState& state, double dt);

/// Separating-axis test on closed rectangles; touching counts as overlap.
bool polygons_overlap(const OrientedRect& a, const OrientedRect& b);

/// Minimum Euclidean distance between two rectangles, 0 if they overlap.
double rect_distance(const OrientedRect& a, const OrientedRect& b);

struct CriticalityParams {
  double horizon = 0.3;         // s
  double sample_step = 0.01;    // s
  double near_distance = 0.3;   // m, d_rel threshold
  double min_velocity = 2.0;    // m/s, both vehicles
};

/// True iff the predicted footprints overlap at any sample time in
/// (t0, t0 + horizon].
bool collision_predicted(const ScenarioWindow& window,
                         const CriticalityParams& params = {});

/// Binary criticality label: predicted contact, or a near miss at the horizon
/// (d_rel below the distance threshold while both vehicles still move faster
/// than min_velocity).
int criticality_index(const ScenarioWindow& window,
                      const CriticalityParams& params = {});

struct PrefilterParams {
  double max_center_distance = 20.0;   // m
  double min_closing_speed = 0.5;      // m/s
  double near_gap = 2.0;               // m, footprint gap kept regardless of closing speed
};

double center_distance(const ScenarioWindow& window);

/// Rate at which the center distance shrinks at t0 (positive = approaching).
double closing_speed(const ScenarioWindow& window);

/// Cheap keep/drop decision run before criticality_index. Keeps a window when
/// the centers are within max_center_distance and the vehicles either close in
/// faster than min_closing_speed or their footprints are already within
/// near_gap of each other.
bool prefilter(const ScenarioWindow& window, const PrefilterParams& params = {});

/// Applies a rigid motion (rotation about the origin, then translation) to
/// every state of the window.
ScenarioWindow transform_window(const ScenarioWindow& window, double rotation,
                                Vec2 translation);

ScenarioWindow swap_vehicles(const ScenarioWindow& window);

}  // namespace urfclust::kinematics
