#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "urfclust/kinematics.hpp"

namespace urfclust {

enum class FeatureKind { continuous, binary };

enum class Scenery { highway, crossing, roundabout };

std::string_view to_string(Scenery s);
std::optional<Scenery> parse_scenery(std::string_view name);

struct FeatureColumn {
  std::string name;
  FeatureKind kind = FeatureKind::continuous;
  std::string display_group;  // empty when the column is calibrated alone
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureColumn> columns);

  /// The ten scenario features in storage order.
  static FeatureSchema scenario();

  std::size_t size() const { return columns_.size(); }
  const FeatureColumn& operator[](std::size_t i) const { return columns_[i]; }
  const std::vector<FeatureColumn>& columns() const { return columns_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const FeatureSchema& other) const;

 private:
  std::vector<FeatureColumn> columns_;
};

/// Validation failure while building or parsing a matrix. Row and column are
/// 0-based data coordinates (row excludes the header); -1 when not applicable.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, long row = -1, long column = -1)
      : std::runtime_error(what), row_(row), column_(column) {}
  long row() const { return row_; }
  long column() const { return column_; }

 private:
  long row_;
  long column_;
};

/// Immutable M x Q table. Labels are carried for evaluation displays only; the
/// clustering path reads values() and never labels().
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(FeatureSchema schema, std::vector<double> values,
                std::vector<std::int64_t> row_ids = {},
                std::vector<Scenery> labels = {});

  const FeatureSchema& schema() const { return schema_; }
  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return schema_.size(); }
  double at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }
  const std::vector<double>& values() const { return values_; }
  const std::vector<std::int64_t>& row_ids() const { return row_ids_; }
  bool has_labels() const { return !labels_.empty(); }
  const std::vector<Scenery>& labels() const { return labels_; }

  /// Rows in the given order; row ids and labels follow their rows.
  FeatureMatrix select(std::span<const std::size_t> rows) const;

  /// Same features and ids with replacement labels (or none).
  FeatureMatrix with_labels(std::vector<Scenery> labels) const;

  bool operator==(const FeatureMatrix& other) const;

 private:
  FeatureSchema schema_;
  std::size_t rows_ = 0;
  std::vector<double> values_;
  std::vector<std::int64_t> row_ids_;
  std::vector<Scenery> labels_;
};

// --- CSV -------------------------------------------------------------------

FeatureMatrix parse_csv(std::string_view text, const FeatureSchema& schema);
FeatureMatrix load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
std::string format_csv(const FeatureMatrix& m);
void save_csv(const FeatureMatrix& m, const std::filesystem::path& path);

// --- features --------------------------------------------------------------

struct RoadAttributes {
  double radius = 11111.0;  // m
  double speed_limit = 13.89;  // m/s
  int lane_count = 1;
};

inline constexpr double kStraightRoadRadius = 11111.0;
inline constexpr double kMaxBuiltRadius = 7000.0;

double clamp_radius(double r);

/// Heading difference in degrees folded into [0, 180].
double relative_angle_deg(double heading_a, double heading_b);

/// Ten-feature vector of a critical window. Throws DataError when the window
/// is not critical.
std::vector<double> extract_features(const kinematics::ScenarioWindow& window,
                                     const RoadAttributes& road,
                                     const kinematics::CriticalityParams& params = {});

// --- synthetic generator ---------------------------------------------------

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneryTemplate {
  Scenery kind = Scenery::highway;
  std::pair<int, int> lane_count_range{1, 1};
  std::vector<double> speed_limits;      // m/s
  double straight_probability = 0.0;     // draws r above kMaxBuiltRadius
  Range curved_radius;                   // m, used otherwise
  Range relative_angle_deg;              // [0, 180]
  Range speed_fraction_t_minus2;         // of the speed limit
  Range speed_change;                    // m/s, v(t0) - v(t-2)

  static SceneryTemplate highway();
  static SceneryTemplate crossing();
  static SceneryTemplate roundabout();
  static std::vector<SceneryTemplate> defaults();
};

/// Builds critical scenario windows per template (rejection-sampled through
/// prefilter and criticality_index) and extracts their features. Rows are
/// emitted template by template; labels carry the template kind.
FeatureMatrix generate_synthetic(std::span<const SceneryTemplate> templates,
                                 std::size_t count_per_template, std::uint64_t seed);

/// Isotropic Gaussian blobs in Q dimensions (schema x0..x{Q-1}). Used for the
/// two-cluster demonstration; labels are not attached, ground truth is returned
/// separately.
struct BlobSet {
  FeatureMatrix matrix;
  std::vector<int> component;
};
BlobSet generate_blobs(std::span<const std::vector<double>> centers, double stddev,
                       std::size_t count_per_blob, std::uint64_t seed, bool shuffle = true);

/// SHA-256 over schema names and raw feature values (labels excluded).
std::string feature_hash(const FeatureMatrix& m);

}  // namespace urfclust
