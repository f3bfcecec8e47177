#include "urfclust/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <unordered_set>

#include "urfclust/hash.hpp"

namespace urfclust {

std::string_view to_string(Scenery s) {
  switch (s) {
    case Scenery::highway: return "highway";
    case Scenery::crossing: return "crossing";
    case Scenery::roundabout: return "roundabout";
  }
  return "unknown";
}

std::optional<Scenery> parse_scenery(std::string_view name) {
  if (name == "highway") return Scenery::highway;
  if (name == "crossing") return Scenery::crossing;
  if (name == "roundabout") return Scenery::roundabout;
  return std::nullopt;
}

// --- schema ----------------------------------------------------------------

FeatureSchema::FeatureSchema(std::vector<FeatureColumn> columns) : columns_(std::move(columns)) {
  std::unordered_set<std::string> seen;
  for (const auto& c : columns_) {
    if (c.name.empty()) throw DataError("feature schema: empty column name");
    if (c.name == "type") throw DataError("feature schema: 'type' is reserved for scenery labels");
    if (!seen.insert(c.name).second) throw DataError("feature schema: duplicate column " + c.name);
  }
}

FeatureSchema FeatureSchema::scenario() {
  using K = FeatureKind;
  return FeatureSchema({{"v_eg_t-2", K::continuous, "velocity"},
                        {"v_eg_t0", K::continuous, "velocity"},
                        {"b_eg", K::binary, ""},
                        {"v_tg_t-2", K::continuous, "velocity"},
                        {"v_tg_t0", K::continuous, "velocity"},
                        {"b_tg", K::binary, ""},
                        {"delta_rel", K::continuous, ""},
                        {"r", K::continuous, ""},
                        {"v_lim", K::continuous, ""},
                        {"n_L", K::continuous, ""}});
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < columns_.size(); ++i)
    if (columns_[i].name == name) return i;
  return std::nullopt;
}

bool FeatureSchema::operator==(const FeatureSchema& other) const {
  if (columns_.size() != other.columns_.size()) return false;
  for (std::size_t i = 0; i < columns_.size(); ++i) {
    const auto& a = columns_[i];
    const auto& b = other.columns_[i];
    if (a.name != b.name || a.kind != b.kind || a.display_group != b.display_group) return false;
  }
  return true;
}

// --- matrix ----------------------------------------------------------------

FeatureMatrix::FeatureMatrix(FeatureSchema schema, std::vector<double> values,
                             std::vector<std::int64_t> row_ids, std::vector<Scenery> labels)
    : schema_(std::move(schema)), values_(std::move(values)), row_ids_(std::move(row_ids)),
      labels_(std::move(labels)) {
  const std::size_t q = schema_.size();
  if (q == 0) throw DataError("feature matrix needs at least one column");
  if (values_.size() % q != 0) throw DataError("feature matrix: value count not a multiple of Q");
  rows_ = values_.size() / q;
  if (row_ids_.empty()) {
    row_ids_.resize(rows_);
    for (std::size_t i = 0; i < rows_; ++i) row_ids_[i] = static_cast<std::int64_t>(i);
  }
  if (row_ids_.size() != rows_) throw DataError("feature matrix: row id count mismatch");
  if (!labels_.empty() && labels_.size() != rows_)
    throw DataError("feature matrix: label count mismatch");
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < q; ++c) {
      double v = values_[r * q + c];
      if (!std::isfinite(v))
        throw DataError("non-finite value in column " + schema_[c].name, static_cast<long>(r),
                        static_cast<long>(c));
      if (schema_[c].kind == FeatureKind::binary && v != 0.0 && v != 1.0)
        throw DataError("binary column " + schema_[c].name + " must be 0 or 1",
                        static_cast<long>(r), static_cast<long>(c));
    }
  }
}

FeatureMatrix FeatureMatrix::select(std::span<const std::size_t> rows) const {
  std::vector<double> vals;
  vals.reserve(rows.size() * cols());
  std::vector<std::int64_t> ids;
  std::vector<Scenery> labs;
  for (std::size_t r : rows) {
    if (r >= rows_) throw DataError("row selection out of range", static_cast<long>(r));
    auto src = row(r);
    vals.insert(vals.end(), src.begin(), src.end());
    ids.push_back(row_ids_[r]);
    if (has_labels()) labs.push_back(labels_[r]);
  }
  return FeatureMatrix(schema_, std::move(vals), std::move(ids), std::move(labs));
}

FeatureMatrix FeatureMatrix::with_labels(std::vector<Scenery> labels) const {
  return FeatureMatrix(schema_, values_, row_ids_, std::move(labels));
}

bool FeatureMatrix::operator==(const FeatureMatrix& other) const {
  return schema_ == other.schema_ && values_ == other.values_ && row_ids_ == other.row_ids_ &&
         labels_ == other.labels_;
}

// --- CSV -------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t')) field.remove_suffix(1);
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string cell_ref(long row, const std::string& column) {
  return "row " + std::to_string(row) + ", column '" + column + "'";
}

}  // namespace

FeatureMatrix parse_csv(std::string_view text, const FeatureSchema& schema) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == text.npos ? text.npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == text.npos) break;
    pos = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw DataError("csv: missing header line");
  if (lines.front().starts_with("\xEF\xBB\xBF")) lines.front().remove_prefix(3);

  auto header = split_fields(lines.front());
  const std::size_t q = schema.size();
  std::vector<long> column_of_field(header.size(), -1);
  long type_field = -1;
  std::vector<bool> found(q, false);
  for (std::size_t f = 0; f < header.size(); ++f) {
    if (header[f] == "type") {
      if (type_field >= 0) throw DataError("csv: duplicate column 'type'", -1, static_cast<long>(f));
      type_field = static_cast<long>(f);
      continue;
    }
    auto idx = schema.index_of(header[f]);
    if (!idx)
      throw DataError("csv: unknown column '" + std::string(header[f]) + "'", -1,
                      static_cast<long>(f));
    if (found[*idx])
      throw DataError("csv: duplicate column '" + std::string(header[f]) + "'", -1,
                      static_cast<long>(f));
    found[*idx] = true;
    column_of_field[f] = static_cast<long>(*idx);
  }
  for (std::size_t c = 0; c < q; ++c)
    if (!found[c])
      throw DataError("csv: missing column '" + schema[c].name + "'", -1, static_cast<long>(c));

  const std::size_t m = lines.size() - 1;
  std::vector<double> values(m * q);
  std::vector<Scenery> labels;
  if (type_field >= 0) labels.resize(m);
  for (std::size_t r = 0; r < m; ++r) {
    auto fields = split_fields(lines[r + 1]);
    const long row = static_cast<long>(r);
    if (fields.size() != header.size())
      throw DataError("csv: row " + std::to_string(r) + " has " + std::to_string(fields.size()) +
                          " fields, expected " + std::to_string(header.size()),
                      row);
    for (std::size_t f = 0; f < fields.size(); ++f) {
      if (static_cast<long>(f) == type_field) {
        auto s = parse_scenery(fields[f]);
        if (!s)
          throw DataError("csv: invalid scenery type '" + std::string(fields[f]) + "' at " +
                              cell_ref(row, "type"),
                          row, static_cast<long>(f));
        labels[r] = *s;
        continue;
      }
      const std::size_t c = static_cast<std::size_t>(column_of_field[f]);
      const std::string_view cell = fields[f];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
        throw DataError("csv: non-numeric value '" + std::string(cell) + "' at " +
                            cell_ref(row, schema[c].name),
                        row, static_cast<long>(c));
      if (schema[c].kind == FeatureKind::binary && v != 0.0 && v != 1.0)
        throw DataError("csv: binary violation '" + std::string(cell) + "' at " +
                            cell_ref(row, schema[c].name) + " (expected 0 or 1)",
                        row, static_cast<long>(c));
      values[r * q + c] = v;
    }
  }
  if (m < 2) throw DataError("csv: at least 2 data rows are required, got " + std::to_string(m));
  return FeatureMatrix(schema, std::move(values), {}, std::move(labels));
}

FeatureMatrix load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read input file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), schema);
}

std::string format_csv(const FeatureMatrix& m) {
  std::string out;
  const auto& schema = m.schema();
  for (std::size_t c = 0; c < schema.size(); ++c) {
    if (c) out += ',';
    out += schema[c].name;
  }
  if (m.has_labels()) out += ",type";
  out += '\n';
  char buf[64];
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      auto res = std::to_chars(buf, buf + sizeof buf, m.at(r, c));
      out.append(buf, res.ptr);
    }
    if (m.has_labels()) {
      out += ',';
      out += to_string(m.labels()[r]);
    }
    out += '\n';
  }
  return out;
}

void save_csv(const FeatureMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << format_csv(m);
}

// --- features --------------------------------------------------------------

double clamp_radius(double r) { return r > kMaxBuiltRadius ? kStraightRoadRadius : r; }

double relative_angle_deg(double heading_a, double heading_b) {
  double d = std::fabs(kinematics::normalize_angle(heading_a) - kinematics::normalize_angle(heading_b));
  d = d * 180.0 / std::numbers::pi;
  if (d > 180.0) d = 360.0 - d;
  return std::clamp(d, 0.0, 180.0);
}

std::vector<double> extract_features(const kinematics::ScenarioWindow& w,
                                     const RoadAttributes& road,
                                     const kinematics::CriticalityParams& params) {
  if (kinematics::criticality_index(w, params) != 1)
    throw DataError("extract_features: window is not critical");
  const double v_eg_m2 = w.ego_t_minus2.velocity;
  const double v_eg_0 = w.ego_t0.velocity;
  const double v_tg_m2 = w.target_t_minus2.velocity;
  const double v_tg_0 = w.target_t0.velocity;
  return {v_eg_m2,
          v_eg_0,
          v_eg_0 < v_eg_m2 ? 1.0 : 0.0,
          v_tg_m2,
          v_tg_0,
          v_tg_0 < v_tg_m2 ? 1.0 : 0.0,
          relative_angle_deg(w.ego_t0.orientation, w.target_t0.orientation),
          clamp_radius(road.radius),
          road.speed_limit,
          static_cast<double>(road.lane_count)};
}

// --- synthetic generator ---------------------------------------------------

SceneryTemplate SceneryTemplate::highway() {
  SceneryTemplate t;
  t.kind = Scenery::highway;
  t.lane_count_range = {2, 3};
  t.speed_limits = {27.78, 33.33, 36.11};
  t.straight_probability = 0.7;
  t.curved_radius = {1500.0, 7000.0};
  t.relative_angle_deg = {0.0, 30.0};
  t.speed_fraction_t_minus2 = {0.7, 1.1};
  t.speed_change = {-10.0, 3.0};
  return t;
}

SceneryTemplate SceneryTemplate::crossing() {
  SceneryTemplate t;
  t.kind = Scenery::crossing;
  t.lane_count_range = {1, 2};
  t.speed_limits = {8.33, 13.89};
  t.straight_probability = 0.85;
  t.curved_radius = {60.0, 400.0};
  t.relative_angle_deg = {45.0, 180.0};
  t.speed_fraction_t_minus2 = {0.3, 1.0};
  t.speed_change = {-5.0, 2.5};
  return t;
}

SceneryTemplate SceneryTemplate::roundabout() {
  SceneryTemplate t;
  t.kind = Scenery::roundabout;
  t.lane_count_range = {1, 2};
  t.speed_limits = {8.33, 13.89};
  t.straight_probability = 0.0;
  t.curved_radius = {12.0, 45.0};
  t.relative_angle_deg = {0.0, 75.0};
  t.speed_fraction_t_minus2 = {0.3, 0.8};
  t.speed_change = {-4.0, 2.0};
  return t;
}

std::vector<SceneryTemplate> SceneryTemplate::defaults() {
  return {highway(), crossing(), roundabout()};
}

namespace {

double uniform(std::mt19937_64& rng, Range r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

std::vector<double> sample_row(const SceneryTemplate& t, std::mt19937_64& rng) {
  using namespace kinematics;
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    RoadAttributes road;
    road.lane_count = std::uniform_int_distribution<int>(t.lane_count_range.first,
                                                         t.lane_count_range.second)(rng);
    road.speed_limit = t.speed_limits[std::uniform_int_distribution<std::size_t>(
        0, t.speed_limits.size() - 1)(rng)];
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < t.straight_probability)
      road.radius = uniform(rng, {kMaxBuiltRadius + 1.0, 50000.0});
    else
      road.radius = uniform(rng, t.curved_radius);

    const double delta = uniform(rng, t.relative_angle_deg) * std::numbers::pi / 180.0;
    const double side = std::uniform_int_distribution<int>(0, 1)(rng) ? 1.0 : -1.0;

    auto speeds = [&] {
      double before = road.speed_limit * uniform(rng, t.speed_fraction_t_minus2);
      double after = std::max(0.5, before + uniform(rng, t.speed_change));
      return std::pair{before, after};
    };
    auto [ve_m2, ve_0] = speeds();
    auto [vt_m2, vt_0] = speeds();

    const double ego_heading = uniform(rng, {0.0, 2.0 * std::numbers::pi});
    const double tgt_heading = ego_heading + side * delta;
    const Vec2 ego_pos{uniform(rng, {-500.0, 500.0}), uniform(rng, {-500.0, 500.0})};
    const double ego_hl = uniform(rng, {2.0, 2.5}), ego_hw = uniform(rng, {0.85, 1.0});
    const double tgt_hl = uniform(rng, {2.0, 2.5}), tgt_hw = uniform(rng, {0.85, 1.0});

    VehicleState ego0 = make_state(ego_pos, ve_0, (ve_0 - ve_m2) / kWindowSeconds, ego_heading,
                                   ego_hl, ego_hw);
    const double contact_time = uniform(rng, {0.03, 0.27});
    const Vec2 ego_at_contact = predict_pose(ego0, contact_time).position;
    const double ox = uniform(rng, {-0.8, 0.8}) * ego_hl;
    const double oy = uniform(rng, {-0.8, 0.8}) * ego_hw;
    const double c = std::cos(ego_heading), s = std::sin(ego_heading);
    const Vec2 contact_point = ego_at_contact + Vec2{c * ox - s * oy, s * ox + c * oy};

    VehicleState tgt0 = make_state({0.0, 0.0}, vt_0, (vt_0 - vt_m2) / kWindowSeconds, tgt_heading,
                                   tgt_hl, tgt_hw);
    const Vec2 tgt_travel = predict_pose(tgt0, contact_time).position;
    tgt0.position = contact_point - tgt_travel;

    auto back = [](const VehicleState& at0, double v_before) {
      VehicleState s0 = at0;
      const double dist = 0.5 * (v_before + at0.velocity) * kWindowSeconds;
      s0.position = at0.position - dist * Vec2{std::cos(at0.orientation), std::sin(at0.orientation)};
      s0.velocity = v_before;
      return s0;
    };
    ScenarioWindow w{back(ego0, ve_m2), ego0, back(tgt0, vt_m2), tgt0, kWindowSeconds};
    if (!prefilter(w) || criticality_index(w) != 1) continue;
    return extract_features(w, road);
  }
  throw std::runtime_error("synthetic generator: no critical window after " +
                           std::to_string(kMaxAttempts) + " attempts");
}

}  // namespace

FeatureMatrix generate_synthetic(std::span<const SceneryTemplate> templates,
                                 std::size_t count_per_template, std::uint64_t seed) {
  if (templates.empty()) throw DataError("generate_synthetic: empty template list");
  if (count_per_template < 1) throw DataError("generate_synthetic: count must be >= 1");
  const auto schema = FeatureSchema::scenario();
  std::vector<double> values;
  values.reserve(templates.size() * count_per_template * schema.size());
  std::vector<Scenery> labels;
  for (std::size_t t = 0; t < templates.size(); ++t) {
    const auto& tpl = templates[t];
    if (tpl.speed_limits.empty()) throw DataError("scenery template without speed limits");
    std::mt19937_64 rng(derive_seed(seed, t));
    for (std::size_t i = 0; i < count_per_template; ++i) {
      auto row = sample_row(tpl, rng);
      values.insert(values.end(), row.begin(), row.end());
      labels.push_back(tpl.kind);
    }
  }
  return FeatureMatrix(schema, std::move(values), {}, std::move(labels));
}

BlobSet generate_blobs(std::span<const std::vector<double>> centers, double stddev,
                       std::size_t count_per_blob, std::uint64_t seed, bool shuffle) {
  if (centers.empty()) throw DataError("generate_blobs: no centers");
  const std::size_t q = centers.front().size();
  std::vector<FeatureColumn> cols;
  for (std::size_t d = 0; d < q; ++d) cols.push_back({"x" + std::to_string(d), FeatureKind::continuous, ""});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, stddev);
  std::vector<std::pair<std::vector<double>, int>> points;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    if (centers[k].size() != q) throw DataError("generate_blobs: center dimension mismatch");
    for (std::size_t i = 0; i < count_per_blob; ++i) {
      std::vector<double> p(q);
      for (std::size_t d = 0; d < q; ++d) p[d] = centers[k][d] + noise(rng);
      points.emplace_back(std::move(p), static_cast<int>(k));
    }
  }
  if (shuffle) std::shuffle(points.begin(), points.end(), rng);
  BlobSet out;
  std::vector<double> values;
  for (auto& [p, k] : points) {
    values.insert(values.end(), p.begin(), p.end());
    out.component.push_back(k);
  }
  out.matrix = FeatureMatrix(FeatureSchema(std::move(cols)), std::move(values));
  return out;
}

std::string feature_hash(const FeatureMatrix& m) {
  Sha256 h;
  for (const auto& c : m.schema().columns()) {
    h.update(c.name);
    h.update(c.kind == FeatureKind::binary ? ":b\n" : ":c\n");
  }
  const std::uint64_t rows = m.rows();
  h.update_pod(std::span<const std::uint64_t>(&rows, 1));
  h.update_pod(std::span<const double>(m.values()));
  return h.hex();
}

}  // namespace urfclust
