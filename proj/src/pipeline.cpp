#include "urfclust/pipeline.hpp"

#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "urfclust/hash.hpp"

namespace urfclust {

namespace fs = std::filesystem;
using nlohmann::json;

nlohmann::json PipelineError::record() const {
  return {{"error", {{"stage", stage_}, {"message", what()}, {"details", details_}}}};
}

// --- small helpers ---------------------------------------------------------

namespace {

std::ostream* g_log = nullptr;

void log_line(const std::string& text) {
  if (g_log) *g_log << "[urfclust] " << text << std::endl;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json read_json(const fs::path& path) { return json::parse(read_file(path)); }

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const DataError& e) {
    json details = json::object();
    if (e.row() >= 0) details["row"] = e.row();
    if (e.column() >= 0) details["column"] = e.column();
    throw PipelineError(name, e.what(), details);
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

std::string label_hash(const FeatureMatrix& m) {
  Sha256 h;
  h.update("labels:");
  for (Scenery s : m.labels()) h.update(to_string(s)).update(",");
  return h.hex();
}

std::size_t parse_size(std::string_view text, const std::string& what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
    throw PipelineError("config", "invalid " + what + " '" + std::string(text) + "'");
  return v;
}

}  // namespace

void set_log_stream(std::ostream* os) { g_log = os; }

// --- sources and config ----------------------------------------------------

nlohmann::json DataSource::to_json() const {
  switch (kind) {
    case Kind::csv: return {{"kind", "csv"}, {"path", path.string()}};
    case Kind::synthetic: return {{"kind", "synthetic"}, {"spec", spec}, {"seed", seed}};
    case Kind::memory: break;
  }
  return {{"kind", "memory"}};
}

DataSource DataSource::from_json(const nlohmann::json& j) {
  DataSource s;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "csv") {
    s.kind = Kind::csv;
    s.path = j.at("path").get<std::string>();
  } else if (kind == "synthetic") {
    s.kind = Kind::synthetic;
    s.spec = j.at("spec").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
  } else if (kind != "memory") {
    throw std::invalid_argument("unknown data source kind '" + kind + "'");
  }
  return s;
}

SubsetRef parse_subset(const std::string& text) {
  const auto b = text.rfind(':');
  const auto a = b == std::string::npos || b == 0 ? std::string::npos : text.rfind(':', b - 1);
  if (a == std::string::npos || a == 0)
    throw PipelineError("config", "subset must look like <session>:<lo>:<hi>, got '" + text + "'");
  SubsetRef ref;
  ref.parent = text.substr(0, a);
  ref.lo = parse_size(std::string_view(text).substr(a + 1, b - a - 1), "subset lo");
  ref.hi = parse_size(std::string_view(text).substr(b + 1), "subset hi");
  return ref;
}

void PipelineConfig::validate() const {
  const int sources = (input ? 1 : 0) + (synthetic ? 1 : 0) + (subset ? 1 : 0);
  if (sources != 1)
    throw PipelineError("config", "exactly one of input, synthetic or subset must be given");
  if (subset && subset->lo >= subset->hi)
    throw PipelineError("config", "subset range must be non-empty",
                        {{"lo", subset->lo}, {"hi", subset->hi}});
  try {
    forest.validate();
  } catch (const std::exception& e) {
    throw PipelineError("config", e.what());
  }
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw PipelineError("config", "config document must be a JSON object");
  PipelineConfig c;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    const json& v = it.value();
    try {
      if (key == "input") c.input = v.get<std::string>();
      else if (key == "synthetic") c.synthetic = v.get<std::string>();
      else if (key == "trees") c.forest.tree_count = v.get<int>();
      else if (key == "i_min") c.forest.i_min = v.get<double>();
      else if (key == "m_min") c.forest.m_min = v.get<int>();
      else if (key == "subspace_size") c.forest.subspace_size = v.get<int>();
      else if (key == "seed") c.forest.seed = v.get<std::uint64_t>();
      else if (key == "linkage") {
        auto l = parse_linkage(v.get<std::string>());
        if (!l) throw PipelineError("config", "unknown linkage '" + v.get<std::string>() + "'");
        c.linkage = *l;
      } else if (key == "olo") c.olo = v.get<bool>();
      else if (key == "data_leaves_only") c.data_leaves_only = v.get<bool>();
      else if (key == "render") c.render = v;
      else if (key == "subset") c.subset = parse_subset(v.get<std::string>());
      else if (key == "out") c.out = v.get<std::string>();
      else throw PipelineError("config", "unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw PipelineError("config", "bad value for '" + key + "': " + e.what());
    }
  }
  return c;
}

nlohmann::json PipelineConfig::to_json() const {
  json j = {{"trees", forest.tree_count},
            {"i_min", forest.i_min},
            {"m_min", forest.m_min},
            {"subspace_size", forest.subspace_size},
            {"seed", forest.seed},
            {"linkage", to_string(linkage)},
            {"olo", olo},
            {"data_leaves_only", data_leaves_only}};
  if (input) j["input"] = input->string();
  if (synthetic) j["synthetic"] = *synthetic;
  if (subset) j["subset"] = subset->parent + ":" + std::to_string(subset->lo) + ":" + std::to_string(subset->hi);
  if (render) j["render"] = *render;
  if (!out.empty()) j["out"] = out.string();
  return j;
}

fs::path default_output_root() {
  if (const char* env = std::getenv("URFCLUST_OUT"); env && *env) return env;
  return "urfclust-out";
}

// --- schemas and inputs ----------------------------------------------------

FeatureSchema infer_schema(std::string_view csv_text) {
  if (csv_text.starts_with("\xEF\xBB\xBF")) csv_text.remove_prefix(3);
  std::string_view header = csv_text.substr(0, csv_text.find('\n'));
  if (!header.empty() && header.back() == '\r') header.remove_suffix(1);
  std::vector<std::string> names;
  std::size_t start = 0;
  while (true) {
    const auto comma = header.find(',', start);
    std::string_view f = header.substr(start, comma == header.npos ? header.npos : comma - start);
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
    while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
    if (f != "type") names.emplace_back(f);
    if (comma == header.npos) break;
    start = comma + 1;
  }
  const auto scenario = FeatureSchema::scenario();
  if (names.size() == scenario.size()) {
    bool all = true;
    for (const auto& n : names) all = all && scenario.index_of(n).has_value();
    if (all) return scenario;
  }
  std::vector<FeatureColumn> cols;
  for (auto& n : names) cols.push_back({std::move(n), FeatureKind::continuous, ""});
  return FeatureSchema(std::move(cols));
}

nlohmann::json schema_to_json(const FeatureSchema& schema) {
  json cols = json::array();
  for (const auto& c : schema.columns())
    cols.push_back({{"name", c.name},
                    {"kind", c.kind == FeatureKind::binary ? "binary" : "continuous"},
                    {"group", c.display_group}});
  return cols;
}

FeatureSchema schema_from_json(const nlohmann::json& j) {
  std::vector<FeatureColumn> cols;
  for (const auto& c : j)
    cols.push_back({c.at("name").get<std::string>(),
                    c.at("kind").get<std::string>() == "binary" ? FeatureKind::binary : FeatureKind::continuous,
                    c.value("group", std::string())});
  return FeatureSchema(std::move(cols));
}

FeatureMatrix synthesize(const std::string& spec, std::uint64_t seed) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string count = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "scenario") {
    const std::size_t n = count.empty() ? 200 : parse_size(count, "synthetic count");
    const auto templates = SceneryTemplate::defaults();
    return generate_synthetic(templates, n, seed);
  }
  if (kind == "blobs") {
    const std::size_t n = count.empty() ? 2000 : parse_size(count, "synthetic count");
    if (n < 2 || n % 2) throw PipelineError("input", "blobs count must be even and >= 2");
    const std::vector<std::vector<double>> centers = {{0.0, 0.0}, {5.0, 5.0}};
    return generate_blobs(centers, 1.0, n / 2, seed).matrix;
  }
  throw PipelineError("input", "unknown synthetic spec '" + spec + "' (expected scenario[:N] or blobs[:M])");
}

FeatureMatrix load_input(const PipelineConfig& config, DataSource* source) {
  return stage("input", [&] {
    DataSource s;
    FeatureMatrix m;
    if (config.input) {
      const fs::path path = fs::absolute(*config.input);
      if (!fs::is_regular_file(path))
        throw PipelineError("input", "cannot read input file " + path.string(), {{"path", path.string()}});
      const std::string text = read_file(path);
      m = parse_csv(text, infer_schema(text));
      s.kind = DataSource::Kind::csv;
      s.path = path;
    } else if (config.synthetic) {
      m = synthesize(*config.synthetic, config.forest.seed);
      s.kind = DataSource::Kind::synthetic;
      s.spec = *config.synthetic;
      s.seed = config.forest.seed;
    } else {
      throw PipelineError("input", "no input configured");
    }
    if (source) *source = s;
    return m;
  });
}

std::vector<Scenery> resolve_labels(const DataSource& source, const FeatureSchema& schema,
                                    std::span<const std::int64_t> row_ids) {
  FeatureMatrix origin;
  if (source.kind == DataSource::Kind::csv) {
    if (!fs::is_regular_file(source.path)) return {};
    origin = load_csv(source.path, schema);
  } else if (source.kind == DataSource::Kind::synthetic) {
    origin = synthesize(source.spec, source.seed);
  } else {
    return {};
  }
  if (!origin.has_labels()) return {};
  std::vector<Scenery> out;
  out.reserve(row_ids.size());
  for (std::int64_t id : row_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= origin.rows()) return {};
    out.push_back(origin.labels()[static_cast<std::size_t>(id)]);
  }
  return out;
}

// --- clustering ------------------------------------------------------------

ClusterResult cluster(const FeatureMatrix& matrix, const PipelineConfig& config) {
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a) { return std::chrono::duration<double>(clock::now() - a).count(); };
  std::map<std::string, double> timings;

  auto t = clock::now();
  ClusterForest forest = stage("train", [&] { return train_forest(matrix, config.forest); });
  timings["train"] = seconds(t);

  t = clock::now();
  ProximityMatrix p = stage("proximity", [&] {
    return build_proximity(forest, matrix, ProximityOptions{config.data_leaves_only});
  });
  DissimilarityMatrix d = to_dissimilarity(p);
  timings["proximity"] = seconds(t);

  t = clock::now();
  Dendrogram dg = stage("linkage", [&] { return linkage(d, config.linkage); });
  dg.row_ids = matrix.row_ids();
  LeafOrder hc = hc_order(dg);
  timings["linkage"] = seconds(t);

  std::optional<LeafOrder> olo;
  if (config.olo) {
    t = clock::now();
    olo = stage("olo", [&] { return olo_order(dg, d); });
    timings["olo"] = seconds(t);
  }
  return ClusterResult{matrix,          std::move(forest), std::move(p), std::move(d), std::move(dg),
                       std::move(hc),   std::move(olo),    std::move(timings)};
}

// --- sessions --------------------------------------------------------------

std::string session_id(const FeatureMatrix& matrix, const PipelineConfig& config, const std::string& parent_id) {
  const auto render_spec = config.render ? RenderSpec::from_json(*config.render, matrix.schema())
                                         : RenderSpec::defaults(matrix.schema());
  json key = {{"features", feature_hash(matrix)},
              {"row_ids", matrix.row_ids()},
              {"labels", label_hash(matrix)},
              {"trees", config.forest.tree_count},
              {"i_min", config.forest.i_min},
              {"m_min", config.forest.m_min},
              {"subspace_size", config.forest.subspace_size},
              {"seed", config.forest.seed},
              {"linkage", to_string(config.linkage)},
              {"olo", config.olo},
              {"data_leaves_only", config.data_leaves_only},
              {"render", render_spec.to_json()},
              {"parent", parent_id}};
  if (config.subset) key["range"] = {config.subset->lo, config.subset->hi};
  return sha256_hex(key.dump()).substr(0, 24);
}

namespace {

fs::path sessions_root(const PipelineConfig& config) {
  return (config.out.empty() ? default_output_root() : config.out) / "sessions";
}

void write_session_files(const fs::path& dir, const ClusterResult& r, const RenderSpec& spec,
                         std::map<std::string, double>& timings) {
  using clock = std::chrono::steady_clock;
  const auto t = clock::now();
  const FeatureMatrix unlabeled = r.matrix.with_labels({});
  save_csv(unlabeled, dir / "features.csv");
  write_text(dir / "schema.json", schema_to_json(r.matrix.schema()).dump(2) + "\n");
  write_text(dir / "row_ids.json", json(r.matrix.row_ids()).dump() + "\n");
  save_forest(r.forest, dir / "forest.bin");
  export_proximity(r.proximity, dir / "proximity");
  export_dissimilarity(r.dissimilarity, r.proximity, dir / "dissimilarity");
  write_text(dir / "dendrogram.json", to_json(r.dendrogram).dump() + "\n");
  write_text(dir / "order_hc.json", to_json(r.hc, r.matrix.row_ids()).dump() + "\n");
  if (r.olo) write_text(dir / "order_olo.json", to_json(*r.olo, r.matrix.row_ids()).dump() + "\n");
  write_text(dir / "render_spec.json", spec.to_json().dump(2) + "\n");
  timings["write"] = std::chrono::duration<double>(clock::now() - t).count();

  const auto t2 = clock::now();
  const auto& order = r.final_order().permutation;
  write_png(render_matrix(r.proximity, order, spec), dir / "matrix.png");
  Image strips = render_strips(r.matrix, order, spec);
  if (strips.height > 0) write_png(strips, dir / "strips.png");
  timings["render"] = std::chrono::duration<double>(clock::now() - t2).count();
}

json artifact_table(const fs::path& dir) {
  json table = json::object();
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files)
    table[f.filename().string()] = {{"sha256", sha256_file(f)}, {"bytes", fs::file_size(f)}};
  return table;
}

}  // namespace

SessionInfo run_matrix(const FeatureMatrix& matrix, const DataSource& source, const PipelineConfig& config,
                       const std::string& parent_id, bool force) {
  if (config.subset && parent_id.empty()) throw PipelineError("config", "subset requires a parent session");
  const fs::path root = sessions_root(config);
  const RenderSpec spec = stage("config", [&] {
    return config.render ? RenderSpec::from_json(*config.render, matrix.schema())
                         : RenderSpec::defaults(matrix.schema());
  });
  for (const auto& box : spec.boxes)
    if (!(box.lo < box.hi && box.hi <= matrix.rows()))
      throw PipelineError("config", "render box outside matrix", {{"lo", box.lo}, {"hi", box.hi}});
  for (const auto& s : spec.strips)
    if (!matrix.schema().index_of(s.feature))
      throw PipelineError("config", "strip feature '" + s.feature + "' not in schema");

  SessionInfo info;
  info.id = session_id(matrix, config, parent_id);
  info.dir = root / info.id;
  if (!force && fs::is_regular_file(info.dir / "manifest.json")) {
    info.reused = true;
    info.manifest = read_json(info.dir / "manifest.json");
    log_line("session " + info.id + " already complete, reusing");
    return info;
  }

  log_line("session " + info.id + ": " + std::to_string(matrix.rows()) + " rows, " +
           std::to_string(config.forest.tree_count) + " trees, i_min " + std::to_string(config.forest.i_min));
  ClusterResult result = cluster(matrix, config);

  std::error_code ec;
  fs::create_directories(root, ec);
  std::mt19937_64 salt(std::random_device{}());
  const fs::path tmp = root / (".tmp-" + info.id + "-" + std::to_string(::getpid()) + "-" + std::to_string(salt() % 1000000));
  try {
    stage("write", [&] {
      fs::create_directories(tmp);
      write_session_files(tmp, result, spec, result.timings);
      json manifest = {
          {"format", "urfclust-session/1"},
          {"id", info.id},
          {"parent", parent_id.empty() ? json(nullptr)
                                       : json{{"id", parent_id}, {"range", {config.subset->lo, config.subset->hi}}}},
          {"source", source.to_json()},
          {"config", config.to_json()},
          {"rows", matrix.rows()},
          {"features", matrix.cols()},
          {"dataset_hash", feature_hash(matrix)},
          {"forest_hash", result.proximity.forest_hash},
          {"order_stage", result.olo ? "olo" : "hc"},
          {"summary",
           {{"mean_off_diagonal_proximity", result.proximity.mean_off_diagonal()},
            {"merges", result.dendrogram.merges.size()},
            {"hc_cost", order_cost(result.hc.permutation, result.dissimilarity)},
            {"olo_cost", result.olo ? json(order_cost(result.olo->permutation, result.dissimilarity))
                                    : json(nullptr)}}},
          {"timings", result.timings},
          {"artifacts", artifact_table(tmp)}};
      write_text(tmp / "manifest.json", manifest.dump(2) + "\n");
      info.manifest = std::move(manifest);
      if (force && fs::exists(info.dir)) fs::remove_all(info.dir);
      fs::rename(tmp, info.dir, ec);
      if (ec) {
        // Another writer finished the same content-addressed session first.
        if (!fs::is_regular_file(info.dir / "manifest.json"))
          throw PipelineError("write", "cannot move session into place: " + ec.message());
        fs::remove_all(tmp);
        info.reused = true;
        info.manifest = read_json(info.dir / "manifest.json");
      }
      return 0;
    });
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  log_line("session " + info.id + " written to " + info.dir.string());
  return info;
}

fs::path resolve_session_dir(const std::string& ref, const fs::path& root) {
  if (fs::is_regular_file(fs::path(ref) / "manifest.json")) return ref;
  const fs::path candidate = root / "sessions" / ref;
  if (fs::is_regular_file(candidate / "manifest.json")) return candidate;
  throw PipelineError("input", "unknown session '" + ref + "'", {{"session", ref}});
}

LoadedSession load_session(const fs::path& dir, bool with_proximity) {
  return stage("input", [&] {
    LoadedSession s;
    s.dir = dir;
    s.manifest = read_json(dir / "manifest.json");
    s.id = s.manifest.at("id").get<std::string>();
    const FeatureSchema schema = schema_from_json(read_json(dir / "schema.json"));
    const FeatureMatrix unlabeled = load_csv(dir / "features.csv", schema);
    const auto ids = read_json(dir / "row_ids.json").get<std::vector<std::int64_t>>();
    const DataSource source = DataSource::from_json(s.manifest.at("source"));
    s.matrix = FeatureMatrix(schema, unlabeled.values(), ids, resolve_labels(source, schema, ids));
    const bool olo = s.manifest.value("order_stage", std::string("hc")) == "olo";
    s.order = read_json(dir / (olo ? "order_olo.json" : "order_hc.json")).at("permutation").get<std::vector<std::size_t>>();
    if (with_proximity) {
      const json side = read_json(dir / "proximity.json");
      const std::size_t m = side.at("size").get<std::size_t>();
      const int trees = side.at("trees").get<int>();
      std::ifstream in(dir / "proximity.f32", std::ios::binary);
      if (!in) throw std::runtime_error("cannot read proximity.f32");
      std::vector<std::uint32_t> counts(m * (m + 1) / 2);
      std::vector<float> row(m);
      std::size_t pos = 0;
      for (std::size_t i = 0; i < m; ++i) {
        in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(m * sizeof(float)));
        if (!in) throw std::runtime_error("truncated proximity.f32");
        for (std::size_t j = i; j < m; ++j)
          counts[pos++] = static_cast<std::uint32_t>(std::lround(static_cast<double>(row[j]) * trees));
      }
      auto p = std::make_shared<ProximityMatrix>(m, trees, std::move(counts), ids);
      p->forest_hash = side.value("forest_hash", std::string());
      p->dataset_hash = side.value("dataset_hash", std::string());
      s.proximity = std::move(p);
    }
    return s;
  });
}

FeatureMatrix subset_rows(const LoadedSession& parent, std::size_t lo, std::size_t hi) {
  if (!(lo < hi && hi <= parent.order.size()))
    throw PipelineError("config", "subset range [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                      ") outside parent of " + std::to_string(parent.order.size()) + " rows",
                        {{"lo", lo}, {"hi", hi}, {"size", parent.order.size()}});
  if (hi - lo < 2) throw PipelineError("config", "subset must hold at least 2 rows");
  std::vector<std::size_t> rows(parent.order.begin() + static_cast<long>(lo),
                                parent.order.begin() + static_cast<long>(hi));
  return parent.matrix.select(rows);
}

SessionInfo run(const PipelineConfig& config, bool force) {
  config.validate();
  if (config.subset) {
    const fs::path root = config.out.empty() ? default_output_root() : config.out;
    const LoadedSession parent = load_session(resolve_session_dir(config.subset->parent, root));
    const FeatureMatrix rows = subset_rows(parent, config.subset->lo, config.subset->hi);
    return run_matrix(rows, DataSource::from_json(parent.manifest.at("source")), config, parent.id, force);
  }
  DataSource source;
  const FeatureMatrix m = load_input(config, &source);
  return run_matrix(m, source, config, {}, force);
}

SweepResult sweep(const PipelineConfig& config, const std::vector<double>& i_min_values, bool force) {
  if (i_min_values.empty()) throw PipelineError("config", "sweep needs at least one i_min value");
  SweepResult out;
  std::vector<Image> panels;
  Sha256 key;
  for (double v : i_min_values) {
    PipelineConfig c = config;
    c.forest.i_min = v;
    out.sessions.push_back(run(c, force));
    key.update(out.sessions.back().id);
  }
  const fs::path root = config.out.empty() ? default_output_root() : config.out;
  const fs::path dir = root / "sweeps" / key.hex().substr(0, 24);
  stage("render", [&] {
    for (std::size_t k = 0; k < out.sessions.size(); ++k) {
      const LoadedSession s = load_session(out.sessions[k].dir, true);
      Image matrix = render_window(*s.proximity, s.order, {0, 0, s.order.size(), s.order.size()}, 512,
                                   Reducer::mean, Colormap::parula());
      Image panel(matrix.width, matrix.height + 16, {255, 255, 255});
      for (std::size_t y = 0; y < matrix.height; ++y)
        for (std::size_t x = 0; x < matrix.width; ++x) panel.set(x, y + 16, matrix.pixel(x, y));
      std::ostringstream label;
      label << "IMIN " << i_min_values[k];
      draw_text(panel, 2, 2, label.str(), {0, 0, 0}, 2);
      panels.push_back(std::move(panel));
    }
    fs::create_directories(dir);
    write_png(contact_sheet(panels), dir / "contact_sheet.png");
    json listing = json::array();
    for (std::size_t k = 0; k < out.sessions.size(); ++k)
      listing.push_back({{"i_min", i_min_values[k]}, {"session", out.sessions[k].id}});
    write_text(dir / "sweep.json", json{{"sessions", listing}}.dump(2) + "\n");
    return 0;
  });
  out.contact_sheet = dir / "contact_sheet.png";
  return out;
}

}  // namespace urfclust
