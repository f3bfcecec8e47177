#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "urfclust/dataset.hpp"
#include "urfclust/forest.hpp"
#include "urfclust/proximity.hpp"
#include "urfclust/render.hpp"
#include "urfclust/seriation.hpp"

namespace urfclust {

/// Stage failure carrying a machine-readable record.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(std::string stage, const std::string& message, nlohmann::json details = nlohmann::json::object())
      : std::runtime_error(message), stage_(std::move(stage)), details_(std::move(details)) {}
  const std::string& stage() const { return stage_; }
  nlohmann::json record() const;

 private:
  std::string stage_;
  nlohmann::json details_;
};

/// Where a session's rows came from. Labels are looked up here, never stored
/// with the session.
struct DataSource {
  enum class Kind { csv, synthetic, memory } kind = Kind::memory;
  std::filesystem::path path;  // csv
  std::string spec;            // synthetic: "scenario[:N]" or "blobs[:M]"
  std::uint64_t seed = 1;      // synthetic

  nlohmann::json to_json() const;
  static DataSource from_json(const nlohmann::json& j);
};

struct SubsetRef {
  std::string parent;  // session id or session directory
  std::size_t lo = 0;
  std::size_t hi = 0;
};

/// Parses "session:lo:hi".
SubsetRef parse_subset(const std::string& text);

struct PipelineConfig {
  std::optional<std::filesystem::path> input;
  std::optional<std::string> synthetic;
  ForestConfig forest;
  Linkage linkage = Linkage::average;
  bool olo = false;
  bool data_leaves_only = false;
  std::optional<nlohmann::json> render;  // render-spec document, defaults when absent
  std::optional<SubsetRef> subset;
  std::filesystem::path out;

  /// Throws PipelineError("config", ...).
  void validate() const;
  static PipelineConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

/// Plain progress lines go here; silent when null.
void set_log_stream(std::ostream* os);

/// URFCLUST_OUT, falling back to ./urfclust-out.
std::filesystem::path default_output_root();

/// Scenario schema when the header names exactly the ten scenario features,
/// otherwise one continuous column per header field (a "type" column is kept
/// for labels).
FeatureSchema infer_schema(std::string_view csv_text);

nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const nlohmann::json& j);

/// Input rows for a root run.
FeatureMatrix load_input(const PipelineConfig& config, DataSource* source = nullptr);
FeatureMatrix synthesize(const std::string& spec, std::uint64_t seed);

struct ClusterResult {
  FeatureMatrix matrix;
  ClusterForest forest;
  ProximityMatrix proximity;
  DissimilarityMatrix dissimilarity;
  Dendrogram dendrogram;
  LeafOrder hc;
  std::optional<LeafOrder> olo;
  std::map<std::string, double> timings;  // seconds per stage

  const LeafOrder& final_order() const { return olo ? *olo : hc; }
};

/// Train, build proximity, seriate. Reads matrix values only.
ClusterResult cluster(const FeatureMatrix& matrix, const PipelineConfig& config);

struct SessionInfo {
  std::string id;
  std::filesystem::path dir;
  bool reused = false;
  nlohmann::json manifest;
};

std::string session_id(const FeatureMatrix& matrix, const PipelineConfig& config, const std::string& parent_id);

/// Full pipeline into <root>/sessions/<id>. An existing complete session with
/// the same id is returned as-is unless force is set. Artifacts are staged in
/// a temporary directory and renamed into place, so a failure leaves nothing
/// behind.
SessionInfo run(const PipelineConfig& config, bool force = false);

/// As run, on rows already in memory; source is recorded for label lookup.
SessionInfo run_matrix(const FeatureMatrix& matrix, const DataSource& source, const PipelineConfig& config,
                       const std::string& parent_id = {}, bool force = false);

struct SweepResult {
  std::vector<SessionInfo> sessions;
  std::filesystem::path contact_sheet;
};

SweepResult sweep(const PipelineConfig& config, const std::vector<double>& i_min_values, bool force = false);

/// A finished session read back from disk.
struct LoadedSession {
  std::string id;
  std::filesystem::path dir;
  nlohmann::json manifest;
  FeatureMatrix matrix;  // with labels when the source provides them
  std::vector<std::size_t> order;
  std::shared_ptr<const ProximityMatrix> proximity;  // only when requested
};

std::filesystem::path resolve_session_dir(const std::string& ref, const std::filesystem::path& root);
LoadedSession load_session(const std::filesystem::path& dir, bool with_proximity = false);

/// Rows of the parent's ordered range [lo, hi), in ordered sequence.
FeatureMatrix subset_rows(const LoadedSession& parent, std::size_t lo, std::size_t hi);

/// Labels for the given row ids from a recorded source; empty when the source
/// has none.
std::vector<Scenery> resolve_labels(const DataSource& source, const FeatureSchema& schema,
                                    std::span<const std::int64_t> row_ids);

}  // namespace urfclust
