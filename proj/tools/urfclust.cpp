#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "urfclust/pipeline.hpp"
#include "urfclust/service.hpp"

using namespace urfclust;
using nlohmann::json;

namespace {

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size())
      throw PipelineError("config", "invalid i_min list entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw PipelineError("config", "empty i_min list");
  return out;
}

int fail(const PipelineError& e) {
  std::cout << e.record().dump() << std::endl;
  std::cerr << "error (" << e.stage() << "): " << e.what() << std::endl;
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unsupervised random forest clustering of traffic scenarios"};
  app.require_subcommand(1);

  // run ----------------------------------------------------------------------
  auto* run_cmd = app.add_subcommand("run", "Cluster a dataset into a session directory");
  std::string config_path, input, synthetic, linkage_name, subset, out, sweep_list, render_path;
  int trees = 0, m_min = 0, subspace = 0;
  double i_min = 0;
  std::uint64_t seed = 0;
  bool olo = false, no_olo = false, data_leaves = false, force = false, quiet = false;
  run_cmd->add_option("--config", config_path, "JSON config file; flags override its fields")->check(CLI::ExistingFile);
  auto* o_input = run_cmd->add_option("--input", input, "CSV file with the feature columns (optional 'type')");
  auto* o_synth = run_cmd->add_option("--synthetic", synthetic, "scenario[:N per template] or blobs[:M]");
  o_input->excludes(o_synth);
  auto* o_trees = run_cmd->add_option("--trees", trees, "number of trees B");
  auto* o_imin = run_cmd->add_option("--i-min", i_min, "impurity pruning threshold");
  auto* o_mmin = run_cmd->add_option("--m-min", m_min, "minimum real points to split");
  auto* o_sub = run_cmd->add_option("--subspace", subspace, "features tried per node (0 = sqrt(Q))");
  auto* o_link = run_cmd->add_option("--linkage", linkage_name, "average | single | complete");
  auto* o_olo = run_cmd->add_flag("--olo", olo, "refine the order with optimal leaf ordering");
  auto* o_noolo = run_cmd->add_flag("--no-olo", no_olo, "disable optimal leaf ordering");
  o_olo->excludes(o_noolo);
  auto* o_seed = run_cmd->add_option("--seed", seed, "master seed");
  auto* o_subset = run_cmd->add_option("--subset", subset, "re-cluster <session>:<lo>:<hi> of a parent's order");
  auto* o_out = run_cmd->add_option("--out", out, "output root (default $URFCLUST_OUT or ./urfclust-out)");
  auto* o_render = run_cmd->add_option("--render-spec", render_path, "render-spec JSON")->check(CLI::ExistingFile);
  auto* o_dlo = run_cmd->add_flag("--data-leaves-only", data_leaves, "count co-occurrence in data leaves only");
  run_cmd->add_option("--sweep-i-min", sweep_list, "comma-separated i_min values, one session each");
  run_cmd->add_flag("--force", force, "recompute even if the session exists");
  run_cmd->add_flag("--quiet", quiet, "no progress lines");

  // generate -----------------------------------------------------------------
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic dataset as CSV");
  std::string gen_spec = "scenario:200", gen_out;
  std::uint64_t gen_seed = 1;
  gen_cmd->add_option("--synthetic", gen_spec, "scenario[:N] or blobs[:M]");
  gen_cmd->add_option("--seed", gen_seed, "seed");
  gen_cmd->add_option("--out", gen_out, "CSV path")->required();

  // serve --------------------------------------------------------------------
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API under /v1");
  std::string host = env_or("URFCLUST_HOST", "127.0.0.1");
  int port = std::atoi(env_or("URFCLUST_PORT", "8080").c_str());
  std::size_t workers = static_cast<std::size_t>(std::atoi(env_or("URFCLUST_WORKERS", "2").c_str()));
  std::string root;
  serve_cmd->add_option("--host", host, "bind address ($URFCLUST_HOST)");
  serve_cmd->add_option("--port", port, "port ($URFCLUST_PORT)");
  serve_cmd->add_option("--workers", workers, "concurrent clustering jobs ($URFCLUST_WORKERS)");
  serve_cmd->add_option("--root", root, "artifact store (default $URFCLUST_OUT or ./urfclust-out)");

  CLI11_PARSE(app, argc, argv);

  if (*gen_cmd) {
    try {
      save_csv(synthesize(gen_spec, gen_seed), gen_out);
      std::cout << json{{"written", gen_out}}.dump() << std::endl;
      return 0;
    } catch (const PipelineError& e) {
      return fail(e);
    } catch (const std::exception& e) {
      return fail(PipelineError("generate", e.what()));
    }
  }

  if (*serve_cmd) {
    Service service({root.empty() ? default_output_root() : std::filesystem::path(root), workers});
    const int bound = service.bind(host, port);
    if (bound < 0) {
      std::cerr << "cannot bind " << host << ":" << port << std::endl;
      return 2;
    }
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "[urfclust] serving on http://" << host << ":" << bound << "/v1" << std::endl;
    service.listen();
    g_service = nullptr;
    return 0;
  }

  try {
    PipelineConfig config;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      json j;
      try {
        j = json::parse(in);
      } catch (const json::exception& e) {
        throw PipelineError("config", std::string("config file is not valid JSON: ") + e.what(),
                            {{"path", config_path}});
      }
      config = PipelineConfig::from_json(j);
    }
    if (*o_input) {
      config.input = input;
      config.synthetic.reset();
      config.subset.reset();
    }
    if (*o_synth) {
      config.synthetic = synthetic;
      config.input.reset();
      config.subset.reset();
    }
    if (*o_subset) {
      config.subset = parse_subset(subset);
      config.input.reset();
      config.synthetic.reset();
    }
    if (*o_trees) config.forest.tree_count = trees;
    if (*o_imin) config.forest.i_min = i_min;
    if (*o_mmin) config.forest.m_min = m_min;
    if (*o_sub) config.forest.subspace_size = subspace;
    if (*o_seed) config.forest.seed = seed;
    if (*o_link) {
      auto l = parse_linkage(linkage_name);
      if (!l) throw PipelineError("config", "unknown linkage '" + linkage_name + "'");
      config.linkage = *l;
    }
    if (*o_olo) config.olo = true;
    if (*o_noolo) config.olo = false;
    if (*o_dlo) config.data_leaves_only = true;
    if (*o_out) config.out = out;
    if (*o_render) {
      std::ifstream in(render_path);
      try {
        config.render = json::parse(in);
      } catch (const json::exception& e) {
        throw PipelineError("config", std::string("render spec is not valid JSON: ") + e.what());
      }
    }
    if (config.out.empty()) config.out = default_output_root();
    if (!quiet) set_log_stream(&std::cerr);

    if (!sweep_list.empty()) {
      const auto values = parse_list(sweep_list);
      const SweepResult r = sweep(config, values, force);
      json sessions = json::array();
      for (std::size_t k = 0; k < r.sessions.size(); ++k)
        sessions.push_back({{"i_min", values[k]}, {"id", r.sessions[k].id}, {"dir", r.sessions[k].dir.string()}});
      std::cout << json{{"sessions", sessions}, {"contact_sheet", r.contact_sheet.string()}}.dump() << std::endl;
      return 0;
    }
    const SessionInfo info = run(config, force);
    std::cout << json{{"id", info.id}, {"dir", info.dir.string()}, {"reused", info.reused}}.dump() << std::endl;
    return 0;
  } catch (const PipelineError& e) {
    return fail(e);
  } catch (const std::exception& e) {
    return fail(PipelineError("unknown", e.what()));
  }
}
