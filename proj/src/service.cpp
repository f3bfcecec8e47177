#include "urfclust/service.hpp"

#include <charconv>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "httplib.h"
#include "json.hpp"
#include "urfclust/hash.hpp"
#include "urfclust/pipeline.hpp"

namespace urfclust {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, json details = json::object()) {
  send_json(res, status, {{"error", {{"status", status}, {"message", message}, {"details", std::move(details)}}}});
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Parses an unsigned query parameter; nullopt when absent, throws on junk.
std::optional<std::size_t> query_size(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  const std::string v = req.get_param_value(key);
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
    throw std::invalid_argument(std::string("query parameter '") + key + "' must be a non-negative integer");
  return out;
}

class WorkerPool {
 public:
  explicit WorkerPool(std::size_t n) {
    for (std::size_t i = 0; i < std::max<std::size_t>(1, n); ++i) threads_.emplace_back([this] { loop(); });
  }
  ~WorkerPool() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }
  void submit(std::function<void()> job) {
    {
      std::lock_guard lock(mu_);
      jobs_.push_back(std::move(job));
    }
    cv_.notify_one();
  }

 private:
  void loop() {
    while (true) {
      std::function<void()> job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return stopping_ || !jobs_.empty(); });
        if (stopping_) return;
        job = std::move(jobs_.front());
        jobs_.pop_front();
      }
      job();
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::function<void()>> jobs_;
  std::vector<std::thread> threads_;
  bool stopping_ = false;
};

enum class Status { queued, running, done, failed };

const char* to_string(Status s) {
  switch (s) {
    case Status::queued: return "queued";
    case Status::running: return "running";
    case Status::done: return "done";
    case Status::failed: return "failed";
  }
  return "failed";
}

struct Entry {
  Status status = Status::queued;
  json error;
  std::string parent;
  std::pair<std::size_t, std::size_t> range{0, 0};
  std::shared_ptr<const LoadedSession> loaded;  // with proximity, filled on first use
};

}  // namespace

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  std::mutex mu;
  std::unordered_map<std::string, Entry> sessions;
  std::unordered_map<std::string, std::shared_ptr<const FeatureMatrix>> datasets;
  std::unique_ptr<WorkerPool> pool;

  fs::path dataset_path(const std::string& id) const { return options.root / "datasets" / (id + ".csv"); }
  fs::path session_dir(const std::string& id) const { return options.root / "sessions" / id; }

  static bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 &&
           std::all_of(id.begin(), id.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); });
  }

  std::shared_ptr<const FeatureMatrix> dataset(const std::string& id) {
    if (!valid_id(id)) return nullptr;
    {
      std::lock_guard lock(mu);
      if (auto it = datasets.find(id); it != datasets.end()) return it->second;
    }
    if (!fs::is_regular_file(dataset_path(id))) return nullptr;
    const std::string text = slurp(dataset_path(id));
    auto m = std::make_shared<const FeatureMatrix>(parse_csv(text, infer_schema(text)));
    std::lock_guard lock(mu);
    return datasets.try_emplace(id, m).first->second;
  }

  /// Status of a known session, consulting the store for sessions finished
  /// by an earlier process. nullopt when unknown.
  std::optional<Status> status_of(const std::string& id) {
    if (!valid_id(id)) return std::nullopt;
    std::lock_guard lock(mu);
    if (auto it = sessions.find(id); it != sessions.end()) return it->second.status;
    if (fs::is_regular_file(session_dir(id) / "manifest.json")) {
      Entry e;
      e.status = Status::done;
      sessions.emplace(id, std::move(e));
      return Status::done;
    }
    return std::nullopt;
  }

  /// Loaded session for a done id, or an error response already written.
  std::shared_ptr<const LoadedSession> done_session(const std::string& id, httplib::Response& res) {
    const auto st = status_of(id);
    if (!st) {
      send_error(res, 404, "unknown session '" + id + "'");
      return nullptr;
    }
    if (*st != Status::done) {
      send_error(res, 409, std::string("session is ") + to_string(*st), {{"status", to_string(*st)}});
      return nullptr;
    }
    {
      std::lock_guard lock(mu);
      if (auto& e = sessions[id]; e.loaded) return e.loaded;
    }
    auto loaded = std::make_shared<const LoadedSession>(load_session(session_dir(id), true));
    std::lock_guard lock(mu);
    auto& e = sessions[id];
    if (!e.loaded) e.loaded = loaded;
    return e.loaded;
  }

  json lineage(const json& manifest) {
    json chain = json::array();
    json parent = manifest.at("parent");
    for (int guard = 0; parent.is_object() && guard < 1000; ++guard) {
      chain.push_back(parent);
      const fs::path dir = session_dir(parent.at("id").get<std::string>());
      if (!fs::is_regular_file(dir / "manifest.json")) break;
      parent = json::parse(slurp(dir / "manifest.json")).at("parent");
    }
    return chain;
  }

  // --- handlers ------------------------------------------------------------

  void post_dataset(const httplib::Request& req, httplib::Response& res) {
    const std::string id = sha256_hex(req.body).substr(0, 24);
    const bool existed = fs::is_regular_file(dataset_path(id));
    std::shared_ptr<const FeatureMatrix> m;
    try {
      m = std::make_shared<const FeatureMatrix>(parse_csv(req.body, infer_schema(req.body)));
    } catch (const DataError& e) {
      json details = json::object();
      if (e.row() >= 0) details["row"] = e.row();
      if (e.column() >= 0) details["column"] = e.column();
      return send_error(res, 400, e.what(), details);
    }
    if (!existed) {
      fs::create_directories(options.root / "datasets");
      const fs::path tmp = dataset_path(id).concat(".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())));
      {
        std::ofstream out(tmp, std::ios::binary);
        out << req.body;
      }
      fs::rename(tmp, dataset_path(id));
    }
    {
      std::lock_guard lock(mu);
      datasets.try_emplace(id, m);
    }
    send_json(res, existed ? 200 : 201, dataset_meta(id, *m));
  }

  static json dataset_meta(const std::string& id, const FeatureMatrix& m) {
    return {{"id", id},
            {"rows", m.rows()},
            {"schema", schema_to_json(m.schema())},
            {"labels", m.has_labels()},
            {"feature_hash", feature_hash(m)}};
  }

  void post_session(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("request body is not valid JSON: ") + e.what());
    }
    if (!body.is_object()) return send_error(res, 400, "request body must be a JSON object");

    PipelineConfig config;
    config.out = options.root;
    std::string dataset_id, parent_id;
    std::optional<std::pair<std::size_t, std::size_t>> range;
    try {
      for (auto it = body.begin(); it != body.end(); ++it) {
        const std::string& k = it.key();
        const json& v = it.value();
        if (k == "dataset_id") dataset_id = v.get<std::string>();
        else if (k == "i_min") config.forest.i_min = v.get<double>();
        else if (k == "trees") config.forest.tree_count = v.get<int>();
        else if (k == "m_min") config.forest.m_min = v.get<int>();
        else if (k == "subspace_size") config.forest.subspace_size = v.get<int>();
        else if (k == "seed") config.forest.seed = v.get<std::uint64_t>();
        else if (k == "olo") config.olo = v.get<bool>();
        else if (k == "data_leaves_only") config.data_leaves_only = v.get<bool>();
        else if (k == "render") config.render = v;
        else if (k == "parent") parent_id = v.get<std::string>();
        else if (k == "range") {
          if (v.is_array() && v.size() == 2) range = {{v[0].get<std::size_t>(), v[1].get<std::size_t>()}};
          else if (v.is_object()) range = {{v.at("lo").get<std::size_t>(), v.at("hi").get<std::size_t>()}};
          else return send_error(res, 400, "range must be [lo, hi] or {\"lo\", \"hi\"}");
        } else if (k == "linkage") {
          auto l = parse_linkage(v.get<std::string>());
          if (!l) return send_error(res, 422, "unknown linkage '" + v.get<std::string>() + "'");
          config.linkage = *l;
        } else {
          return send_error(res, 400, "unknown field '" + k + "'");
        }
      }
      config.forest.validate();
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("bad field type: ") + e.what());
    } catch (const std::invalid_argument& e) {
      return send_error(res, 422, e.what());
    }
    if (parent_id.empty() != !range) return send_error(res, 422, "parent and range must be given together");

    FeatureMatrix rows;
    DataSource source;
    if (!parent_id.empty()) {
      const auto st = status_of(parent_id);
      if (!st) return send_error(res, 404, "unknown parent session '" + parent_id + "'");
      if (!dataset_id.empty() && !dataset(dataset_id))
        return send_error(res, 404, "unknown dataset '" + dataset_id + "'");
      auto [lo, hi] = *range;
      if (*st != Status::done)
        return send_error(res, 409, std::string("parent session is ") + to_string(*st));
      auto parent = done_session(parent_id, res);
      if (!parent) return;
      if (!(lo < hi && hi <= parent->order.size()) || hi - lo < 2)
        return send_error(res, 422, "range outside parent ordering or shorter than 2 rows",
                          {{"lo", lo}, {"hi", hi}, {"size", parent->order.size()}});
      rows = subset_rows(*parent, lo, hi);
      source = DataSource::from_json(parent->manifest.at("source"));
      config.subset = SubsetRef{parent_id, lo, hi};
    } else {
      if (dataset_id.empty()) return send_error(res, 422, "dataset_id is required for a root session");
      auto m = dataset(dataset_id);
      if (!m) return send_error(res, 404, "unknown dataset '" + dataset_id + "'");
      rows = *m;
      source.kind = DataSource::Kind::csv;
      source.path = fs::absolute(dataset_path(dataset_id));
    }

    std::string id;
    try {
      id = session_id(rows, config, parent_id);
    } catch (const std::exception& e) {
      return send_error(res, 422, e.what());
    }
    bool enqueue = false;
    Status status;
    {
      std::lock_guard lock(mu);
      auto it = sessions.find(id);
      if (it == sessions.end() && fs::is_regular_file(session_dir(id) / "manifest.json")) {
        it = sessions.emplace(id, Entry{}).first;
        it->second.status = Status::done;
      }
      if (it == sessions.end() || it->second.status == Status::failed) {
        Entry e;
        e.parent = parent_id;
        if (range) e.range = *range;
        sessions[id] = std::move(e);
        enqueue = true;
      }
      status = sessions[id].status;
    }
    if (enqueue) {
      pool->submit([this, id, rows = std::move(rows), source, config, parent_id] {
        set_status(id, Status::running);
        try {
          run_matrix(rows, source, config, parent_id);
          set_status(id, Status::done);
        } catch (const PipelineError& e) {
          set_status(id, Status::failed, e.record());
        } catch (const std::exception& e) {
          set_status(id, Status::failed, {{"error", {{"stage", "unknown"}, {"message", e.what()}}}});
        }
      });
    }
    send_json(res, enqueue ? 202 : 200, {{"id", id}, {"status", to_string(status)}});
  }

  void set_status(const std::string& id, Status s, json error = nullptr) {
    std::lock_guard lock(mu);
    auto& e = sessions[id];
    e.status = s;
    e.error = std::move(error);
  }

  void get_session(const std::string& id, httplib::Response& res) {
    const auto st = status_of(id);
    if (!st) return send_error(res, 404, "unknown session '" + id + "'");
    json out = {{"id", id}, {"status", to_string(*st)}};
    std::lock_guard lock(mu);
    const auto& e = sessions[id];
    if (*st == Status::failed) out["error"] = e.error;
    return send_json(res, 200, out);
  }

  void get_meta(const std::string& id, httplib::Response& res) {
    auto s = done_session(id, res);
    if (!s) return;
    json meta = s->manifest;
    meta["status"] = "done";
    meta["lineage"] = lineage(s->manifest);
    send_json(res, 200, meta);
  }

  void get_file_json(const std::string& id, const std::string& name, httplib::Response& res) {
    auto s = done_session(id, res);
    if (!s) return;
    res.status = 200;
    res.set_content(slurp(s->dir / name), "application/json");
  }

  void get_matrix(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto s = done_session(id, res);
    if (!s) return;
    const std::size_t m = s->order.size();
    Window w;
    std::size_t px = 512;
    try {
      w.x0 = query_size(req, "x0").value_or(0);
      w.y0 = query_size(req, "y0").value_or(0);
      w.x1 = query_size(req, "x1").value_or(m);
      w.y1 = query_size(req, "y1").value_or(m);
      px = query_size(req, "px").value_or(512);
    } catch (const std::invalid_argument& e) {
      return send_error(res, 400, e.what());
    }
    if (px < 1 || px > 8192) return send_error(res, 400, "px must lie in [1, 8192]");
    if (!(w.x0 < w.x1 && w.y0 < w.y1 && w.x1 <= m && w.y1 <= m))
      return send_error(res, 416, "window outside the ordered matrix",
                        {{"x0", w.x0}, {"y0", w.y0}, {"x1", w.x1}, {"y1", w.y1}, {"size", m}});
    const Image tile = render_window(*s->proximity, s->order, w, px, Reducer::mean, Colormap::parula());
    const std::size_t f = downsample_factor(std::max(w.x1 - w.x0, w.y1 - w.y0), px);
    res.set_header("X-Window", std::to_string(w.x0) + "," + std::to_string(w.y0) + "," + std::to_string(w.x1) +
                                   "," + std::to_string(w.y1));
    res.set_header("X-Downsample-Factor", std::to_string(f));
    res.set_header("X-Index-Mapping",
                   json{{"column", {{"offset", w.x0}, {"scale", f}}},
                        {"row", {{"offset", w.y0}, {"scale", f}}},
                        {"rule", "pixel p covers ordered indices [offset + p*scale, min(offset + (p+1)*scale, end))"}}
                       .dump());
    res.status = 200;
    res.set_content(encode_png(tile), "image/png");
  }

  void get_strips(const std::string& id, const httplib::Request& req, httplib::Response& res) {
    auto s = done_session(id, res);
    if (!s) return;
    const std::size_t m = s->order.size();
    std::size_t x0 = 0, x1 = m, px = 0;
    try {
      x0 = query_size(req, "x0").value_or(0);
      x1 = query_size(req, "x1").value_or(m);
      px = query_size(req, "px").value_or(0);
    } catch (const std::invalid_argument& e) {
      return send_error(res, 400, e.what());
    }
    if (!(x0 < x1 && x1 <= m)) return send_error(res, 416, "column window outside the ordered matrix");
    RenderSpec spec = RenderSpec::from_json(json::parse(slurp(s->dir / "render_spec.json")), s->matrix.schema());
    if (px > 0) spec.max_pixels = px;
    const Image strips = render_strips(s->matrix, s->order, spec, std::pair{x0, x1});
    if (strips.height == 0) return send_error(res, 404, "session has no strips configured");
    res.set_header("X-Downsample-Factor", std::to_string(downsample_factor(x1 - x0, spec.max_pixels)));
    res.set_header("X-Strips", [&] {
      json names = json::array();
      for (const auto& st : spec.strips) names.push_back(st.feature);
      if (spec.type_row && s->matrix.has_labels()) names.push_back("type");
      return names.dump();
    }());
    res.status = 200;
    res.set_content(encode_png(strips), "image/png");
  }

  void routes() {
    server.set_payload_max_length(std::size_t{1} << 30);
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Expose-Headers",
                                 "X-Window, X-Downsample-Factor, X-Index-Mapping, X-Strips"}});
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      } catch (...) {
        send_error(res, 500, "unknown error");
      }
    });
    server.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    });
    server.Post("/v1/datasets", [this](const httplib::Request& req, httplib::Response& res) { post_dataset(req, res); });
    server.Get(R"(/v1/datasets/([0-9a-fA-F]+))", [this](const httplib::Request& req, httplib::Response& res) {
      auto m = dataset(req.matches[1]);
      if (!m) return send_error(res, 404, "unknown dataset");
      send_json(res, 200, dataset_meta(req.matches[1], *m));
    });
    server.Post("/v1/sessions", [this](const httplib::Request& req, httplib::Response& res) { post_session(req, res); });
    server.Get(R"(/v1/sessions/([0-9a-fA-F]+))", [this](const httplib::Request& req, httplib::Response& res) {
      get_session(req.matches[1], res);
    });
    server.Get(R"(/v1/sessions/([0-9a-fA-F]+)/meta)", [this](const httplib::Request& req, httplib::Response& res) {
      get_meta(req.matches[1], res);
    });
    server.Get(R"(/v1/sessions/([0-9a-fA-F]+)/order)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = done_session(req.matches[1], res);
      if (!s) return;
      const bool olo = s->manifest.value("order_stage", std::string("hc")) == "olo";
      res.status = 200;
      res.set_content(slurp(s->dir / (olo ? "order_olo.json" : "order_hc.json")), "application/json");
    });
    server.Get(R"(/v1/sessions/([0-9a-fA-F]+)/dendrogram)",
               [this](const httplib::Request& req, httplib::Response& res) {
                 get_file_json(req.matches[1], "dendrogram.json", res);
               });
    server.Get(R"(/v1/sessions/([0-9a-fA-F]+)/matrix)", [this](const httplib::Request& req, httplib::Response& res) {
      get_matrix(req.matches[1], req, res);
    });
    server.Get(R"(/v1/sessions/([0-9a-fA-F]+)/strips)", [this](const httplib::Request& req, httplib::Response& res) {
      get_strips(req.matches[1], req, res);
    });
  }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  if (impl_->options.root.empty()) impl_->options.root = default_output_root();
  fs::create_directories(impl_->options.root / "sessions");
  fs::create_directories(impl_->options.root / "datasets");
  impl_->pool = std::make_unique<WorkerPool>(impl_->options.workers);
  impl_->routes();
}

Service::~Service() {
  stop();
  impl_->pool.reset();
}

int Service::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace urfclust
