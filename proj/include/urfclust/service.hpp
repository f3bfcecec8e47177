#pragma once

#include <filesystem>
#include <memory>
#include <string>

namespace urfclust {

struct ServiceOptions {
  std::filesystem::path root;  // artifact store: datasets/ and sessions/
  std::size_t workers = 2;     // concurrent clustering jobs
};

/// HTTP API under /v1. Datasets and sessions are content addressed; jobs run
/// on a bounded worker pool and are polled through GET /v1/sessions/{id}.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds to host:port (port 0 picks a free port) and returns the port, or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace urfclust
