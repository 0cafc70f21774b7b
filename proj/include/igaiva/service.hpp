#pragma once

#include <memory>
#include <string>

#include "igaiva/workbench.hpp"

namespace igaiva::service {

struct ServiceOptions {
    std::string host = "127.0.0.1";
    /// 0 picks a free port.
    int port = 8080;
    std::string cors_origin = "*";
    /// Seed of the mock generator used by POST /synthesize.
    std::uint64_t mock_seed = 1;
};

/// HTTP facade over a Workbench. JSON bodies; long operations (train,
/// synthesize) answer 202 with a job id, whose progress is available at
/// GET /jobs/{id} or as server-sent events at GET /jobs/{id}/events.
class Service {
public:
    Service(workbench::Workbench& bench, ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds the listening socket; throws UsageError when the port is busy.
    int bind();
    /// Serves on the calling thread until stop().
    void listen();
    /// bind() plus listen() on a background thread.
    int start();
    void stop();
    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace igaiva::service
