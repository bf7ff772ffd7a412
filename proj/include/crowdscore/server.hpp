#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "crowdscore/qc.hpp"

namespace crowdscore::app {

// Headless task-serving API over the QC engine. All engine access is
// serialized behind one mutex, so judgment-log appends and image-queue
// claims are linearizable. Log rows stream to log_path as they happen.
//
//   POST /v1/contributors              {"contributor_id": ...}
//   GET  /v1/contributors/{id}/task
//   POST /v1/tasks/{id}/judgments      {"contributor_id", "elapsed_seconds",
//                                       "answers": [...]}
//   GET  /v1/job/progress
//   GET  /v1/job/results?method=cv
//
// Error bodies: {"error": {"code": "<errc>", "message": ...}}.
class JobService {
public:
    JobService(qc::JobEngine& engine, std::filesystem::path log_path);
    ~JobService();

    JobService(const JobService&) = delete;
    JobService& operator=(const JobService&) = delete;

    // Binds and serves on a background thread. port 0 picks a free port.
    // Raises startup when the port cannot be bound.
    void start(int port);
    void stop(); // graceful: drains handlers and flushes the log

    int port() const { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

} // namespace crowdscore::app
