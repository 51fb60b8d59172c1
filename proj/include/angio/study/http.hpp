#pragma once

#include "angio/study/study.hpp"

#include <memory>
#include <thread>

namespace httplib {
class Server;
}

namespace angio {

struct StudyServerOptions {
  std::string dataset_root;  // test split source for POST /studies
  FaGenerator generator;     // synthetic FA for POST /studies
  std::string image_dir;     // where built studies write their PNGs
  std::string static_dir;    // optional UI bundle served at /
};

/// HTTP+JSON front of a StudyService.
///
///   POST /studies                         {n_pairs, synthetic_fraction, seed, time_limit_ms} -> 201 {study_id, token, n_pairs, time_limit_ms}
///   POST /studies/{id}/sessions           {rater_level, rater_id?} -> 201 {session_id}
///   GET  /sessions/{id}/next              -> {done, pair_id, index, total, time_limit_ms, slo_url, fa_url}
///   GET  /sessions/{id}/pairs/{pair}/slo.png, .../fa.png
///   POST /sessions/{id}/judgments         {pair_id, verdict: "real"|"synthetic"} -> {accepted, elapsed_ms}
///   GET  /studies/{id}/report?token=...&include_partial=0|1
///
/// Errors are {"error": message} with 400 (bad request), 403 (token), 404 (unknown id), 409 (duplicate / out of order).
class StudyHttpServer {
 public:
  StudyHttpServer(StudyService& service, StudyServerOptions options);
  ~StudyHttpServer();

  /// Binds (port 0 picks a free one) and returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(); blocks.
  void listen();
  /// listen() on a background thread.
  void start();
  void stop();

 private:
  void routes();

  StudyService& service_;
  StudyServerOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::mutex build_mu_;
  int builds_ = 0;
};

}  // namespace angio
