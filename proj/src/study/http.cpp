#include "angio/study/http.hpp"

#include <httplib.h>

#include <filesystem>
#include <fstream>

namespace angio {

using nlohmann::json;

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reject_unknown(const json& body, std::initializer_list<const char*> allowed) {
  if (!body.is_object()) throw std::invalid_argument("request body must be a JSON object");
  for (const auto& [k, v] : body.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
      throw std::invalid_argument("unknown field '" + k + "'");
    }
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  return json::parse(req.body);
}

// Maps service exceptions onto status codes.
template <typename F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const NotFoundError& e) {
      reply(res, 404, {{"error", e.what()}});
    } catch (const ConflictError& e) {
      reply(res, 409, {{"error", e.what()}});
    } catch (const ForbiddenError& e) {
      reply(res, 403, {{"error", e.what()}});
    } catch (const json::exception& e) {
      reply(res, 400, {{"error", std::string("bad JSON: ") + e.what()}});
    } catch (const std::invalid_argument& e) {
      reply(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
      reply(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace

StudyHttpServer::StudyHttpServer(StudyService& service, StudyServerOptions options)
    : service_(service), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

StudyHttpServer::~StudyHttpServer() { stop(); }

void StudyHttpServer::routes() {
  auto& s = *server_;

  s.Post("/studies", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    reject_unknown(body, {"n_pairs", "synthetic_fraction", "seed", "time_limit_ms"});
    if (options_.dataset_root.empty() || !options_.generator || options_.image_dir.empty()) {
      throw std::invalid_argument("server was started without a dataset and checkpoint");
    }
    StudyConfig cfg;
    cfg.n_pairs = body.value("n_pairs", cfg.n_pairs);
    cfg.synthetic_fraction = body.value("synthetic_fraction", cfg.synthetic_fraction);
    cfg.seed = body.value("seed", cfg.seed);
    cfg.time_limit_ms = body.value("time_limit_ms", cfg.time_limit_ms);
    std::lock_guard lock(build_mu_);
    const std::string image_dir = options_.image_dir + "/build" + std::to_string(++builds_);
    auto pairs = build_study(options_.dataset_root, cfg, options_.generator, image_dir);
    const auto [id, token] = service_.create_study(cfg, std::move(pairs));
    reply(res, 201, {{"study_id", id}, {"token", token}, {"n_pairs", cfg.n_pairs}, {"time_limit_ms", cfg.time_limit_ms}});
  }));

  s.Post("/studies/:id/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    reject_unknown(body, {"rater_level", "rater_id"});
    const RaterLevel level = parse_level(body.at("rater_level").get<std::string>());
    const std::string sid =
        service_.create_session(req.path_params.at("id"), level, body.value("rater_id", std::string{}));
    reply(res, 201, {{"session_id", sid}});
  }));

  s.Get("/sessions/:id/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string sid = req.path_params.at("id");
    reply(res, 200, service_.next_pair(sid).to_json(sid));
  }));

  s.Get("/sessions/:id/pairs/:pair/:image", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string image = req.path_params.at("image");
    if (image != "slo.png" && image != "fa.png") throw NotFoundError("unknown image '" + image + "'");
    const std::string path =
        service_.image_path(req.path_params.at("id"), req.path_params.at("pair"), image.substr(0, image.size() - 4));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("image file missing");
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    res.status = 200;
    res.set_header("Cache-Control", "no-store");
    res.set_content(std::move(bytes), "image/png");
  }));

  s.Post("/sessions/:id/judgments", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    reject_unknown(body, {"pair_id", "verdict", "elapsed_ms"});
    const auto r = service_.submit(req.path_params.at("id"), body.at("pair_id").get<std::string>(),
                                   parse_verdict(body.at("verdict").get<std::string>()));
    reply(res, 200, {{"accepted", r.accepted}});
  }));

  s.Get("/studies/:id/report", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const bool partial = req.has_param("include_partial") && req.get_param_value("include_partial") == "1";
    try {
      reply(res, 200, service_.report(req.path_params.at("id"), req.get_param_value("token"), partial).to_json());
    } catch (const std::invalid_argument& e) {
      reply(res, 409, {{"error", e.what()}});
    }
  }));

  if (!options_.static_dir.empty()) {
    if (!s.set_mount_point("/", options_.static_dir)) {
      throw std::invalid_argument("static dir '" + options_.static_dir + "' does not exist");
    }
  }
}

int StudyHttpServer::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  if (!server_->bind_to_port(host, port)) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void StudyHttpServer::listen() { server_->listen_after_bind(); }

void StudyHttpServer::start() {
  thread_ = std::thread([this] { listen(); });
  server_->wait_until_ready();
}

void StudyHttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace angio
