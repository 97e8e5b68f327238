#include "infosched/service/http.hpp"

#include <sstream>

#include <fmt/format.h>
#include <httplib.h>

#include "infosched/artifacts.hpp"
#include "infosched/error.hpp"

namespace infosched::service {

using nlohmann::json;

int http_status(const std::exception& error) {
  if (dynamic_cast<const NotFoundError*>(&error)) return 404;
  if (dynamic_cast<const StateError*>(&error)) return 409;
  if (dynamic_cast<const ConfigError*>(&error)) return 400;
  if (dynamic_cast<const NumericError*>(&error)) return 422;
  if (dynamic_cast<const json::exception*>(&error)) return 400;
  return 500;
}

namespace {

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename F>
httplib::Server::Handler guarded(F&& handler) {
  return [handler = std::forward<F>(handler)](const httplib::Request& req,
                                              httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const std::exception& e) {
      reply(res, http_status(e), {{"error", e.what()}});
    }
  };
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("request body is not JSON: {}", e.what()));
  }
}

std::vector<double> coordinates(const json& value, const char* what) {
  if (value.is_number()) return {value.get<double>()};
  if (value.is_array()) {
    std::vector<double> out;
    for (const auto& v : value) {
      if (!v.is_number()) throw ConfigError(fmt::format("'{}' must hold numbers", what));
      out.push_back(v.get<double>());
    }
    return out;
  }
  throw ConfigError(fmt::format("'{}' must be a number or an array of numbers", what));
}

std::vector<double> csv_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("'{}' is not a number", item));
    }
  }
  return out;
}

int parse_int(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(fmt::format("{} '{}' is not an integer", what, text));
}

}  // namespace

struct HttpServer::Impl {
  explicit Impl(SessionManager& s) : sessions(s) {}
  SessionManager& sessions;
  httplib::Server server;
};

HttpServer::HttpServer(SessionManager& sessions)
    : impl_(std::make_unique<Impl>(sessions)) {
  auto& srv = impl_->server;
  SessionManager& mgr = impl_->sessions;

  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  });

  srv.Get("/policies", guarded([&mgr](const httplib::Request&, httplib::Response& res) {
    json out = json::array();
    for (const auto& name : mgr.store().names()) {
      const auto b = mgr.store().find(name);
      json modes = json::array();
      for (Mode m : {Mode::dp, Mode::averaged, Mode::vi}) {
        if (b->has(m)) modes.push_back(to_string(m));
      }
      out.push_back({{"name", name},
                     {"model", b->setup.config.name},
                     {"n", b->setup.config.n},
                     {"tau", b->setup.mesh.horizon()},
                     {"modes", std::move(modes)}});
    }
    reply(res, 200, out);
  }));

  srv.Post("/sessions", guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("policy") || !body.at("policy").is_string()) {
      throw ConfigError("'policy' must name a loaded policy");
    }
    const Mode mode = parse_mode(body.value("mode", std::string("dp")));
    std::optional<std::vector<double>> x0;
    if (body.contains("x0") && !body.at("x0").is_null()) x0 = coordinates(body.at("x0"), "x0");
    const auto created = mgr.create(body.at("policy").get<std::string>(), mode, x0);
    reply(res, 201,
          {{"id", created.id},
           {"n", created.n},
           {"tau", created.tau},
           {"next_time", created.next_time ? json(*created.next_time) : json(nullptr)}});
  }));

  srv.Get(R"(/sessions/([^/]+))",
          guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, mgr.describe(req.matches[1].str()));
          }));

  srv.Post(R"(/sessions/([^/]+)/observations)",
           guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
             const json body = parse_body(req);
             if (!body.contains("t") || !body.at("t").is_number()) {
               throw ConfigError("'t' must be a number");
             }
             if (!body.contains("x")) throw ConfigError("'x' is required");
             const auto x = coordinates(body.at("x"), "x");
             const auto result = mgr.submit(req.matches[1].str(), body.at("t").get<double>(), x);
             reply(res, 200, to_json(result));
           }));

  srv.Get(R"(/sessions/([^/]+)/policy/([^/]+))",
          guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            const int i = parse_int(req.matches[2].str(), "observation index");
            std::size_t axis = 0;
            if (req.has_param("axis")) {
              const int a = parse_int(req.get_param_value("axis"), "axis");
              if (a < 0) throw ConfigError("axis must be >= 0");
              axis = static_cast<std::size_t>(a);
            }
            std::optional<std::vector<double>> at;
            if (req.has_param("at")) at = csv_numbers(req.get_param_value("at"));
            reply(res, 200, mgr.policy_view(req.matches[1].str(), i, axis, at));
          }));

  srv.Get(R"(/sessions/([^/]+)/posterior)",
          guarded([&mgr](const httplib::Request& req, httplib::Response& res) {
            reply(res, 200, prior_to_json(mgr.posterior(req.matches[1].str())));
          }));
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw Error(fmt::format("cannot bind {}:{}", host, port));
  return bound;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace infosched::service
