#pragma once

#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#include <httplib.h>

#include "moundline/error.hpp"
#include "moundline/service/run_store.hpp"

namespace moundline::service {

inline void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& msg) {
  send_json(res, status, {{"v", 1}, {"error", {{"code", code}, {"message", msg}}}});
}

/// Runs a handler, mapping exceptions to JSON error responses.
template <class F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const HttpError& e) {
    const char* code = e.status() == 404 ? "not_found" : e.status() == 409 ? "conflict" : "invalid";
    send_error(res, e.status(), code, e.what());
  } catch (const Error& e) {
    send_error(res, e.is_validation() ? 422 : 500, std::string(to_string(e.code())), e.what());
  } catch (const json::exception& e) {
    send_error(res, 422, "parse", e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, "internal", e.what());
  }
}

inline bool parse_bool_param(const httplib::Request& req, const std::string& name, bool fallback) {
  if (!req.has_param(name)) return fallback;
  const auto v = req.get_param_value(name);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw HttpError(422, name + " must be true or false");
}

inline double parse_threshold_param(const httplib::Request& req, double fallback) {
  if (!req.has_param("threshold")) return fallback;
  const auto v = req.get_param_value("threshold");
  char* end = nullptr;
  const double t = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !(t >= 0 && t <= 1)) {
    throw HttpError(422, "threshold must be a number in [0,1]");
  }
  return t;
}

/// Registers every endpoint on `server`. The registry must outlive it.
inline void mount(httplib::Server& server, RunRegistry& runs) {
  constexpr const char* kId = "([A-Za-z0-9._-]+)";
  const std::string base = std::string("/runs/") + kId;

  server.Get("/runs", [&runs](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, runs.list()); });
  });

  server.Get(base, [&runs](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, runs.get(req.matches[1])->info()); });
  });

  server.Get(base + "/candidates", [&runs](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto run = runs.get(req.matches[1]);
      send_json(res, 200, run->candidates_json(parse_threshold_param(req, run->config().postproc.params.threshold)));
    });
  });

  server.Get(base + "/heatmap.png", [&runs](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto path = runs.get(req.matches[1])->heatmap_path();
      if (!path) throw HttpError(404, "run has no heatmap");
      std::ifstream in(*path, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      res.status = 200;
      res.set_content(bytes, "image/png");
    });
  });

  server.Post(base + "/reviews", [&runs](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto run = runs.get(req.matches[1]);
      json body;
      try {
        body = json::parse(req.body);
      } catch (const json::exception& e) {
        throw HttpError(422, std::string("malformed JSON: ") + e.what());
      }
      const auto r = run->post_review(body);
      send_json(res, r.status, r.body);
    });
  });

  server.Get(base + "/export/annotations", [&runs](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, runs.get(req.matches[1])->export_annotations()); });
  });

  server.Get(base + "/metrics", [&runs](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      auto run = runs.get(req.matches[1]);
      send_json(res, 200, run->metrics_json(parse_bool_param(req, "adjusted", false)));
    });
  });

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(/runs.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

}  // namespace moundline::service
