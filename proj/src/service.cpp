#include "snmt/service.hpp"

// Bursts of simultaneous clients overflow the library default of 5.
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include <httplib.h>

#include "snmt/error.hpp"

namespace snmt {

Json translate_response(const TranslationResult& r, const std::string& model_id) {
  Json j;
  j["source_tokens"] = r.source_tokens;
  j["target_tokens"] = r.target_tokens;
  j["translation"] = r.translation;
  if (r.attention) {
    j["attention"] = r.attention->weights;
  } else {
    j["attention"] = nullptr;
  }
  j["log_prob"] = r.log_prob;
  j["truncated"] = r.truncated;
  j["model_id"] = model_id;
  return j;
}

Json error_body(std::string_view code, std::string_view message) {
  Json j;
  j["code"] = code;
  j["message"] = message;
  return j;
}

void TranslationService::install(std::shared_ptr<const Model> model) {
  std::lock_guard lock(mutex_);
  model_ = std::move(model);
}

std::shared_ptr<const TranslationService::Model> TranslationService::model() const {
  std::lock_guard lock(mutex_);
  return model_;
}

Reply TranslationService::translate(std::string_view body) const {
  const auto tm = model();
  if (!tm) return {503, error_body("model_not_loaded", "no model is loaded yet")};

  Json request = Json::parse(body, nullptr, false);
  if (request.is_discarded() || !request.is_object()) {
    return {400, error_body("malformed_body", "request body must be a JSON object")};
  }
  const auto text = request.find("text");
  if (text == request.end() || !text->is_string()) {
    return {400, error_body("malformed_body", "\"text\" must be a string")};
  }
  Index max_len = tm->model.config.max_decode_len;
  if (const auto m = request.find("max_len"); m != request.end() && !m->is_null()) {
    if (!m->is_number_integer() || m->get<std::int64_t>() < 1 ||
        m->get<std::int64_t>() > kMaxRequestLen) {
      return {400, error_body("malformed_body",
                              "\"max_len\" must be an integer in 1.." + std::to_string(kMaxRequestLen))};
    }
    max_len = m->get<Index>();
  }

  try {
    const auto result = translate_text(*tm, text->get_ref<const std::string&>(), max_len);
    return {200, translate_response(result, tm->id)};
  } catch (const EncodingError& e) {
    return {400, error_body("invalid_utf8", e.what())};
  } catch (const DomainError& e) {
    return {422, error_body("empty_input", e.what())};
  }
}

Reply TranslationService::health() const {
  const auto tm = model();
  Json j;
  if (!tm) {
    j["status"] = "loading";
    j["model_id"] = nullptr;
    return {503, j};
  }
  j["status"] = "ok";
  j["model_id"] = tm->id;
  return {200, j};
}

struct HttpServer::Impl {
  Impl(const TranslationService& s, ServerOptions o) : service(s), options(std::move(o)) {}
  const TranslationService& service;
  ServerOptions options;
  httplib::Server server;
  int port = -1;
};

namespace {

void send(httplib::Response& res, const Reply& reply) {
  res.status = reply.status;
  res.set_content(reply.body.dump(), "application/json; charset=utf-8");
}

}  // namespace

HttpServer::HttpServer(const TranslationService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
  auto& srv = impl_->server;
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});
  const TranslationService* svc = &impl_->service;
  srv.Post("/api/translate", [svc](const httplib::Request& req, httplib::Response& res) {
    send(res, svc->translate(req.body));
  });
  srv.Get("/api/health", [svc](const httplib::Request&, httplib::Response& res) {
    send(res, svc->health());
  });
  srv.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, {500, error_body("internal_error", what)});
  });
  if (impl_->options.static_dir && !srv.set_mount_point("/", impl_->options.static_dir->string())) {
    throw IoError("static directory not found: " + impl_->options.static_dir->string());
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else if (impl_->server.bind_to_port(o.host, o.port)) {
    impl_->port = o.port;
  }
  if (impl_->port < 0) {
    throw IoError("cannot listen on " + o.host + ":" + std::to_string(o.port));
  }
  return impl_->port;
}

void HttpServer::run() {
  if (impl_->port < 0) throw Error("HttpServer::run before bind");
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace snmt
