#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "snmt/decode.hpp"

namespace snmt {

using Json = nlohmann::ordered_json;

/// TranslateResponse: source_tokens, target_tokens, translation, attention
/// (rows x cols or null), log_prob, truncated, model_id.
Json translate_response(const TranslationResult& result, const std::string& model_id);

/// Error body: {"code": ..., "message": ...}.
Json error_body(std::string_view code, std::string_view message);

struct Reply {
  int status = 200;
  Json body;
};

inline constexpr Index kMaxRequestLen = 500;

/// Request handling independent of the transport. The model is shared and
/// never written after install; requests only read it.
class TranslationService {
 public:
  using Model = TranslationModel<float>;

  TranslationService() = default;
  explicit TranslationService(std::shared_ptr<const Model> model) : model_(std::move(model)) {}

  void install(std::shared_ptr<const Model> model);
  std::shared_ptr<const Model> model() const;

  /// POST /api/translate with a JSON body {"text": ..., "max_len": ...}.
  Reply translate(std::string_view body) const;
  /// GET /api/health.
  Reply health() const;

 private:
  mutable std::mutex mutex_;  // guards the pointer, not the model
  std::shared_ptr<const Model> model_;
};

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 7860;  // 0 binds an ephemeral port
  std::optional<std::filesystem::path> static_dir;
};

/// HTTP front end with permissive cross-origin headers.
class HttpServer {
 public:
  HttpServer(const TranslationService& service, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the socket and returns the port. Throws IoError.
  int bind();
  /// Serves until stop(); requires bind().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace snmt
