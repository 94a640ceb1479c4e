#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "vdforge/log.hpp"
#include "vdforge/policy.hpp"

namespace vdforge::policy {

namespace {

struct Endpoint {
  std::string base;    // scheme://host[:port]
  std::string prefix;  // path prefix without trailing '/'
};

Endpoint split_endpoint(const std::string& url) {
  auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("endpoint must include a scheme: " + url);
  auto slash = url.find('/', scheme + 3);
  Endpoint e;
  e.base = url.substr(0, slash);
  if (slash != std::string::npos) e.prefix = url.substr(slash);
  while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
  return e;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string media_type(std::span<const std::uint8_t> bytes) {
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return "image/jpeg";
  }
  return "image/png";
}

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

RemoteBackend::RemoteBackend(RemoteConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) throw Error("remote backend: endpoint is required");
  if (cfg_.model.empty()) throw Error("remote backend: model is required");
  if (cfg_.timeout_ms <= 0) throw Error("remote backend: timeout must be > 0");
  if (cfg_.max_attempts < 1) throw Error("remote backend: at least one attempt is required");
  if (cfg_.policy_id.empty()) throw Error("remote backend: empty policy id");
  (void)split_endpoint(cfg_.endpoint);
}

std::string RemoteBackend::request_body(const GenerationRequest& req) const {
  if (req.image_path.empty()) throw Error("remote backend needs an image path");
  const auto bytes = read_bytes(req.image_path);
  nlohmann::ordered_json image_part = {
      {"type", "image_url"},
      {"image_url", {{"url", "data:" + media_type(bytes) + ";base64," + base64_encode(bytes)}}}};
  nlohmann::ordered_json text_part = {
      {"type", "text"}, {"text", render_prompt(cfg_.prompt_template, req.instance.question)}};
  nlohmann::ordered_json body;
  body["model"] = cfg_.model;
  body["messages"] = nlohmann::ordered_json::array(
      {{{"role", "user"}, {"content", nlohmann::ordered_json::array({image_part, text_part})}}});
  body["temperature"] = req.decode.temperature;
  body["max_tokens"] = req.decode.max_tokens;
  body["seed"] = req.decode.seed;
  return body.dump();
}

ResponseRecord RemoteBackend::generate(const GenerationRequest& req) {
  const Endpoint ep = split_endpoint(cfg_.endpoint);
  const std::string body = request_body(req);
  httplib::Headers headers;
  if (const char* token = std::getenv(cfg_.token_env.c_str()); token && *token) {
    headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  httplib::Client client(ep.base);
  const auto timeout = std::chrono::milliseconds(cfg_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  std::string last_error;
  int backoff = cfg_.backoff_ms;
  for (int attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    auto res = client.Post(ep.prefix + "/v1/chat/completions", headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        ResponseRecord rec;
        rec.instance_id = req.instance.id;
        rec.view_label = req.view.label();
        rec.policy_id = cfg_.policy_id;
        rec.decode = req.decode;
        rec.text = content.get<std::string>();
        rec.token_count = whitespace_token_count(rec.text);
        return rec;
      } catch (const nlohmann::json::exception& e) {
        throw Error("malformed completion response for instance \"" + req.instance.id +
                    "\": " + e.what());
      }
    } else {
      last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      if (!retryable(res->status)) {
        throw Error("inference service rejected request for instance \"" + req.instance.id +
                    "\": " + last_error);
      }
    }
    if (attempt < cfg_.max_attempts) {
      log_warn("attempt " + std::to_string(attempt) + " failed for \"" + req.instance.id +
               "\" (" + last_error + "); retrying in " + std::to_string(backoff) + " ms");
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw Error("inference request for instance \"" + req.instance.id + "\" failed after " +
              std::to_string(cfg_.max_attempts) + " attempt(s): " + last_error);
}

}  // namespace vdforge::policy
