#pragma once

// Eigen-based headers must precede httplib: <resolv.h> defines a `_res`
// macro that collides with identifiers inside Eigen.
#include "wet/codec.hpp"
#include "wet/corpus.hpp"
#include "wet/error.hpp"
#include "wet/keygen.hpp"
#include "wet/rng.hpp"
#include "wet/verifier.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <atomic>
#include <bit>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

namespace wet {

class UpstreamError : public Error {
 public:
  using Error::Error;
};

struct ProxyConfig {
  std::string listen_host = "127.0.0.1";
  int listen_port = 8080;
  std::string upstream_url;
  std::string upstream_auth_env;
  std::string key_path;
  std::chrono::milliseconds request_timeout{30000};
  int max_batch = 64;

  void validate() const {
    if (max_batch < 1) throw ParameterError("proxy config: max_batch must be >= 1");
    if (listen_port < 0 || listen_port > 65535) throw ParameterError("proxy config: invalid listen port");
    if (upstream_url.empty()) throw ParameterError("proxy config: upstream_url is required");
    if (key_path.empty()) throw ParameterError("proxy config: key_path is required");
    if (request_timeout.count() <= 0) throw ParameterError("proxy config: request_timeout must be positive");
  }
};

namespace detail {

// "250ms", "30s", "2m" or a bare number of seconds.
inline std::chrono::milliseconds parse_duration(const nlohmann::json& j) {
  if (j.is_number()) return std::chrono::milliseconds(static_cast<std::int64_t>(j.get<double>() * 1000.0));
  const auto s = j.get<std::string>();
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw FormatError("invalid duration '" + s + "'");
  }
  const auto unit = s.substr(used);
  if (unit == "ms") return std::chrono::milliseconds(static_cast<std::int64_t>(value));
  if (unit == "s" || unit.empty()) return std::chrono::milliseconds(static_cast<std::int64_t>(value * 1000.0));
  if (unit == "m") return std::chrono::milliseconds(static_cast<std::int64_t>(value * 60000.0));
  throw FormatError("invalid duration unit in '" + s + "'");
}

}  // namespace detail

inline ProxyConfig proxy_config_from_json(const nlohmann::json& j) {
  try {
    ProxyConfig c;
    const auto listen = j.value("listen_address", std::string("127.0.0.1:8080"));
    const auto colon = listen.rfind(':');
    if (colon == std::string::npos) throw FormatError("listen_address must be host:port");
    c.listen_host = listen.substr(0, colon);
    c.listen_port = std::stoi(listen.substr(colon + 1));
    c.upstream_url = j.at("upstream_url").get<std::string>();
    c.upstream_auth_env = j.value("upstream_auth_env", std::string());
    c.key_path = j.at("key_path").get<std::string>();
    if (j.contains("request_timeout")) c.request_timeout = detail::parse_duration(j.at("request_timeout"));
    c.max_batch = j.value("max_batch", c.max_batch);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed proxy config: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("malformed proxy config: bad listen port");
  } catch (const std::out_of_range&) {
    throw FormatError("malformed proxy config: bad listen port");
  }
}

inline ProxyConfig load_proxy_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open proxy config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception&) {
    throw FormatError("proxy config " + path + " is not valid JSON");
  }
  return proxy_config_from_json(j);
}

/// First 8 hex digits of SHA-256 over the row-major little-endian matrix bytes.
inline std::string key_fingerprint(const Matrix& m) {
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<unsigned char>(bits >> (8 * b)));
    }
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("fingerprint: digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (int i = 0; i < 4; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

// Contract: exactly one vector per input text, in order.
class UpstreamClient {
 public:
  virtual ~UpstreamClient() = default;
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
};

/// Deterministic stand-in provider: each text hashes (FNV-1a) to a seed for
/// a unit vector of dimension `dim`.
class MockUpstream : public UpstreamClient {
 public:
  MockUpstream(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (dim < 1) throw ParameterError("mock upstream: dim must be >= 1");
  }

  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    std::vector<Vector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  Vector embed_one(const std::string& text) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    Rng rng(derive_seed(seed_, h));
    return random_unit(dim_, rng);
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Generic JSON-over-HTTP provider. Sends {"input": [texts]} and accepts
/// either {"embeddings": [[...]]} or {"data": [{"embedding": [...], "index": i}]}.
class HttpUpstream : public UpstreamClient {
 public:
  HttpUpstream(const std::string& url, std::string bearer_token, std::chrono::milliseconds timeout)
      : token_(std::move(bearer_token)), timeout_(timeout) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ParameterError("upstream url must include a scheme");
    const auto path_start = url.find('/', scheme_end + 3);
    base_ = path_start == std::string::npos ? url : url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
  }

  std::vector<Vector> embed(const std::vector<std::string>& texts) override {
    httplib::Client client(base_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    const nlohmann::json body = {{"input", texts}};
    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res) throw UpstreamError("upstream request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) throw UpstreamError("upstream returned HTTP " + std::to_string(res->status));
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      throw UpstreamError("upstream returned invalid JSON");
    }
    return parse_response(j, texts.size());
  }

  static std::vector<Vector> parse_response(const nlohmann::json& j, std::size_t expected) {
    std::vector<Vector> out;
    try {
      if (j.contains("embeddings")) {
        for (const auto& e : j.at("embeddings")) out.push_back(to_vector(e.get<std::vector<double>>()));
      } else if (j.contains("data")) {
        out.resize(j.at("data").size());
        std::size_t pos = 0;
        for (const auto& item : j.at("data")) {
          const std::size_t idx = item.contains("index") ? item.at("index").get<std::size_t>() : pos;
          if (idx >= out.size()) throw UpstreamError("upstream response index out of range");
          out[idx] = to_vector(item.at("embedding").get<std::vector<double>>());
          ++pos;
        }
      } else {
        throw UpstreamError("upstream response has no embeddings");
      }
    } catch (const nlohmann::json::exception&) {
      throw UpstreamError("upstream response is malformed");
    }
    if (out.size() != expected) throw UpstreamError("upstream returned a different number of embeddings");
    return out;
  }

 private:
  std::string base_;
  std::string path_;
  std::string token_;
  std::chrono::milliseconds timeout_;
};

// "mock:" or "mock:seed=N" selects MockUpstream; anything else is HTTP(S).
inline std::unique_ptr<UpstreamClient> make_upstream(const ProxyConfig& cfg, int dim) {
  if (cfg.upstream_url.rfind("mock:", 0) == 0) {
    std::uint64_t seed = 0;
    const auto eq = cfg.upstream_url.find("seed=");
    if (eq != std::string::npos) seed = std::stoull(cfg.upstream_url.substr(eq + 5));
    return std::make_unique<MockUpstream>(dim, seed);
  }
  std::string token;
  if (!cfg.upstream_auth_env.empty()) {
    if (const char* v = std::getenv(cfg.upstream_auth_env.c_str())) token = v;
  }
  return std::make_unique<HttpUpstream>(cfg.upstream_url, std::move(token), cfg.request_timeout);
}

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
  std::optional<int> retry_after;  // seconds
};

/// Transport-independent request handling. The key is loaded once and only
/// ever read; nothing here mutates shared state, so handlers may run
/// concurrently.
class WatermarkService {
 public:
  WatermarkService(std::shared_ptr<const WatermarkKey> key, std::shared_ptr<UpstreamClient> upstream, int max_batch)
      : key_(std::move(key)), upstream_(std::move(upstream)), max_batch_(max_batch),
        fingerprint_(key_fingerprint(key_->matrix())) {
    if (max_batch_ < 1) throw ParameterError("max_batch must be >= 1");
  }

  const std::string& fingerprint() const noexcept { return fingerprint_; }

  ServiceResponse health() const { return {200, {{"status", "ok"}, {"key_fingerprint", fingerprint_}}, {}}; }

  ServiceResponse handle_embed(const nlohmann::json& request) const {
    if (!request.is_object() || !request.contains("texts") || !request.at("texts").is_array()) {
      return error(400, "request must be an object with a \"texts\" array");
    }
    const auto& arr = request.at("texts");
    if (arr.empty()) return error(400, "\"texts\" must not be empty");
    if (arr.size() > static_cast<std::size_t>(max_batch_)) {
      return error(413, "batch of " + std::to_string(arr.size()) + " texts exceeds max_batch " +
                            std::to_string(max_batch_));
    }
    std::vector<std::string> texts;
    texts.reserve(arr.size());
    for (const auto& t : arr) {
      if (!t.is_string()) return error(400, "every entry of \"texts\" must be a string");
      texts.push_back(t.get<std::string>());
    }
    std::vector<Vector> raw;
    try {
      raw = upstream_->embed(texts);
    } catch (const std::exception&) {
      ServiceResponse r = error(502, "upstream embedding provider failed; retry later");
      r.body["retry"] = true;
      r.retry_after = 1;
      return r;
    }
    if (raw.size() != texts.size()) {
      ServiceResponse r = error(502, "upstream returned a different number of embeddings; retry later");
      r.body["retry"] = true;
      r.retry_after = 1;
      return r;
    }
    nlohmann::json embeddings = nlohmann::json::array();
    for (const auto& v : raw) {
      if (v.size() != key_->n()) {
        return error(500, "configuration fault: upstream dimension " + std::to_string(v.size()) +
                              " does not match the key's input dimension");
      }
      Vector marked;
      try {
        marked = inject(*key_, v);
      } catch (const Error&) {
        return error(502, "upstream returned an unusable embedding");
      }
      embeddings.push_back(to_std(marked));
    }
    return {200, {{"embeddings", std::move(embeddings)}, {"dim", key_->w()}, {"watermarked", true}}, {}};
  }

  ServiceResponse handle_verify(const nlohmann::json& request) const {
    if (!request.is_object()) return error(400, "request must be a JSON object");
    try {
      auto list = [&](const char* name) { return records_from_json(request.at(name)); };
      const auto suspect = list("suspect");
      const auto original = list("original");
      const auto contrast_suspect = list("contrast_suspect");
      const auto contrast_original = list("contrast_original");
      const double threshold = request.value("threshold", kDefaultThreshold);
      const auto report = verify(*key_, suspect, original, contrast_suspect, contrast_original, threshold);
      return {200, report_to_json(report), {}};
    } catch (const IdMismatch& e) {
      ServiceResponse r = error(400, e.what());
      r.body["ids"] = e.ids();
      return r;
    } catch (const Error& e) {
      return error(400, e.what());
    } catch (const nlohmann::json::exception&) {
      return error(400, "verify request needs suspect, original, contrast_suspect and contrast_original lists");
    }
  }

 private:
  static ServiceResponse error(int status, const std::string& message) {
    return {status, {{"error", message}}, {}};
  }

  std::shared_ptr<const WatermarkKey> key_;
  std::shared_ptr<UpstreamClient> upstream_;
  int max_batch_;
  std::string fingerprint_;
};

// Thread-safe line logger. Lines carry only method, path, status, counts
// and latency.
class RequestLog {
 public:
  explicit RequestLog(std::ostream* sink) : sink_(sink) {}

  void write(const std::string& line) {
    if (!sink_) return;
    std::lock_guard lock(mu_);
    *sink_ << line << '\n';
    sink_->flush();
  }

 private:
  std::ostream* sink_;
  std::mutex mu_;
};

/// HTTP front end: POST /v1/embed, POST /v1/verify, GET /healthz.
class ProxyServer {
 public:
  ProxyServer(std::shared_ptr<const WatermarkService> service, std::ostream* log_sink)
      : service_(std::move(service)), log_(log_sink) {
    server_.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
      dispatch(req, res, [this](const nlohmann::json& j) { return service_->handle_embed(j); });
    });
    server_.Post("/v1/verify", [this](const httplib::Request& req, httplib::Response& res) {
      dispatch(req, res, [this](const nlohmann::json& j) { return service_->handle_verify(j); });
    });
    server_.Get("/healthz", [this](const httplib::Request& req, httplib::Response& res) {
      const auto start = std::chrono::steady_clock::now();
      send(res, service_->health());
      log_request(req, res.status, start);
    });
  }

  ProxyServer(const ProxyServer&) = delete;
  ProxyServer& operator=(const ProxyServer&) = delete;

  ~ProxyServer() { stop(); }

  // Returns the bound port; port 0 picks a free one.
  int bind(const std::string& host, int port) {
    if (port == 0) {
      port = server_.bind_to_any_port(host);
      if (port < 0) throw Error("cannot bind " + host);
    } else if (!server_.bind_to_port(host, port)) {
      throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
  }

  // Blocks until stop().
  void listen() { server_.listen_after_bind(); }

  void start_background() {
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  template <class Handler>
  void dispatch(const httplib::Request& req, httplib::Response& res, Handler&& handler) {
    const auto start = std::chrono::steady_clock::now();
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      send(res, {400, {{"error", "request body is not valid JSON"}}, {}});
      log_request(req, res.status, start);
      return;
    }
    try {
      send(res, handler(body));
    } catch (const std::exception&) {
      send(res, {500, {{"error", "internal error"}}, {}});
    }
    log_request(req, res.status, start);
  }

  static void send(httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    if (r.retry_after) res.set_header("Retry-After", std::to_string(*r.retry_after));
    res.set_content(r.body.dump(), "application/json");
  }

  void log_request(const httplib::Request& req, int status, std::chrono::steady_clock::time_point start) {
    const auto ms =
        std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start).count() /
        1000.0;
    log_.write(req.method + " " + req.path + " " + std::to_string(status) + " bytes_in=" +
               std::to_string(req.body.size()) + " ms=" + std::to_string(ms));
  }

  std::shared_ptr<const WatermarkService> service_;
  RequestLog log_;
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace wet
