#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "funcanon/io.hpp"

namespace funcanon {

struct ChatMessage {
  std::string role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

// Chat-completion request body: {model, messages: [{role, content}]}.
struct ChatRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  bool operator==(const ChatRequest&) const = default;
};

json chat_request_to_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const json& j);

// Extracts choices[0].message.content. Throws kProtocolError if absent.
std::string parse_chat_reply(const std::string& body);

// 64-bit FNV-1a rendered as 16 lowercase hex digits. Stable across runs and platforms.
std::string stable_hash(std::string_view text);

struct HttpResponse {
  int status = 0;  // 0: no response (connect failure or timeout)
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse post_json(const std::string& body) = 0;
};

// POSTs to a full URL such as http://host:port/v1/chat/completions.
class HttplibTransport final : public HttpTransport {
 public:
  HttplibTransport(std::string url, std::string api_key,
                   std::chrono::milliseconds timeout = std::chrono::seconds(30));
  HttpResponse post_json(const std::string& body) override;

 private:
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
  std::chrono::milliseconds timeout_;
};

/// Persistent key -> reply store. Single writer; safe to share across threads.
class ResponseCache {
 public:
  ResponseCache() = default;
  // Loads `path` if it exists; save() writes back to it.
  explicit ResponseCache(std::filesystem::path path);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, std::string value);
  std::size_t size() const;
  void save() const;
  json to_json() const;

 private:
  mutable std::mutex mutex_;
  std::optional<std::filesystem::path> path_;
  std::map<std::string, std::string> entries_;
};

struct RetryPolicy {
  int max_retries = 3;
  std::chrono::milliseconds base_delay{200};
};

// Chat client with replayable caching, bounded in-flight requests, and retry with
// exponential backoff on transport failures and 5xx/429 responses.
class ChatClient {
 public:
  ChatClient(std::shared_ptr<HttpTransport> transport, std::shared_ptr<ResponseCache> cache,
             RetryPolicy retry = {}, int max_in_flight = 4);

  // Endpoint from FUNCANON_VLM_URL, key from FUNCANON_VLM_KEY. Throws kBackendUnavailable
  // when the URL is unset.
  static std::shared_ptr<ChatClient> from_environment(std::shared_ptr<ResponseCache> cache, RetryPolicy retry = {});

  // Reply content for `request`; served from the cache when `cache_key` is present.
  std::string complete(const ChatRequest& request, const std::string& cache_key);

  int network_calls() const { return network_calls_.load(); }
  ResponseCache& cache() { return *cache_; }

 private:
  std::shared_ptr<HttpTransport> transport_;
  std::shared_ptr<ResponseCache> cache_;
  RetryPolicy retry_;
  std::unique_ptr<std::counting_semaphore<64>> in_flight_;
  std::atomic<int> network_calls_{0};
};

}  // namespace funcanon
