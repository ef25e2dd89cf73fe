#include "funcanon/chat_client.hpp"

#include <cstdio>
#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "funcanon/error.hpp"

namespace funcanon {

json chat_request_to_json(const ChatRequest& request) {
  json j;
  j["model"] = request.model;
  j["messages"] = json::array();
  for (const auto& m : request.messages) j["messages"].push_back({{"role", m.role}, {"content", m.content}});
  return j;
}

ChatRequest chat_request_from_json(const json& j) {
  try {
    ChatRequest r;
    r.model = j.at("model").get<std::string>();
    for (const auto& m : j.at("messages")) {
      r.messages.push_back({m.at("role").get<std::string>(), m.at("content").get<std::string>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("chat request: ") + e.what());
  }
}

std::string parse_chat_reply(const std::string& body) {
  try {
    const json j = json::parse(body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocolError, std::string("chat reply: ") + e.what());
  }
}

std::string stable_hash(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

HttplibTransport::HttplibTransport(std::string url, std::string api_key, std::chrono::milliseconds timeout)
    : api_key_(std::move(api_key)), timeout_(timeout) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "endpoint URL needs a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_port_ = url.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url.substr(path_start);
}

HttpResponse HttplibTransport::post_json(const std::string& body) {
  httplib::Client client(scheme_host_port_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) return {};
  return {res->status, res->body};
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) {
    const json j = read_json_file(*path_);
    for (const auto& [k, v] : j.items()) entries_[k] = v.get<std::string>();
  }
}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::put(const std::string& key, std::string value) {
  std::lock_guard lock(mutex_);
  entries_[key] = std::move(value);
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

json ResponseCache::to_json() const {
  std::lock_guard lock(mutex_);
  json j = json::object();
  for (const auto& [k, v] : entries_) j[k] = v;
  return j;
}

void ResponseCache::save() const {
  if (path_) write_json_file(*path_, to_json());
}

ChatClient::ChatClient(std::shared_ptr<HttpTransport> transport, std::shared_ptr<ResponseCache> cache,
                       RetryPolicy retry, int max_in_flight)
    : transport_(std::move(transport)),
      cache_(cache ? std::move(cache) : std::make_shared<ResponseCache>()),
      retry_(retry) {
  if (max_in_flight < 1 || max_in_flight > 64) {
    throw Error(ErrorCode::kInvalidArgument, "max_in_flight must be in [1, 64]");
  }
  in_flight_ = std::make_unique<std::counting_semaphore<64>>(max_in_flight);
}

std::shared_ptr<ChatClient> ChatClient::from_environment(std::shared_ptr<ResponseCache> cache, RetryPolicy retry) {
  const char* url = std::getenv("FUNCANON_VLM_URL");
  const char* key = std::getenv("FUNCANON_VLM_KEY");
  if (url == nullptr || *url == '\0') {
    throw Error(ErrorCode::kBackendUnavailable, "FUNCANON_VLM_URL is not set");
  }
  return std::make_shared<ChatClient>(std::make_shared<HttplibTransport>(url, key ? key : ""), std::move(cache), retry);
}

std::string ChatClient::complete(const ChatRequest& request, const std::string& cache_key) {
  if (auto hit = cache_->get(cache_key)) return *hit;
  if (!transport_) throw Error(ErrorCode::kBackendUnavailable, "cache miss and no transport configured");

  const std::string body = chat_request_to_json(request).dump();
  HttpResponse last;
  for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(retry_.base_delay * (1 << (attempt - 1)));
    in_flight_->acquire();
    ++network_calls_;
    try {
      last = transport_->post_json(body);
    } catch (...) {
      in_flight_->release();
      throw;
    }
    in_flight_->release();
    const bool retryable = last.status == 0 || last.status == 429 || last.status >= 500;
    if (retryable) continue;
    if (last.status < 200 || last.status >= 300) {
      throw Error(ErrorCode::kProtocolError, "endpoint returned HTTP " + std::to_string(last.status));
    }
    std::string content = parse_chat_reply(last.body);
    cache_->put(cache_key, content);
    return content;
  }
  throw Error(ErrorCode::kBackendUnavailable,
              "no usable reply after " + std::to_string(retry_.max_retries) + " retries (last status " +
                  std::to_string(last.status) + ")");
}

}  // namespace funcanon
