#pragma once

// HttpTransport over cpp-httplib. Built with OpenSSL so https base URLs work.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <chrono>
#include <memory>
#include <mutex>
#include <string>

#include "reprompt/http_backend.hpp"

namespace reprompt {

class HttplibTransport : public HttpTransport {
 public:
  // base_url like "https://api.openai.com/v1"; the path part becomes a prefix.
  explicit HttplibTransport(const std::string& base_url,
                            std::chrono::seconds timeout = std::chrono::seconds(120)) {
    auto scheme_end = base_url.find("://");
    auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_begin = base_url.find('/', host_begin);
    origin_ = base_url.substr(0, path_begin);
    if (path_begin != std::string::npos) prefix_ = base_url.substr(path_begin);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    timeout_ = timeout;
  }

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::string& bearer_token) override {
    // httplib::Client is not safe for concurrent use; one client per call.
    httplib::Client client(origin_);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    httplib::Headers headers{{"Authorization", "Bearer " + bearer_token}};
    auto res = client.Post(prefix_ + path, headers, body, "application/json");
    if (!res) return {0, httplib::to_string(res.error())};
    return {res->status, res->body};
  }

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::seconds timeout_;
};

}  // namespace reprompt
