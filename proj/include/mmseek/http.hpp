// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP bindings for chat-completion-style endpoints. A fresh connection per
// request keeps the clients trivially safe for concurrent rollout workers.

#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "mmseek/chat.hpp"
#include "mmseek/log.hpp"

namespace mmseek {

struct EndpointConfig {
    std::string url;       // e.g. http://host:port or http://host:port/custom/path
    std::string api_key;   // sent as a bearer token when non-empty
    std::string model;     // passed through in the request body
    int max_retries = 3;   // attempts, not extra tries
    int backoff_ms = 250;  // doubled per retry
    int timeout_sec = 60;
};

namespace detail {

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

inline ParsedUrl split_url(const std::string& url, const std::string& default_path) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("endpoint url missing scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, default_path};
    const std::string path = url.substr(path_start);
    return {url.substr(0, path_start), path == "/" ? default_path : path};
}

inline json message_to_api_json(const Message& m) {
    json jm{{"role", to_string(m.role)}};
    if (m.images.empty()) {
        jm["content"] = m.content;
    } else {
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", m.content}});
        for (const auto& img : m.images) {
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", img.uri}}}});
        }
        jm["content"] = parts;
    }
    return jm;
}

inline json chat_request_body(const EndpointConfig& cfg, const std::vector<Message>& messages,
                              const SamplingParams& params) {
    json jmsgs = json::array();
    for (const auto& m : messages) jmsgs.push_back(message_to_api_json(m));
    json body{{"messages", jmsgs},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens}};
    if (!cfg.model.empty()) body["model"] = cfg.model;
    return body;
}

inline std::string extract_completion_text(const json& resp) {
    if (!resp.contains("choices") || resp["choices"].empty()) {
        throw BackendUnavailable("completion response has no choices");
    }
    const auto& msg = resp["choices"][0]["message"];
    if (!msg.contains("content") || msg["content"].is_null()) return "";
    return msg["content"].get<std::string>();
}

}  // namespace detail

// POSTs a JSON body with bounded retries and exponential backoff. Throws
// BackendUnavailable once attempts are exhausted.
inline json post_json(const EndpointConfig& cfg, const std::string& default_path,
                      const json& body) {
    const auto [base, path] = detail::split_url(cfg.url, default_path);
    httplib::Headers headers;
    if (!cfg.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg.api_key);
    std::string last_error;
    int backoff = cfg.backoff_ms;
    for (int attempt = 0; attempt < std::max(1, cfg.max_retries); ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
            backoff *= 2;
        }
        httplib::Client client(base);
        client.set_connection_timeout(cfg.timeout_sec);
        client.set_read_timeout(cfg.timeout_sec);
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http " + std::to_string(res->status);
            continue;
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            last_error = std::string("bad json body: ") + e.what();
        }
    }
    throw BackendUnavailable("POST " + base + path + " failed: " + last_error);
}

// Chat-completion client: messages in, assistant text out.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

    std::string complete(const std::vector<Message>& messages,
                         const SamplingParams& params) override {
        const json resp =
            post_json(cfg_, "/v1/chat/completions", detail::chat_request_body(cfg_, messages, params));
        return detail::extract_completion_text(resp);
    }

    const EndpointConfig& config() const { return cfg_; }

private:
    EndpointConfig cfg_;
};

// Policy endpoint client; requests per-token logprobs and surfaces them when
// the backend reports any.
class HttpPolicyClient : public PolicyClient {
public:
    explicit HttpPolicyClient(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

    PolicyTurn next_turn(const std::vector<Message>& messages,
                         const SamplingParams& params) override {
        json body = detail::chat_request_body(cfg_, messages, params);
        body["logprobs"] = true;
        const json resp = post_json(cfg_, "/v1/chat/completions", body);
        if (!resp.contains("choices") || resp["choices"].empty()) {
            throw BackendUnavailable("policy response has no choices");
        }
        PolicyTurn turn;
        const auto& choice = resp["choices"][0];
        const auto& msg = choice["message"];
        if (msg.contains("content") && !msg["content"].is_null()) {
            turn.text = msg["content"].get<std::string>();
        }
        if (choice.contains("logprobs") && choice["logprobs"].is_object()) {
            for (const auto& item : choice["logprobs"].value("content", json::array())) {
                turn.logprobs.push_back({item.value("token", ""), item.value("logprob", 0.0)});
            }
        }
        return turn;
    }

    const EndpointConfig& config() const { return cfg_; }

private:
    EndpointConfig cfg_;
};

}  // namespace mmseek
