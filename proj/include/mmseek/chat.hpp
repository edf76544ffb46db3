// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Chat-completion-style message model and the client interfaces bound to
// external endpoints (policy, judge, expert, scorer). Any server speaking
// messages-in / text-out can be plugged in.

#include <memory>
#include <string>
#include <vector>

#include "mmseek/core.hpp"

namespace mmseek {

enum class Role { system, user, assistant };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

struct Message {
    Role role = Role::user;
    std::string content;
    std::vector<ImageRef> images;  // attachments; first user turn carries the query image

    static Message system(std::string content) { return {Role::system, std::move(content), {}}; }
    static Message user(std::string content, std::vector<ImageRef> images = {}) {
        return {Role::user, std::move(content), std::move(images)};
    }
    static Message assistant(std::string content) {
        return {Role::assistant, std::move(content), {}};
    }

    bool operator==(const Message&) const = default;
};

// Canonical single-string rendering of one message. Concatenative by design:
// render(messages) == join(render(m) for m), which lets tokenization segment
// the full context without re-rendering.
inline std::string render_message(const Message& m) {
    std::string out = "<|";
    out += to_string(m.role);
    out += "|>\n";
    out += m.content;
    out += '\n';
    for (const auto& img : m.images) {
        out += "[image: ";
        out += img.uri;
        if (!img.content_hash.empty()) {
            out += " sha256:";
            out += img.content_hash;
        }
        out += "]\n";
    }
    return out;
}

inline std::string render_messages(const std::vector<Message>& msgs) {
    std::string out;
    for (const auto& m : msgs) out += render_message(m);
    return out;
}

struct SamplingParams {
    double temperature = 0.0;
    int max_tokens = 1024;  // per-turn token budget, passed through
};

// Text-out endpoint contract shared by the judge, expert, scorer and solver
// bindings. Implementations must be safe for concurrent calls.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const std::vector<Message>& messages,
                                 const SamplingParams& params) = 0;
};

struct TokenLogProb {
    std::string token;
    double logprob = 0.0;
};

struct PolicyTurn {
    std::string text;
    std::vector<TokenLogProb> logprobs;  // empty when the backend does not report them
};

// The trainable policy behind an endpoint: next assistant turn for an ordered
// message list, with per-token log-probabilities when the backend provides
// them. Deterministic at temperature 0 for the scripted test backend.
class PolicyClient {
public:
    virtual ~PolicyClient() = default;
    virtual PolicyTurn next_turn(const std::vector<Message>& messages,
                                 const SamplingParams& params) = 0;
};

}  // namespace mmseek
