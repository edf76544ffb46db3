// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Textual wire format of the rollout loop: think/tool_call tags emitted by
// the policy, and the fenced information blocks carrying tool responses back
// into the context. Everything here is deterministic; rollouts are replayable
// from these renderings alone.

#include <string>

#include "mmseek/core.hpp"

namespace mmseek {

// How a retrieved top image is presented back to the policy: attached as
// pixels alongside the titles, or described by titles alone.
enum class ImagePresentation { pixels_and_titles, titles_only };

inline constexpr const char* kThinkOpen = "<think>";
inline constexpr const char* kThinkClose = "</think>";
inline constexpr const char* kToolCallOpen = "<tool_call>";
inline constexpr const char* kToolCallClose = "</tool_call>";
inline constexpr const char* kInformationOpen = "<information>";
inline constexpr const char* kInformationClose = "</information>";

// Wire-level JSON of a tool call, as the policy is instructed to emit it.
inline json tool_call_wire_json(const ToolCall& call) {
    json args = json::object();
    if (const auto* is = std::get_if<ImageSearchCall>(&call)) {
        if (!is->image.uri.empty() && is->image.uri != kQueryImageHandle) {
            args["image"] = is->image.uri;
        }
    } else if (const auto* ts = std::get_if<TextSearchCall>(&call)) {
        args["query"] = ts->query;
    }
    return json{{"arguments", args}, {"name", tool_name(call)}};
}

// Canonical reconstruction of one assistant turn from its parsed parts.
inline std::string canonical_turn(const std::string& reasoning, const ToolCall& call) {
    std::string out = kThinkOpen;
    out += reasoning;
    out += kThinkClose;
    out += '\n';
    out += kToolCallOpen;
    out += tool_call_wire_json(call).dump();
    out += kToolCallClose;
    return out;
}

inline std::string render_tool_payload(const ToolPayload& payload) {
    std::string out;
    if (const auto* ir = std::get_if<ImageResult>(&payload)) {
        out = "image results:";
        for (size_t i = 0; i < ir->images.size(); ++i) {
            out += "\nimage " + std::to_string(i + 1) + ": " + ir->images[i].uri;
        }
        out += "\ntitles:";
        for (size_t i = 0; i < ir->titles.size(); ++i) {
            out += "\n" + std::to_string(i + 1) + ". " + ir->titles[i].title + " (" +
                   ir->titles[i].url + ")";
        }
    } else if (const auto* tr = std::get_if<TextResult>(&payload)) {
        out = "text results:";
        for (size_t i = 0; i < tr->chunks.size(); ++i) {
            const auto& c = tr->chunks[i];
            out += "\n[" + std::to_string(i + 1) + "] (source: " + c.source_id + "#" +
                   std::to_string(c.offset) + ") " + c.text;
        }
    } else {
        out = "final answer: " + std::get<AnswerResult>(payload).answer;
    }
    return out;
}

inline std::string render_information_block(const ToolResponse& response) {
    std::string out = kInformationOpen;
    out += '\n';
    out += render_tool_payload(response.payload);
    out += '\n';
    out += kInformationClose;
    return out;
}

// Tool catalog appended to the system prompt; fixes the call syntax the
// parser accepts.
inline std::string tool_catalog_text() {
    return "Available tools:\n"
           "- image_search: reverse-search an image for visually similar images and "
           "their webpage titles. Arguments: {\"image\": \"<image handle>\"}; omit the "
           "argument to search the question image.\n"
           "- text_search: search the text knowledge source. Arguments: {\"query\": "
           "\"<search terms>\"}.\n"
           "- answer_expert: pass the gathered evidence to the answer model for the "
           "final response. Arguments: {}.\n"
           "After your reasoning, emit exactly one tool call per turn as:\n"
           "<tool_call>{\"name\": \"<tool>\", \"arguments\": {...}}</tool_call>\n"
           "Tool output will be returned inside <information>...</information>.";
}

}  // namespace mmseek
