// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Domain types shared by every module: queries, tool calls and responses,
// trajectory steps, and the structural validator the reward scorer reuses.
// All types are immutable-by-convention after construction and safe to share
// across rollout workers.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mmseek/util.hpp"

namespace mmseek {

// Opaque handle to an image. Trajectories stay serializable because pixel
// data never lives here; the content hash is the cache key.
struct ImageRef {
    std::string uri;           // file path, URL, or backend fixture handle
    std::string content_hash;  // hex digest; empty until resolved
    std::string media_type;    // e.g. "image/jpeg"; may be empty

    bool operator==(const ImageRef&) const = default;
};

// Handle a policy turn may use to refer to the question image.
inline constexpr const char* kQueryImageHandle = "@query";

enum class Difficulty { easy, medium, hard, unlabeled };

inline std::string to_string(Difficulty d) {
    switch (d) {
        case Difficulty::easy: return "easy";
        case Difficulty::medium: return "medium";
        case Difficulty::hard: return "hard";
        case Difficulty::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

inline Difficulty difficulty_from_string(const std::string& s) {
    if (s == "easy") return Difficulty::easy;
    if (s == "medium") return Difficulty::medium;
    if (s == "hard") return Difficulty::hard;
    if (s == "unlabeled" || s.empty()) return Difficulty::unlabeled;
    throw Error("unknown difficulty: " + s);
}

// One verified reasoning hop of a multi-hop question.
struct EvidenceHop {
    int hop_index = 0;          // contiguous from 0 within a query
    std::string claim;          // fact this hop establishes
    std::string support_passage;
    std::string source_id;      // corpus document id

    bool operator==(const EvidenceHop&) const = default;
};

// The unit of rollout and reward: an image, a question, and the gold answer.
struct MultimodalQuery {
    std::string id;
    ImageRef image;
    std::string question;
    std::string gold_answer;
    std::vector<std::string> answer_aliases;  // additional accepted answers
    std::vector<EvidenceHop> evidence_hops;   // empty for evaluation-only data
    Difficulty difficulty = Difficulty::unlabeled;
    // Label of the entity the image depicts, used as the reference for the
    // visual-recognition grader. Empty when unknown (the gold answer is the
    // fallback reference).
    std::string visual_entity;

    bool operator==(const MultimodalQuery&) const = default;

    std::vector<std::string> all_gold_answers() const {
        std::vector<std::string> out;
        out.push_back(gold_answer);
        out.insert(out.end(), answer_aliases.begin(), answer_aliases.end());
        return out;
    }
};

// ---------------------------------------------------------------------------
// Tool calls

struct ImageSearchCall {
    ImageRef image;
    bool operator==(const ImageSearchCall&) const = default;
};

struct TextSearchCall {
    std::string query;  // non-empty
    bool operator==(const TextSearchCall&) const = default;
};

// No parameters: the expert consumes the trajectory.
struct AnswerExpertCall {
    bool operator==(const AnswerExpertCall&) const = default;
};

using ToolCall = std::variant<ImageSearchCall, TextSearchCall, AnswerExpertCall>;

inline const char* tool_name(const ToolCall& call) {
    if (std::holds_alternative<ImageSearchCall>(call)) return "image_search";
    if (std::holds_alternative<TextSearchCall>(call)) return "text_search";
    return "answer_expert";
}

// ---------------------------------------------------------------------------
// Tool responses

struct TitleEntry {
    std::string title;
    std::string url;
    bool operator==(const TitleEntry&) const = default;
};

// Reverse image search result: similar images plus webpage titles. The
// default configuration keeps the top-1 image and top-30 titles.
struct ImageResult {
    std::vector<ImageRef> images;
    std::vector<TitleEntry> titles;

    bool operator==(const ImageResult&) const = default;

    const ImageRef& top_image() const {
        if (images.empty()) throw Error("ImageResult: no images");
        return images.front();
    }
};

struct TextChunk {
    std::string text;
    std::string source_id;
    std::int64_t offset = 0;  // chunk start within the source document
    double score = 0.0;

    bool operator==(const TextChunk&) const = default;
};

struct TextResult {
    std::vector<TextChunk> chunks;  // descending score
    bool operator==(const TextResult&) const = default;
};

struct AnswerResult {
    std::string answer;
    bool operator==(const AnswerResult&) const = default;
};

using ToolPayload = std::variant<ImageResult, TextResult, AnswerResult>;

struct ToolResponse {
    ToolPayload payload;
    std::int64_t latency_ms = 0;  // envelope; volatile across runs
    bool cache_hit = false;       // envelope; volatile across runs

    bool operator==(const ToolResponse&) const = default;
};

// ---------------------------------------------------------------------------
// Trajectories

// One Think -> Tool_Call -> Information step.
struct TrajectoryStep {
    std::string observation;  // exact rendered context shown to the policy
    std::string reasoning;    // think-block content; precedes the call in the raw turn
    ToolCall tool_call;
    ToolResponse tool_response;

    bool operator==(const TrajectoryStep&) const = default;
};

enum class Terminated { answered, turn_limit, parse_failure, tool_failure };

inline std::string to_string(Terminated t) {
    switch (t) {
        case Terminated::answered: return "answered";
        case Terminated::turn_limit: return "turn_limit";
        case Terminated::parse_failure: return "parse_failure";
        case Terminated::tool_failure: return "tool_failure";
    }
    return "parse_failure";
}

inline Terminated terminated_from_string(const std::string& s) {
    if (s == "answered") return Terminated::answered;
    if (s == "turn_limit") return Terminated::turn_limit;
    if (s == "parse_failure") return Terminated::parse_failure;
    if (s == "tool_failure") return Terminated::tool_failure;
    throw Error("unknown terminated state: " + s);
}

struct Trajectory {
    std::string query_id;
    std::vector<TrajectoryStep> steps;
    Terminated terminated = Terminated::parse_failure;
    // Verbatim policy outputs, one per turn attempted. Equals steps.size()
    // for answered/turn_limit; may carry one extra (the failed turn) for
    // parse_failure/tool_failure.
    std::vector<std::string> raw_turns;

    bool operator==(const Trajectory&) const = default;

    const AnswerResult* final_answer() const {
        if (steps.empty()) return nullptr;
        return std::get_if<AnswerResult>(&steps.back().tool_response.payload);
    }
};

// ---------------------------------------------------------------------------
// Structural validation

enum class Violation {
    EMPTY_TRAJECTORY,
    NO_TERMINAL_EXPERT,
    TERMINAL_RESPONSE_MISMATCH,
    NONFINAL_EXPERT,
    RESPONSE_TYPE_MISMATCH,
    EMPTY_REASONING,
    MALFORMED_TOOL_ARGS,
    RAW_TURN_COUNT_MISMATCH,
    TERMINATION_MISMATCH,
};

inline std::string to_string(Violation v) {
    switch (v) {
        case Violation::EMPTY_TRAJECTORY: return "EMPTY_TRAJECTORY";
        case Violation::NO_TERMINAL_EXPERT: return "NO_TERMINAL_EXPERT";
        case Violation::TERMINAL_RESPONSE_MISMATCH: return "TERMINAL_RESPONSE_MISMATCH";
        case Violation::NONFINAL_EXPERT: return "NONFINAL_EXPERT";
        case Violation::RESPONSE_TYPE_MISMATCH: return "RESPONSE_TYPE_MISMATCH";
        case Violation::EMPTY_REASONING: return "EMPTY_REASONING";
        case Violation::MALFORMED_TOOL_ARGS: return "MALFORMED_TOOL_ARGS";
        case Violation::RAW_TURN_COUNT_MISMATCH: return "RAW_TURN_COUNT_MISMATCH";
        case Violation::TERMINATION_MISMATCH: return "TERMINATION_MISMATCH";
    }
    return "UNKNOWN";
}

namespace detail {
inline bool response_matches_call(const ToolCall& call, const ToolResponse& resp) {
    if (std::holds_alternative<ImageSearchCall>(call))
        return std::holds_alternative<ImageResult>(resp.payload);
    if (std::holds_alternative<TextSearchCall>(call))
        return std::holds_alternative<TextResult>(resp.payload);
    return std::holds_alternative<AnswerResult>(resp.payload);
}
}  // namespace detail

// Total function: returns every violated structural invariant as a
// machine-readable code. Empty result means well-formed.
inline std::vector<Violation> validate_trajectory(const Trajectory& t) {
    std::vector<Violation> out;
    if (t.steps.empty()) {
        out.push_back(Violation::EMPTY_TRAJECTORY);
    } else {
        const auto& last = t.steps.back();
        const bool last_is_expert = std::holds_alternative<AnswerExpertCall>(last.tool_call);
        if (!last_is_expert) {
            out.push_back(Violation::NO_TERMINAL_EXPERT);
        } else if (!std::holds_alternative<AnswerResult>(last.tool_response.payload)) {
            out.push_back(Violation::TERMINAL_RESPONSE_MISMATCH);
        }
        if (last_is_expert != (t.terminated == Terminated::answered)) {
            out.push_back(Violation::TERMINATION_MISMATCH);
        }
        for (size_t i = 0; i + 1 < t.steps.size(); ++i) {
            if (std::holds_alternative<AnswerExpertCall>(t.steps[i].tool_call)) {
                out.push_back(Violation::NONFINAL_EXPERT);
                break;
            }
        }
        bool mismatch = false, empty_reasoning = false, malformed = false;
        for (const auto& step : t.steps) {
            if (!detail::response_matches_call(step.tool_call, step.tool_response))
                mismatch = true;
            if (trim(step.reasoning).empty()) empty_reasoning = true;
            if (const auto* ts = std::get_if<TextSearchCall>(&step.tool_call)) {
                if (trim(ts->query).empty()) malformed = true;
            }
            if (const auto* is = std::get_if<ImageSearchCall>(&step.tool_call)) {
                if (is->image.uri.empty() && is->image.content_hash.empty()) malformed = true;
            }
        }
        if (mismatch) out.push_back(Violation::RESPONSE_TYPE_MISMATCH);
        if (empty_reasoning) out.push_back(Violation::EMPTY_REASONING);
        if (malformed) out.push_back(Violation::MALFORMED_TOOL_ARGS);
    }
    const size_t n = t.steps.size();
    const size_t r = t.raw_turns.size();
    const bool clean_end =
        t.terminated == Terminated::answered || t.terminated == Terminated::turn_limit;
    if (clean_end ? (r != n) : (r != n && r != n + 1)) {
        out.push_back(Violation::RAW_TURN_COUNT_MISMATCH);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Canonical JSON serialization. One object per trajectory; steps in order.

inline void to_json(json& j, const ImageRef& r) {
    j = json{{"uri", r.uri}, {"content_hash", r.content_hash}, {"media_type", r.media_type}};
}
inline void from_json(const json& j, ImageRef& r) {
    r.uri = j.value("uri", "");
    r.content_hash = j.value("content_hash", "");
    r.media_type = j.value("media_type", "");
}

inline void to_json(json& j, const TitleEntry& t) {
    j = json{{"title", t.title}, {"url", t.url}};
}
inline void from_json(const json& j, TitleEntry& t) {
    t.title = j.value("title", "");
    t.url = j.value("url", "");
}

inline void to_json(json& j, const TextChunk& c) {
    j = json{{"text", c.text}, {"source_id", c.source_id}, {"offset", c.offset}, {"score", c.score}};
}
inline void from_json(const json& j, TextChunk& c) {
    c.text = j.value("text", "");
    c.source_id = j.value("source_id", "");
    c.offset = j.value("offset", std::int64_t{0});
    c.score = j.value("score", 0.0);
}

inline void to_json(json& j, const EvidenceHop& h) {
    j = json{{"hop_index", h.hop_index},
             {"claim", h.claim},
             {"support_passage", h.support_passage},
             {"source_id", h.source_id}};
}
inline void from_json(const json& j, EvidenceHop& h) {
    h.hop_index = j.value("hop_index", 0);
    h.claim = j.value("claim", "");
    h.support_passage = j.value("support_passage", "");
    h.source_id = j.value("source_id", "");
}

inline void to_json(json& j, const MultimodalQuery& q) {
    j = json{{"id", q.id},
             {"image", q.image},
             {"question", q.question},
             {"gold_answer", q.gold_answer},
             {"answer_aliases", q.answer_aliases},
             {"evidence_hops", q.evidence_hops},
             {"difficulty", to_string(q.difficulty)},
             {"visual_entity", q.visual_entity}};
}
inline void from_json(const json& j, MultimodalQuery& q) {
    q.id = j.value("id", "");
    if (j.contains("image")) q.image = j.at("image").get<ImageRef>();
    q.question = j.value("question", "");
    q.gold_answer = j.value("gold_answer", "");
    q.answer_aliases = j.value("answer_aliases", std::vector<std::string>{});
    q.evidence_hops = j.value("evidence_hops", std::vector<EvidenceHop>{});
    q.difficulty = difficulty_from_string(j.value("difficulty", "unlabeled"));
    q.visual_entity = j.value("visual_entity", "");
}

inline void to_json(json& j, const ToolCall& call) {
    if (const auto* is = std::get_if<ImageSearchCall>(&call)) {
        j = json{{"type", "image_search"}, {"image", is->image}};
    } else if (const auto* ts = std::get_if<TextSearchCall>(&call)) {
        j = json{{"type", "text_search"}, {"query", ts->query}};
    } else {
        j = json{{"type", "answer_expert"}};
    }
}
inline void from_json(const json& j, ToolCall& call) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "image_search") {
        ImageSearchCall c;
        if (j.contains("image")) c.image = j.at("image").get<ImageRef>();
        call = c;
    } else if (type == "text_search") {
        call = TextSearchCall{j.value("query", "")};
    } else if (type == "answer_expert") {
        call = AnswerExpertCall{};
    } else {
        throw Error("unknown tool call type: " + type);
    }
}

inline void to_json(json& j, const ToolResponse& r) {
    if (const auto* ir = std::get_if<ImageResult>(&r.payload)) {
        j = json{{"type", "image_result"}, {"images", ir->images}, {"titles", ir->titles}};
    } else if (const auto* tr = std::get_if<TextResult>(&r.payload)) {
        j = json{{"type", "text_result"}, {"chunks", tr->chunks}};
    } else {
        j = json{{"type", "answer_result"},
                 {"answer", std::get<AnswerResult>(r.payload).answer}};
    }
    j["latency_ms"] = r.latency_ms;
    j["cache_hit"] = r.cache_hit;
}
inline void from_json(const json& j, ToolResponse& r) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "image_result") {
        ImageResult ir;
        ir.images = j.value("images", std::vector<ImageRef>{});
        ir.titles = j.value("titles", std::vector<TitleEntry>{});
        r.payload = std::move(ir);
    } else if (type == "text_result") {
        TextResult tr;
        tr.chunks = j.value("chunks", std::vector<TextChunk>{});
        r.payload = std::move(tr);
    } else if (type == "answer_result") {
        r.payload = AnswerResult{j.value("answer", "")};
    } else {
        throw Error("unknown tool response type: " + type);
    }
    r.latency_ms = j.value("latency_ms", std::int64_t{0});
    r.cache_hit = j.value("cache_hit", false);
}

// Payload-only canonical form; the envelope (latency, cache flag) is omitted.
// This is what the disk cache stores and what byte-identity checks compare.
inline json canonical_payload_json(const ToolResponse& r) {
    json j = r;
    j.erase("latency_ms");
    j.erase("cache_hit");
    return j;
}

inline void to_json(json& j, const TrajectoryStep& s) {
    j = json{{"observation", s.observation},
             {"reasoning", s.reasoning},
             {"tool_call", s.tool_call},
             {"tool_response", s.tool_response}};
}
inline void from_json(const json& j, TrajectoryStep& s) {
    s.observation = j.value("observation", "");
    s.reasoning = j.value("reasoning", "");
    s.tool_call = j.at("tool_call").get<ToolCall>();
    s.tool_response = j.at("tool_response").get<ToolResponse>();
}

inline void to_json(json& j, const Trajectory& t) {
    j = json{{"query_id", t.query_id},
             {"steps", t.steps},
             {"terminated", to_string(t.terminated)},
             {"raw_turns", t.raw_turns}};
}
inline void from_json(const json& j, Trajectory& t) {
    t.query_id = j.value("query_id", "");
    t.steps = j.value("steps", std::vector<TrajectoryStep>{});
    t.terminated = terminated_from_string(j.value("terminated", "parse_failure"));
    t.raw_turns = j.value("raw_turns", std::vector<std::string>{});
}

// Schedule-stable serialization: identical for two runs that differ only in
// timing or cache order. Used by determinism checks; the full form above is
// the interchange format.
inline json stable_trajectory_json(const Trajectory& t) {
    json j = t;
    for (auto& step : j["steps"]) {
        step["tool_response"]["latency_ms"] = 0;
        step["tool_response"]["cache_hit"] = false;
    }
    return j;
}

}  // namespace mmseek
