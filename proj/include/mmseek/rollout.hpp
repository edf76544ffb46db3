// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-turn rollout engine: drives the Think -> Tool_Call -> Information
// loop against a policy endpoint and the tool environment until the policy
// hands off to the answer expert, the turn budget runs out, or a turn fails
// to parse. Trajectories record the exact context rendered at every turn, so
// any stored rollout can be replayed byte-for-byte.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmseek/chat.hpp"
#include "mmseek/concurrency.hpp"
#include "mmseek/core.hpp"
#include "mmseek/render.hpp"
#include "mmseek/tool_env.hpp"

namespace mmseek {

inline constexpr const char* kDefaultRolloutSystemPrompt =
    "You are an expert in information seeking and reasoning. You will be given a "
    "question with a image. You need to collect information for the question step by "
    "step.\n"
    "Follow these instructions carefully:\n"
    "1. If you need external knowledge, call search tools.\n"
    "2. Enclose your entire reasoning process within <think> ... </think> tags.\n"
    "3. If you find no further external knowledge needed, stop the search process and "
    "call the answer model tool.";

struct RolloutConfig {
    int max_turns = 8;
    std::string system_prompt = kDefaultRolloutSystemPrompt;
    int group_size = 8;  // G
    double temperature = 0.0;
    int turn_token_budget = 1024;
    int workers = 8;  // concurrent rollouts within a group

    std::vector<std::string> validate() const {
        std::vector<std::string> errors;
        if (max_turns < 1) errors.push_back("max_turns: must be >= 1");
        if (group_size < 1) errors.push_back("group_size: must be >= 1");
        if (temperature < 0) errors.push_back("temperature: must be >= 0");
        if (turn_token_budget < 1) errors.push_back("turn_token_budget: must be >= 1");
        if (workers < 1) errors.push_back("workers: must be >= 1");
        return errors;
    }
};

// ---------------------------------------------------------------------------
// Turn parsing

struct ParsedTurn {
    std::string reasoning;
    ToolCall call;
};

// A parse failure is a normal domain outcome (it feeds the format penalty),
// not an exception. `failure` carries a machine-readable reason code.
struct ParseOutcome {
    std::optional<ParsedTurn> turn;
    std::string failure;

    bool ok() const { return turn.has_value(); }

    static ParseOutcome fail(std::string reason) { return {std::nullopt, std::move(reason)}; }
};

namespace detail {

inline size_t count_occurrences(const std::string& s, std::string_view needle) {
    size_t n = 0;
    size_t pos = 0;
    while ((pos = s.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

inline ParseOutcome parse_call_json(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error&) {
        return ParseOutcome::fail("malformed_tool_json");
    }
    if (!j.is_object() || !j.contains("name") || !j["name"].is_string()) {
        return ParseOutcome::fail("malformed_tool_json");
    }
    for (const auto& [k, v] : j.items()) {
        if (k != "name" && k != "arguments") return ParseOutcome::fail("malformed_tool_json");
    }
    json args = j.value("arguments", json::object());
    if (!args.is_object()) return ParseOutcome::fail("invalid_arguments");
    const std::string name = j["name"].get<std::string>();
    ParseOutcome out;
    if (name == "image_search") {
        for (const auto& [k, v] : args.items()) {
            if (k != "image" || !v.is_string()) return ParseOutcome::fail("invalid_arguments");
        }
        ImageSearchCall call;
        call.image.uri = args.value("image", kQueryImageHandle);
        out.turn = ParsedTurn{"", std::move(call)};
    } else if (name == "text_search") {
        for (const auto& [k, v] : args.items()) {
            if (k != "query" || !v.is_string()) return ParseOutcome::fail("invalid_arguments");
        }
        const std::string query = args.value("query", "");
        if (trim(query).empty()) return ParseOutcome::fail("invalid_arguments");
        out.turn = ParsedTurn{"", TextSearchCall{query}};
    } else if (name == "answer_expert") {
        if (!args.empty()) return ParseOutcome::fail("invalid_arguments");
        out.turn = ParsedTurn{"", AnswerExpertCall{}};
    } else {
        return ParseOutcome::fail("unknown_tool");
    }
    return out;
}

}  // namespace detail

// Parses one complete assistant turn: a single think block followed by a
// single structured tool call, nothing else. Any deviation is a failure that
// the format reward will penalize.
inline ParseOutcome parse_turn(const std::string& raw) {
    using detail::count_occurrences;
    const size_t think_opens = count_occurrences(raw, kThinkOpen);
    const size_t think_closes = count_occurrences(raw, kThinkClose);
    if (think_opens == 0) return ParseOutcome::fail("missing_think");
    if (think_opens > 1 || think_closes > 1) return ParseOutcome::fail("multiple_think");
    if (think_closes == 0) return ParseOutcome::fail("unclosed_think");

    const size_t call_opens = count_occurrences(raw, kToolCallOpen);
    const size_t call_closes = count_occurrences(raw, kToolCallClose);
    if (call_opens > 1 || call_closes > 1) return ParseOutcome::fail("multiple_calls");
    if (call_opens == 0) return ParseOutcome::fail("missing_tool_call");
    if (call_closes == 0) return ParseOutcome::fail("unclosed_tool_call");

    const size_t t_open = raw.find(kThinkOpen);
    const size_t t_close = raw.find(kThinkClose);
    const size_t c_open = raw.find(kToolCallOpen);
    const size_t c_close = raw.find(kToolCallClose);
    if (t_close < t_open) return ParseOutcome::fail("unclosed_think");
    if (c_close < c_open) return ParseOutcome::fail("unclosed_tool_call");
    if (c_open < t_close) return ParseOutcome::fail("call_before_think");

    // Only whitespace may surround the two blocks.
    const std::string before = raw.substr(0, t_open);
    const std::string between =
        raw.substr(t_close + std::string(kThinkClose).size(),
                   c_open - (t_close + std::string(kThinkClose).size()));
    const std::string after = raw.substr(c_close + std::string(kToolCallClose).size());
    if (!trim(before).empty() || !trim(between).empty() || !trim(after).empty()) {
        return ParseOutcome::fail("stray_text");
    }

    const std::string reasoning =
        trim(raw.substr(t_open + std::string(kThinkOpen).size(),
                        t_close - (t_open + std::string(kThinkOpen).size())));
    if (reasoning.empty()) return ParseOutcome::fail("empty_think");

    const std::string body = raw.substr(c_open + std::string(kToolCallOpen).size(),
                                        c_close - (c_open + std::string(kToolCallOpen).size()));
    ParseOutcome out = detail::parse_call_json(trim(body));
    if (!out.ok()) return out;
    out.turn->reasoning = reasoning;
    return out;
}

// ---------------------------------------------------------------------------
// Context rendering

// Builds the message list shown to the policy: system prompt + tool catalog,
// the question with its image on the first user turn, then each prior
// assistant turn followed by its tool response in a fenced information
// block. Assistant turns are taken verbatim from `raw_turns` when available
// and reconstructed canonically from the step otherwise. Deterministic given
// inputs.
inline std::vector<Message> render_context(
    const MultimodalQuery& query, std::span<const TrajectoryStep> history,
    std::span<const std::string> raw_turns, const RolloutConfig& cfg,
    ImagePresentation presentation = ImagePresentation::pixels_and_titles) {
    std::vector<Message> msgs;
    msgs.push_back(Message::system(cfg.system_prompt + "\n\n" + tool_catalog_text()));
    msgs.push_back(Message::user(query.question, {query.image}));
    for (size_t i = 0; i < history.size(); ++i) {
        const auto& step = history[i];
        if (i < raw_turns.size()) {
            msgs.push_back(Message::assistant(raw_turns[i]));
        } else {
            msgs.push_back(Message::assistant(canonical_turn(step.reasoning, step.tool_call)));
        }
        Message info = Message::user(render_information_block(step.tool_response));
        if (presentation == ImagePresentation::pixels_and_titles) {
            if (const auto* ir = std::get_if<ImageResult>(&step.tool_response.payload)) {
                if (!ir->images.empty()) info.images.push_back(ir->images.front());
            }
        }
        msgs.push_back(std::move(info));
    }
    return msgs;
}

// The exact context string the policy sees at the turn following `history`.
inline std::string rendered_observation(
    const MultimodalQuery& query, std::span<const TrajectoryStep> history,
    std::span<const std::string> raw_turns, const RolloutConfig& cfg,
    ImagePresentation presentation = ImagePresentation::pixels_and_titles) {
    return render_messages(render_context(query, history, raw_turns, cfg, presentation));
}

namespace detail {

// Maps a parsed image handle to a concrete reference: the question image for
// the default handle, a previously retrieved image when the uri matches one,
// and a hash-resolved fresh handle otherwise.
inline ImageRef resolve_image_handle(const ImageRef& handle, const MultimodalQuery& query,
                                     std::span<const TrajectoryStep> history, ToolEnv& tools) {
    if (handle.uri.empty() || handle.uri == kQueryImageHandle) {
        return tools.resolve_image(query.image);
    }
    for (auto it = history.rbegin(); it != history.rend(); ++it) {
        if (const auto* ir = std::get_if<ImageResult>(&it->tool_response.payload)) {
            for (const auto& img : ir->images) {
                if (img.uri == handle.uri) return img;
            }
        }
    }
    return tools.resolve_image(handle);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Rollout loop

// Runs one rollout. Terminates answered when the policy invokes the answer
// expert, turn_limit at the cap (no answer is synthesized; the format reward
// penalizes the miss), parse_failure on a malformed turn (trajectory kept up
// to the failure, failed raw turn preserved for format scoring), and
// tool_failure when a tool still fails after the environment's retries
// (environment fault; excluded from reward groups upstream).
//
// Policy endpoint errors are operational and propagate as exceptions.
inline Trajectory run_rollout(const MultimodalQuery& query, PolicyClient& policy,
                              ToolEnv& tools, const RolloutConfig& cfg) {
    Trajectory t;
    t.query_id = query.id;
    const SamplingParams sampling{cfg.temperature, cfg.turn_token_budget};
    const ImagePresentation presentation = tools.config().image_presentation;
    for (int turn = 0; turn < cfg.max_turns; ++turn) {
        const std::vector<Message> msgs =
            render_context(query, t.steps, t.raw_turns, cfg, presentation);
        const std::string observation = render_messages(msgs);
        const PolicyTurn policy_turn = policy.next_turn(msgs, sampling);
        t.raw_turns.push_back(policy_turn.text);

        const ParseOutcome parsed = parse_turn(policy_turn.text);
        if (!parsed.ok()) {
            t.terminated = Terminated::parse_failure;
            return t;
        }

        TrajectoryStep step;
        step.observation = observation;
        step.reasoning = parsed.turn->reasoning;
        ToolCall call = parsed.turn->call;
        try {
            if (auto* is = std::get_if<ImageSearchCall>(&call)) {
                is->image = detail::resolve_image_handle(is->image, query, t.steps, tools);
                step.tool_response = tools.image_search(is->image);
            } else if (const auto* ts = std::get_if<TextSearchCall>(&call)) {
                step.tool_response = tools.text_search(ts->query);
            } else {
                step.tool_response = tools.answer_expert(query, t.steps, step.reasoning);
            }
        } catch (const BackendUnavailable&) {
            t.terminated = Terminated::tool_failure;
            return t;
        } catch (const InvalidImage&) {
            t.terminated = Terminated::tool_failure;
            return t;
        } catch (const EmptyCorpus&) {
            t.terminated = Terminated::tool_failure;
            return t;
        }
        const bool is_expert = std::holds_alternative<AnswerExpertCall>(call);
        step.tool_call = std::move(call);
        t.steps.push_back(std::move(step));
        if (is_expert) {
            t.terminated = Terminated::answered;
            return t;
        }
    }
    t.terminated = Terminated::turn_limit;
    return t;
}

// Samples a group of G independent rollouts of the same query. Order is
// stable (index-assigned); with deterministic tools and policies the result
// is independent of worker scheduling.
inline std::vector<Trajectory> run_group(const MultimodalQuery& query, PolicyClient& policy,
                                         ToolEnv& tools, const RolloutConfig& cfg) {
    std::vector<Trajectory> out(cfg.group_size);
    parallel_for(static_cast<size_t>(cfg.group_size), static_cast<size_t>(cfg.workers),
                 [&](size_t i) { out[i] = run_rollout(query, policy, tools, cfg); });
    return out;
}

// ---------------------------------------------------------------------------
// Scripted policy: a fixed list of turns, selected by how many assistant
// turns are already in the context. Stateless across calls, so it is
// deterministic under any scheduling.
class ScriptedPolicy : public PolicyClient {
public:
    explicit ScriptedPolicy(std::vector<std::string> turns) : turns_(std::move(turns)) {}

    PolicyTurn next_turn(const std::vector<Message>& messages,
                         const SamplingParams& /*params*/) override {
        size_t turn_index = 0;
        for (const auto& m : messages) {
            if (m.role == Role::assistant) ++turn_index;
        }
        if (turns_.empty()) return {"", {}};
        if (turn_index >= turns_.size()) turn_index = turns_.size() - 1;
        return {turns_[turn_index], {}};
    }

private:
    std::vector<std::string> turns_;
};

// Convenience builders for scripted turns.
inline std::string scripted_turn(const std::string& reasoning, const ToolCall& call) {
    return canonical_turn(reasoning, call);
}

}  // namespace mmseek
