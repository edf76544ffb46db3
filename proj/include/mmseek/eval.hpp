// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Evaluation harness: judged accuracy with Wilson intervals and
// per-difficulty / per-hop breakdowns, tool-usage statistics, and offline
// retrieval scores. Retrieval metrics reuse the reward-engine scorers, so
// there is a single source of truth for how support is judged.

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmseek/concurrency.hpp"
#include "mmseek/core.hpp"
#include "mmseek/reward.hpp"
#include "mmseek/rollout.hpp"

namespace mmseek {

struct WilsonInterval {
    double low = 0.0;
    double high = 0.0;
};

// 95% score interval for a binomial proportion.
inline WilsonInterval wilson_interval(size_t correct, size_t total, double z = 1.96) {
    if (total == 0) return {0.0, 0.0};
    const double n = static_cast<double>(total);
    const double p = static_cast<double>(correct) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    return {center - half, center + half};
}

struct AccuracyStat {
    size_t correct = 0;
    size_t total = 0;

    double accuracy() const {
        return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    }
    WilsonInterval wilson() const { return wilson_interval(correct, total); }
};

inline void to_json(json& j, const AccuracyStat& s) {
    const auto w = s.wilson();
    j = json{{"correct", s.correct},
             {"total", s.total},
             {"accuracy", s.accuracy()},
             {"wilson_low", w.low},
             {"wilson_high", w.high}};
}

struct EvalItemResult {
    std::string query_id;
    Terminated terminated = Terminated::parse_failure;
    bool env_faulted = false;  // tool_failure: environment fault, not policy fault
    bool correct = false;
    size_t turns = 0;
    std::string final_answer;
};

inline void to_json(json& j, const EvalItemResult& r) {
    j = json{{"query_id", r.query_id},     {"terminated", to_string(r.terminated)},
             {"env_faulted", r.env_faulted}, {"correct", r.correct},
             {"turns", r.turns},           {"final_answer", r.final_answer}};
}

struct EvalReport {
    AccuracyStat overall;
    std::map<std::string, AccuracyStat> per_difficulty;
    std::map<int, AccuracyStat> per_hop;  // keyed by evidence hop count
    size_t items = 0;
    size_t env_faulted = 0;  // reported separately, excluded from accuracy
    std::vector<EvalItemResult> item_results;
};

inline void to_json(json& j, const EvalReport& r) {
    json per_difficulty = json::object();
    for (const auto& [k, v] : r.per_difficulty) per_difficulty[k] = v;
    json per_hop = json::object();
    for (const auto& [k, v] : r.per_hop) per_hop[std::to_string(k)] = v;
    j = json{{"overall", r.overall},
             {"per_difficulty", per_difficulty},
             {"per_hop", per_hop},
             {"items", r.items},
             {"env_faulted", r.env_faulted},
             {"item_results", r.item_results}};
}

using PolicyFactory = std::function<std::shared_ptr<PolicyClient>(const MultimodalQuery&)>;

// One rollout per item, judged final answers. Items that fail on the
// environment side are excluded from the denominator so accuracy measures
// the policy, not API uptime. Trajectories are returned in item order when a
// sink is provided.
inline EvalReport evaluate(const std::vector<MultimodalQuery>& items,
                           const PolicyFactory& make_policy, ToolEnv& tools,
                           const JudgeSet& judges, const RolloutConfig& rollout_cfg,
                           size_t workers = 8,
                           std::vector<Trajectory>* trajectory_sink = nullptr) {
    std::vector<Trajectory> trajectories(items.size());
    std::vector<EvalItemResult> results(items.size());
    parallel_for(items.size(), workers, [&](size_t i) {
        const auto& item = items[i];
        auto policy = make_policy(item);
        Trajectory t = run_rollout(item, *policy, tools, rollout_cfg);
        EvalItemResult r;
        r.query_id = item.id;
        r.terminated = t.terminated;
        r.turns = t.steps.size();
        if (t.terminated == Terminated::tool_failure) {
            r.env_faulted = true;
        } else if (t.terminated == Terminated::answered) {
            const AnswerResult* answer = t.final_answer();
            r.final_answer = answer != nullptr ? answer->answer : "";
            std::vector<JudgeTranscript> transcripts;
            r.correct = score_answer(item.question, item.all_gold_answers(), r.final_answer,
                                     judges, transcripts) == 1.0;
        }
        trajectories[i] = std::move(t);
        results[i] = std::move(r);
    });

    EvalReport report;
    report.items = items.size();
    report.item_results = std::move(results);
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& r = report.item_results[i];
        if (r.env_faulted) {
            ++report.env_faulted;
            continue;
        }
        const auto bump = [&r](AccuracyStat& s) {
            ++s.total;
            if (r.correct) ++s.correct;
        };
        bump(report.overall);
        bump(report.per_difficulty[to_string(items[i].difficulty)]);
        bump(report.per_hop[static_cast<int>(items[i].evidence_hops.size())]);
    }
    if (trajectory_sink != nullptr) *trajectory_sink = std::move(trajectories);
    return report;
}

// ---------------------------------------------------------------------------
// Tool usage statistics

struct ToolUsageStats {
    size_t trajectories = 0;
    size_t image_search_calls = 0;
    size_t text_search_calls = 0;
    size_t answer_expert_calls = 0;
    // Fraction of trajectories invoking the tool at least once.
    double image_ratio = 0.0;
    double text_ratio = 0.0;
    double expert_ratio = 0.0;
    double mean_turns = 0.0;
    std::map<size_t, size_t> turn_histogram;  // steps -> trajectory count
};

inline void to_json(json& j, const ToolUsageStats& s) {
    json hist = json::object();
    for (const auto& [k, v] : s.turn_histogram) hist[std::to_string(k)] = v;
    j = json{{"trajectories", s.trajectories},
             {"image_search_calls", s.image_search_calls},
             {"text_search_calls", s.text_search_calls},
             {"answer_expert_calls", s.answer_expert_calls},
             {"image_ratio", s.image_ratio},
             {"text_ratio", s.text_ratio},
             {"expert_ratio", s.expert_ratio},
             {"mean_turns", s.mean_turns},
             {"turn_histogram", hist}};
}

inline ToolUsageStats tool_usage_stats(const std::vector<Trajectory>& trajectories) {
    ToolUsageStats s;
    s.trajectories = trajectories.size();
    if (trajectories.empty()) return s;
    size_t used_image = 0, used_text = 0, used_expert = 0, total_turns = 0;
    for (const auto& t : trajectories) {
        bool has_image = false, has_text = false, has_expert = false;
        for (const auto& step : t.steps) {
            if (std::holds_alternative<ImageSearchCall>(step.tool_call)) {
                ++s.image_search_calls;
                has_image = true;
            } else if (std::holds_alternative<TextSearchCall>(step.tool_call)) {
                ++s.text_search_calls;
                has_text = true;
            } else {
                ++s.answer_expert_calls;
                has_expert = true;
            }
        }
        used_image += has_image ? 1 : 0;
        used_text += has_text ? 1 : 0;
        used_expert += has_expert ? 1 : 0;
        total_turns += t.steps.size();
        ++s.turn_histogram[t.steps.size()];
    }
    const double n = static_cast<double>(trajectories.size());
    s.image_ratio = static_cast<double>(used_image) / n;
    s.text_ratio = static_cast<double>(used_text) / n;
    s.expert_ratio = static_cast<double>(used_expert) / n;
    s.mean_turns = static_cast<double>(total_turns) / n;
    return s;
}

// ---------------------------------------------------------------------------
// Offline retrieval scores

struct RetrievalScores {
    double mean_text = 0.0;   // rescaled to [0, 1]
    double mean_image = 0.0;  // rescaled to [0, 1]
    size_t text_items = 0;    // items contributing to the text mean
    size_t image_items = 0;
    size_t skipped_no_evidence = 0;
};

inline void to_json(json& j, const RetrievalScores& s) {
    j = json{{"mean_text", s.mean_text},
             {"mean_image", s.mean_image},
             {"text_items", s.text_items},
             {"image_items", s.image_items},
             {"skipped_no_evidence", s.skipped_no_evidence}};
}

// Means of the reward-engine retrieval scorers across (trajectory, item)
// pairs matched by query id, rescaled to [0, 1] by dividing out the 0.5
// component cap. Items without evidence hops are excluded from the text
// mean and counted as skipped.
inline RetrievalScores retrieval_scores(const std::vector<Trajectory>& trajectories,
                                        const std::vector<MultimodalQuery>& items,
                                        const JudgeSet& judges) {
    std::map<std::string, const MultimodalQuery*> by_id;
    for (const auto& item : items) by_id[item.id] = &item;
    RetrievalScores s;
    double text_sum = 0.0, image_sum = 0.0;
    for (const auto& t : trajectories) {
        auto it = by_id.find(t.query_id);
        if (it == by_id.end()) continue;
        const MultimodalQuery& item = *it->second;
        std::vector<JudgeTranscript> transcripts;
        image_sum += score_img_retrieval(t, item, judges, transcripts) / 0.5;
        ++s.image_items;
        if (auto text = score_text_retrieval(t, item.evidence_hops, judges, transcripts)) {
            text_sum += *text / 0.5;
            ++s.text_items;
        } else {
            ++s.skipped_no_evidence;
        }
    }
    if (s.text_items > 0) s.mean_text = text_sum / static_cast<double>(s.text_items);
    if (s.image_items > 0) s.mean_image = image_sum / static_cast<double>(s.image_items);
    return s;
}

}  // namespace mmseek
