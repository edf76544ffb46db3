// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-objective reward scoring for rollout trajectories:
//   total = format + answer + image_retrieval + text_retrieval
// with a short-circuit: a format-invalid trajectory scores -1 outright and
// no judge is consulted. Components:
//   format          {-1, 0}   structural compliance and terminal expert call
//   answer          {0, 1}    judged correctness of the final answer
//   image_retrieval {0, .25, .5}  graded visual-recognition behavior
//   text_retrieval  [0, .5]   proportion of evidence hops supported
// Judges are chat endpoints; deterministic rule-based stubs serve tests.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmseek/chat.hpp"
#include "mmseek/core.hpp"
#include "mmseek/log.hpp"
#include "mmseek/rollout.hpp"

namespace mmseek {

struct JudgeTranscript {
    std::string kind;  // answer / image / support
    std::string prompt;
    std::string response;
    std::string parsed;
};

inline void to_json(json& j, const JudgeTranscript& t) {
    j = json{{"kind", t.kind}, {"prompt", t.prompt}, {"response", t.response}, {"parsed", t.parsed}};
}

struct RewardBreakdown {
    double format = 0.0;
    std::optional<double> answer;          // unset when not evaluated
    std::optional<double> img_retrieval;   // unset when not evaluated
    std::optional<double> text_retrieval;  // unset when not evaluated
    bool no_evidence = false;  // text score undefined (no hops); 0 recorded, excluded from metrics
    double total = 0.0;
    std::vector<JudgeTranscript> judge_transcripts;
};

inline void to_json(json& j, const RewardBreakdown& b) {
    j = json{{"format", b.format},
             {"answer", b.answer ? json(*b.answer) : json(nullptr)},
             {"img_retrieval", b.img_retrieval ? json(*b.img_retrieval) : json(nullptr)},
             {"text_retrieval", b.text_retrieval ? json(*b.text_retrieval) : json(nullptr)},
             {"no_evidence", b.no_evidence},
             {"total", b.total},
             {"judge_transcripts", b.judge_transcripts}};
}

// ---------------------------------------------------------------------------
// Judge prompts. The rubric text is versioned so scored runs stay
// reproducible when prompts evolve.

inline constexpr const char* kJudgeRubricVersion = "v1";

inline std::string answer_judge_prompt(const std::string& question,
                                       const std::vector<std::string>& golden,
                                       const std::string& answer) {
    std::string cands;
    for (size_t i = 0; i < golden.size(); ++i) {
        if (i) cands += " | ";
        cands += collapse_ws(golden[i]);
    }
    return "You are an expert evaluator. You will be given:\n"
           "- A question\n"
           "- Several correct (golden) answer candidates\n"
           "- My provided answer\n\n"
           "Your task:\n"
           "Strictly judge whether my answer is correct compared to the golden answers.\n\n"
           "Judgement rules:\n"
           "1. The meaning of my answer **must match** one of the golden answer candidates.\n"
           "2. Reject or fail to answer is wrong answer.\n\n"
           "Output format:\n"
           "<reason> The reason of judgement. <Judgement> Yes or No.\n\n"
           "Question: " + collapse_ws(question) + "\n"
           "Golden Answer: " + cands + "\n"
           "My Answer: " + answer;
}

inline std::string image_judge_prompt(const std::string& reference_entity,
                                      const std::string& reasoning) {
    return "You are grading the visual-recognition behavior shown in an assistant's "
           "reasoning about an image.\n"
           "Reference entity: " + collapse_ws(reference_entity) + "\n"
           "Reasoning:\n" + reasoning + "\n"
           "Classify the behavior:\n"
           "- CORRECT: the reasoning correctly names the reference entity.\n"
           "- CAUTIOUS: the reasoning does not commit to a specific entity and offers a "
           "hedged, descriptive interpretation instead.\n"
           "- INCORRECT: the reasoning names a different entity.\n\n"
           "Output format:\n"
           "<reason> The reason of judgement. <Judgement> CORRECT or CAUTIOUS or INCORRECT.";
}

inline std::string support_judge_prompt(const std::string& claim, const std::string& evidence,
                                        const std::string& snapshot_date = "") {
    std::string head = "You are checking whether a claim is supported by gathered evidence.\n";
    if (!snapshot_date.empty()) {
        head += "Evidence snapshot date: " + snapshot_date +
                " (the claim must hold as of this date).\n";
    }
    return head +
           "Claim: " + collapse_ws(claim) + "\n"
           "Evidence:\n" + evidence + "\n\n"
           "Output format:\n"
           "<reason> The reason of judgement. <Judgement> Yes or No.";
}

// Token after "<Judgement>", lowercased; nullopt when the marker or token is
// missing.
inline std::optional<std::string> parse_judgement_token(const std::string& text) {
    const std::string lower = casefold(text);
    const size_t pos = lower.rfind("<judgement>");
    if (pos == std::string::npos) return std::nullopt;
    size_t i = pos + std::string("<judgement>").size();
    while (i < lower.size() && !std::isalpha(static_cast<unsigned char>(lower[i]))) ++i;
    size_t end = i;
    while (end < lower.size() && std::isalpha(static_cast<unsigned char>(lower[end]))) ++end;
    if (end == i) return std::nullopt;
    return lower.substr(i, end - i);
}

// ---------------------------------------------------------------------------
// Judge binding with bounded retry on unparseable output.

struct JudgeConfig {
    int unparseable_retries = 1;  // extra attempts after the first
    std::string rubric_version = kJudgeRubricVersion;
    std::string corpus_snapshot_date;  // forwarded to support judgements when set
};

struct JudgeSet {
    ChatClient* answer = nullptr;
    ChatClient* image = nullptr;
    ChatClient* support = nullptr;
    JudgeConfig cfg;
};

inline JudgeSet make_judge_set(ChatClient& client, JudgeConfig cfg = {}) {
    return JudgeSet{&client, &client, &client, std::move(cfg)};
}

namespace detail {

// Asks the judge until a verdict in `accepted` appears; falls back to
// `fallback` after the retry budget. Appends one transcript per attempt.
inline std::string judged_verdict(ChatClient& client, const std::string& kind,
                                  const std::string& prompt,
                                  const std::set<std::string>& accepted,
                                  const std::string& fallback, int retries,
                                  std::vector<JudgeTranscript>& transcripts) {
    for (int attempt = 0; attempt <= retries; ++attempt) {
        const std::string response =
            client.complete({Message::user(prompt)}, SamplingParams{0.0, 256});
        const auto token = parse_judgement_token(response);
        const bool ok = token && accepted.count(*token) > 0;
        transcripts.push_back({kind, prompt, response, ok ? *token : ""});
        if (ok) return *token;
    }
    log_event("judge.unparseable", {{"kind", kind}, {"fallback", fallback}});
    return fallback;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Component scorers

// 0 iff the trajectory is structurally sound, every raw turn parses cleanly,
// and the terminal call is the answer expert; -1 otherwise.
inline double score_format(const Trajectory& t) {
    if (!validate_trajectory(t).empty()) return -1.0;
    for (const auto& raw : t.raw_turns) {
        if (!parse_turn(raw).ok()) return -1.0;
    }
    if (t.steps.empty() || !std::holds_alternative<AnswerExpertCall>(t.steps.back().tool_call)) {
        return -1.0;
    }
    return 0.0;
}

// Judged semantic correctness of the final answer: Yes -> 1, No -> 0.
inline double score_answer(const std::string& question, const std::vector<std::string>& golden,
                           const std::string& final_answer, const JudgeSet& judges,
                           std::vector<JudgeTranscript>& transcripts) {
    const std::string verdict = detail::judged_verdict(
        *judges.answer, "answer", answer_judge_prompt(question, golden, final_answer),
        {"yes", "no"}, "no", judges.cfg.unparseable_retries, transcripts);
    return verdict == "yes" ? 1.0 : 0.0;
}

// Grades the visual-recognition behavior over the concatenated think blocks:
// correct naming 0.5, cautious description 0.25, incorrect naming 0.
inline double score_img_retrieval(const Trajectory& t, const MultimodalQuery& query,
                                  const JudgeSet& judges,
                                  std::vector<JudgeTranscript>& transcripts) {
    std::string reasoning;
    for (const auto& step : t.steps) {
        if (!reasoning.empty()) reasoning += '\n';
        reasoning += step.reasoning;
    }
    const std::string& entity =
        query.visual_entity.empty() ? query.gold_answer : query.visual_entity;
    const std::string verdict = detail::judged_verdict(
        *judges.image, "image", image_judge_prompt(entity, reasoning),
        {"correct", "cautious", "incorrect"}, "incorrect", judges.cfg.unparseable_retries,
        transcripts);
    if (verdict == "correct") return 0.5;
    if (verdict == "cautious") return 0.25;
    return 0.0;
}

// Everything the policy gathered or wrote: think blocks plus the textual
// content of every tool response (chunks and titles; expert answers are the
// generator's output, not retrieved evidence).
inline std::string gathered_evidence_text(const Trajectory& t) {
    std::string out;
    auto add = [&out](const std::string& s) {
        if (!s.empty()) {
            out += s;
            out += '\n';
        }
    };
    for (const auto& step : t.steps) {
        add(step.reasoning);
        if (const auto* tr = std::get_if<TextResult>(&step.tool_response.payload)) {
            for (const auto& c : tr->chunks) add(c.text);
        } else if (const auto* ir = std::get_if<ImageResult>(&step.tool_response.payload)) {
            for (const auto& title : ir->titles) add(title.title);
        }
    }
    return out;
}

// Proportion of evidence hops supported by the gathered evidence, scaled to
// [0, 0.5]. nullopt when the query carries no hops (score undefined).
inline std::optional<double> score_text_retrieval(const Trajectory& t,
                                                  const std::vector<EvidenceHop>& evidence_hops,
                                                  const JudgeSet& judges,
                                                  std::vector<JudgeTranscript>& transcripts) {
    if (evidence_hops.empty()) return std::nullopt;
    const std::string evidence = gathered_evidence_text(t);
    size_t supported = 0;
    for (const auto& hop : evidence_hops) {
        const std::string verdict = detail::judged_verdict(
            *judges.support, "support",
            support_judge_prompt(hop.claim, evidence, judges.cfg.corpus_snapshot_date),
            {"yes", "no"}, "no", judges.cfg.unparseable_retries, transcripts);
        if (verdict == "yes") ++supported;
    }
    return 0.5 * static_cast<double>(supported) / static_cast<double>(evidence_hops.size());
}

// Full composition. Format-invalid trajectories short-circuit to total -1
// with zero judge calls; the other components stay unset.
inline RewardBreakdown score(const Trajectory& t, const MultimodalQuery& query,
                             const JudgeSet& judges) {
    RewardBreakdown b;
    b.format = score_format(t);
    if (b.format != 0.0) {
        b.total = -1.0;
        return b;
    }
    const AnswerResult* final = t.final_answer();
    b.answer = score_answer(query.question, query.all_gold_answers(),
                            final != nullptr ? final->answer : "", judges, b.judge_transcripts);
    b.img_retrieval = score_img_retrieval(t, query, judges, b.judge_transcripts);
    if (auto text = score_text_retrieval(t, query.evidence_hops, judges, b.judge_transcripts)) {
        b.text_retrieval = *text;
    } else {
        b.text_retrieval = 0.0;
        b.no_evidence = true;
    }
    b.total = b.format + *b.answer + *b.img_retrieval + *b.text_retrieval;
    return b;
}

// ---------------------------------------------------------------------------
// Deterministic rule-based judge for tests and offline runs. A pure function
// of the rendered prompt: answer and support verdicts come from normalized
// containment / token coverage (optionally widened by a synonym table, which
// stands in for entailment over paraphrases), image verdicts from entity
// naming and hedging cues.
class StubJudge : public ChatClient {
public:
    struct Options {
        // phrase -> alternates; a claim phrase may be satisfied by any alternate
        std::map<std::string, std::vector<std::string>> synonyms;
        std::vector<std::string> hedge_cues = {"uncertain", "not sure",   "unsure",
                                               "appears to be", "might be", "possibly",
                                               "unclear",   "some kind of"};
    };

    StubJudge() : StubJudge(Options{}) {}
    explicit StubJudge(Options options) : options_(std::move(options)) {}

    std::string complete(const std::vector<Message>& messages,
                         const SamplingParams& /*params*/) override {
        std::string prompt;
        for (const auto& m : messages) prompt += m.content + "\n";
        if (prompt.find("golden) answer candidates") != std::string::npos) {
            return verdict_line(answer_verdict(prompt) ? "Yes" : "No");
        }
        if (prompt.find("visual-recognition behavior") != std::string::npos) {
            return verdict_line(image_verdict(prompt));
        }
        if (prompt.find("claim is supported") != std::string::npos) {
            return verdict_line(support_verdict(prompt) ? "Yes" : "No");
        }
        return verdict_line("No");
    }

private:
    static std::string verdict_line(const std::string& v) {
        return "<reason> rule-based stub. <Judgement> " + v + ".";
    }

    static std::string field(const std::string& prompt, const std::string& marker,
                             const std::string& end_marker) {
        const size_t start = prompt.find(marker);
        if (start == std::string::npos) return "";
        const size_t from = start + marker.size();
        const size_t end = end_marker.empty() ? std::string::npos : prompt.find(end_marker, from);
        return prompt.substr(from, end == std::string::npos ? end : end - from);
    }

    bool answer_verdict(const std::string& prompt) const {
        const std::string golds = field(prompt, "Golden Answer: ", "\n");
        const std::string answer = field(prompt, "My Answer: ", "");
        if (trim(answer).empty()) return false;
        size_t pos = 0;
        while (pos <= golds.size()) {
            size_t next = golds.find(" | ", pos);
            const std::string gold =
                golds.substr(pos, next == std::string::npos ? next : next - pos);
            if (!trim(gold).empty() &&
                (contains_normalized(answer, gold) || contains_normalized(gold, answer))) {
                return true;
            }
            if (next == std::string::npos) break;
            pos = next + 3;
        }
        return false;
    }

    std::string image_verdict(const std::string& prompt) const {
        const std::string entity = field(prompt, "Reference entity: ", "\n");
        const std::string reasoning = field(prompt, "Reasoning:\n", "\nClassify the behavior:");
        if (!trim(entity).empty() && contains_normalized(reasoning, entity)) return "CORRECT";
        const std::string norm = normalize_text(reasoning);
        for (const auto& cue : options_.hedge_cues) {
            if (norm.find(cue) != std::string::npos) return "CAUTIOUS";
        }
        return "INCORRECT";
    }

    bool support_verdict(const std::string& prompt) const {
        const std::string claim = field(prompt, "Claim: ", "\n");
        const std::string evidence = field(prompt, "Evidence:\n", "\n\nOutput format:");
        return claim_supported(claim, evidence);
    }

    bool claim_supported(const std::string& claim, const std::string& evidence) const {
        const auto ev_tokens_v = word_tokens(evidence);
        const std::set<std::string> ev(ev_tokens_v.begin(), ev_tokens_v.end());
        std::vector<std::string> candidates{normalize_text(claim)};
        for (const auto& [phrase, alts] : options_.synonyms) {
            const std::string p = normalize_text(phrase);
            const size_t n = candidates.size();
            for (size_t i = 0; i < n; ++i) {
                size_t at = candidates[i].find(p);
                if (at == std::string::npos) continue;
                for (const auto& alt : alts) {
                    std::string c = candidates[i];
                    c.replace(at, p.size(), normalize_text(alt));
                    candidates.push_back(std::move(c));
                }
            }
        }
        for (const auto& cand : candidates) {
            bool all = true;
            for (const auto& tok : word_tokens(cand)) {
                if (!ev.count(tok)) {
                    all = false;
                    break;
                }
            }
            if (all) return true;
        }
        return false;
    }

    Options options_;
};

}  // namespace mmseek
