// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Group-relative policy optimization support: tokenized trajectories with
// loss masks over everything the policy did not generate, z-normalized
// group advantages, the clipped importance-ratio objective with a k3 KL
// penalty, and JSONL batch export for an external trainer. No optimizer or
// weight update lives here.
//
// Conventions (also recorded in every export header):
//   - advantage std is the population std (divide by G); groups with
//     std < 1e-8 yield all-zero advantages
//   - KL estimator: exp(ref - new) - (ref - new) - 1, per token
//   - aggregation: masked-token mean per group, then mean over groups

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mmseek/chat.hpp"
#include "mmseek/core.hpp"
#include "mmseek/render.hpp"
#include "mmseek/util.hpp"

namespace mmseek {

inline constexpr double kZeroVarianceGuard = 1e-8;
inline constexpr int kBatchSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Tokenizers. Pluggable: the external trainer's vocabulary decides the real
// one; these two cover byte-level training and fixed-vocab experiments.

struct TokenSpan {
    int id = 0;
    size_t byte_begin = 0;  // within the encoded text
    size_t byte_end = 0;
};

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    // Token spans must tile `text` exactly, in order, with no gaps.
    virtual std::vector<TokenSpan> encode(std::string_view text) const = 0;
    virtual json spec() const = 0;
};

class ByteTokenizer : public Tokenizer {
public:
    std::vector<TokenSpan> encode(std::string_view text) const override {
        std::vector<TokenSpan> out;
        out.reserve(text.size());
        for (size_t i = 0; i < text.size(); ++i) {
            out.push_back({static_cast<unsigned char>(text[i]), i, i + 1});
        }
        return out;
    }
    json spec() const override { return json{{"type", "byte"}}; }
};

// Greedy longest-match over a fixed vocabulary; unknown bytes fall back to
// per-byte tokens with ids offset past the vocabulary.
class VocabTokenizer : public Tokenizer {
public:
    explicit VocabTokenizer(std::vector<std::string> tokens) : vocab_(std::move(tokens)) {
        for (size_t i = 0; i < vocab_.size(); ++i) {
            if (vocab_[i].empty()) throw Error("vocab tokenizer: empty token");
            by_first_[static_cast<unsigned char>(vocab_[i][0])].push_back(i);
        }
        for (auto& [c, ids] : by_first_) {
            std::sort(ids.begin(), ids.end(), [&](size_t a, size_t b) {
                return vocab_[a].size() > vocab_[b].size();
            });
        }
    }

    std::vector<TokenSpan> encode(std::string_view text) const override {
        std::vector<TokenSpan> out;
        size_t pos = 0;
        while (pos < text.size()) {
            const auto it = by_first_.find(static_cast<unsigned char>(text[pos]));
            size_t matched = 0;
            size_t matched_id = 0;
            if (it != by_first_.end()) {
                for (size_t id : it->second) {
                    const std::string& tok = vocab_[id];
                    if (text.substr(pos, tok.size()) == tok) {
                        matched = tok.size();
                        matched_id = id;
                        break;
                    }
                }
            }
            if (matched > 0) {
                out.push_back({static_cast<int>(matched_id), pos, pos + matched});
                pos += matched;
            } else {
                out.push_back({static_cast<int>(vocab_.size()) +
                                   static_cast<unsigned char>(text[pos]),
                               pos, pos + 1});
                ++pos;
            }
        }
        return out;
    }

    json spec() const override { return json{{"type", "vocab"}, {"tokens", vocab_}}; }

private:
    std::vector<std::string> vocab_;
    std::map<unsigned char, std::vector<size_t>> by_first_;
};

inline std::unique_ptr<Tokenizer> load_tokenizer(const json& spec) {
    const std::string type = spec.value("type", "byte");
    if (type == "byte") return std::make_unique<ByteTokenizer>();
    if (type == "vocab") {
        return std::make_unique<VocabTokenizer>(spec.value("tokens", std::vector<std::string>{}));
    }
    throw Error("unknown tokenizer type: " + type);
}

// ---------------------------------------------------------------------------
// Trajectory -> segments -> tokens

struct SpanEntry {
    int step = -1;         // -1 for the prompt
    std::string kind;      // prompt / assistant_header / assistant / assistant_footer / tool_response
    size_t byte_begin = 0;
    size_t byte_end = 0;
    size_t token_begin = 0;
    size_t token_end = 0;
};

inline void to_json(json& j, const SpanEntry& s) {
    j = json{{"step", s.step},         {"kind", s.kind},
             {"byte_begin", s.byte_begin},   {"byte_end", s.byte_end},
             {"token_begin", s.token_begin}, {"token_end", s.token_end}};
}
inline void from_json(const json& j, SpanEntry& s) {
    s.step = j.value("step", -1);
    s.kind = j.value("kind", "");
    s.byte_begin = j.value("byte_begin", size_t{0});
    s.byte_end = j.value("byte_end", size_t{0});
    s.token_begin = j.value("token_begin", size_t{0});
    s.token_end = j.value("token_end", size_t{0});
}

struct TokenizedTrajectory {
    std::vector<int> token_ids;
    std::vector<std::uint8_t> loss_mask;  // 1 = policy-generated token
    std::vector<double> logprob_old;      // zeros unless a provider fills them
    std::vector<double> logprob_ref;
    std::vector<SpanEntry> span_map;
};

namespace detail {

struct TextSegment {
    int step = -1;
    std::string kind;
    std::string text;
    bool policy = false;
};

inline std::string turn_text(const Trajectory& t, size_t i) {
    if (i < t.raw_turns.size()) return t.raw_turns[i];
    return canonical_turn(t.steps[i].reasoning, t.steps[i].tool_call);
}

// Splits the full rendered conversation into segments, using the stored
// observations as ground truth. Policy tokens are exactly the raw turn
// bytes; role markers and tool responses are context. Throws SpanMismatch
// when stored observations disagree with the reconstruction.
inline std::vector<TextSegment> trajectory_segments(
    const Trajectory& t, ImagePresentation presentation = ImagePresentation::pixels_and_titles) {
    std::vector<TextSegment> segs;
    std::string rendered;
    auto push = [&](int step, const char* kind, std::string text, bool policy) {
        if (text.empty()) return;
        rendered += text;
        segs.push_back({step, kind, std::move(text), policy});
    };

    if (!t.steps.empty()) {
        push(-1, "prompt", t.steps[0].observation, false);
    }
    for (size_t i = 0; i < t.steps.size(); ++i) {
        if (t.steps[i].observation != rendered) {
            throw SpanMismatch("stored observation of step " + std::to_string(i) +
                               " does not match the rendered prefix");
        }
        const std::string raw = turn_text(t, i);
        push(static_cast<int>(i), "assistant_header", "<|assistant|>\n", false);
        push(static_cast<int>(i), "assistant", raw, true);
        push(static_cast<int>(i), "assistant_footer", "\n", false);

        Message info = Message::user(render_information_block(t.steps[i].tool_response));
        if (presentation == ImagePresentation::pixels_and_titles) {
            if (const auto* ir = std::get_if<ImageResult>(&t.steps[i].tool_response.payload)) {
                if (!ir->images.empty()) info.images.push_back(ir->images.front());
            }
        }
        push(static_cast<int>(i), "tool_response", render_message(info), false);
    }
    // A trailing raw turn (parse or tool failure) is still policy output.
    if (t.raw_turns.size() == t.steps.size() + 1) {
        const int step = static_cast<int>(t.steps.size());
        push(step, "assistant_header", "<|assistant|>\n", false);
        push(step, "assistant", t.raw_turns.back(), true);
        push(step, "assistant_footer", "\n", false);
    }
    return segs;
}

}  // namespace detail

// Tokenizes the full rendered conversation segment by segment (tokens never
// straddle a segment boundary) and masks exactly the tokens originating from
// raw assistant turns. Log-probability sequences are zero-filled.
inline TokenizedTrajectory build_loss_mask(
    const Trajectory& t, const Tokenizer& tokenizer,
    ImagePresentation presentation = ImagePresentation::pixels_and_titles) {
    TokenizedTrajectory out;
    size_t byte_base = 0;
    for (const auto& seg : detail::trajectory_segments(t, presentation)) {
        const auto tokens = tokenizer.encode(seg.text);
        // The tokenizer must tile the segment exactly.
        size_t expected = 0;
        for (const auto& tok : tokens) {
            if (tok.byte_begin != expected) {
                throw SpanMismatch("token spans do not tile segment: " + seg.kind);
            }
            expected = tok.byte_end;
        }
        if (expected != seg.text.size()) {
            throw SpanMismatch("token spans do not cover segment: " + seg.kind);
        }
        SpanEntry entry;
        entry.step = seg.step;
        entry.kind = seg.kind;
        entry.byte_begin = byte_base;
        entry.byte_end = byte_base + seg.text.size();
        entry.token_begin = out.token_ids.size();
        for (const auto& tok : tokens) {
            out.token_ids.push_back(tok.id);
            out.loss_mask.push_back(seg.policy ? 1 : 0);
        }
        entry.token_end = out.token_ids.size();
        out.span_map.push_back(entry);
        byte_base += seg.text.size();
    }
    out.logprob_old.assign(out.token_ids.size(), 0.0);
    out.logprob_ref.assign(out.token_ids.size(), 0.0);
    return out;
}

// ---------------------------------------------------------------------------
// Advantages and objective

// Z-normalization of group rewards with the population std. The same scalar
// broadcasts to every token of its trajectory. Groups whose rewards are
// indistinguishable (std below the guard) carry no learning signal and get
// all-zero advantages.
inline std::vector<double> compute_advantages(const std::vector<double>& rewards) {
    const size_t g = rewards.size();
    if (g == 0) return {};
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(g);
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(g);
    const double std_dev = std::sqrt(var);
    std::vector<double> out(g, 0.0);
    if (std_dev < kZeroVarianceGuard) return out;
    for (size_t i = 0; i < g; ++i) out[i] = (rewards[i] - mean) / std_dev;
    return out;
}

struct GroupBatch {
    std::string query_id;
    std::vector<TokenizedTrajectory> members;  // G members
    std::vector<double> rewards;               // one per member
    std::vector<double> advantages;            // computed from rewards
    double clip_epsilon = 0.2;
    double kl_beta = 0.001;
};

inline GroupBatch make_group_batch(std::string query_id,
                                   std::vector<TokenizedTrajectory> members,
                                   std::vector<double> rewards, double clip_epsilon = 0.2,
                                   double kl_beta = 0.001) {
    if (members.size() != rewards.size()) {
        throw AlignmentError("group batch: members and rewards differ in size");
    }
    GroupBatch batch;
    batch.query_id = std::move(query_id);
    batch.members = std::move(members);
    batch.advantages = compute_advantages(rewards);
    batch.rewards = std::move(rewards);
    batch.clip_epsilon = clip_epsilon;
    batch.kl_beta = kl_beta;
    return batch;
}

struct ObjectiveResult {
    double objective = 0.0;  // masked-token mean over the whole group
    size_t masked_tokens = 0;
    // Per member, per token; exactly zero at masked-out positions.
    std::vector<std::vector<double>> per_token_term;
    std::vector<std::vector<double>> dterm_dlogprob_new;  // analytic partials
};

// Clipped importance-ratio objective with k3 KL penalty, evaluated per
// masked token:
//   rho  = exp(new - old)
//   term = min(rho * A, clip(rho, 1-eps, 1+eps) * A) - beta * kl
//   kl   = exp(ref - new) - (ref - new) - 1
// Unmasked tokens contribute exactly zero. Also returns the analytic
// derivative of each term with respect to logprob_new for gradient checks.
inline ObjectiveResult grpo_objective(const GroupBatch& batch,
                                      const std::vector<std::vector<double>>& logprob_new) {
    if (logprob_new.size() != batch.members.size()) {
        throw AlignmentError("grpo_objective: logprob_new has wrong member count");
    }
    ObjectiveResult result;
    result.per_token_term.resize(batch.members.size());
    result.dterm_dlogprob_new.resize(batch.members.size());
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < batch.members.size(); ++i) {
        const auto& member = batch.members[i];
        const auto& lp_new = logprob_new[i];
        const size_t n = member.token_ids.size();
        if (lp_new.size() != n || member.logprob_old.size() != n ||
            member.logprob_ref.size() != n || member.loss_mask.size() != n) {
            throw AlignmentError("grpo_objective: sequence length mismatch in member " +
                                 std::to_string(i));
        }
        const double advantage = batch.advantages[i];
        result.per_token_term[i].assign(n, 0.0);
        result.dterm_dlogprob_new[i].assign(n, 0.0);
        for (size_t tkn = 0; tkn < n; ++tkn) {
            if (member.loss_mask[tkn] == 0) continue;
            const double rho = std::exp(lp_new[tkn] - member.logprob_old[tkn]);
            const double unclipped = rho * advantage;
            const double clipped =
                std::clamp(rho, 1.0 - batch.clip_epsilon, 1.0 + batch.clip_epsilon) * advantage;
            const double pg = std::min(unclipped, clipped);
            const double dpg = unclipped <= clipped ? rho * advantage : 0.0;
            const double logr = member.logprob_ref[tkn] - lp_new[tkn];
            const double kl = std::exp(logr) - logr - 1.0;
            const double dkl = 1.0 - std::exp(logr);
            const double term = pg - batch.kl_beta * kl;
            result.per_token_term[i][tkn] = term;
            result.dterm_dlogprob_new[i][tkn] = dpg - batch.kl_beta * dkl;
            sum += term;
            ++count;
        }
    }
    result.masked_tokens = count;
    result.objective = count > 0 ? sum / static_cast<double>(count) : 0.0;
    return result;
}

// ---------------------------------------------------------------------------
// Batch file: JSONL, header record first, then one record per group.

inline void to_json(json& j, const TokenizedTrajectory& t) {
    std::vector<int> mask(t.loss_mask.begin(), t.loss_mask.end());
    j = json{{"token_ids", t.token_ids},
             {"loss_mask", mask},
             {"logprob_old", t.logprob_old},
             {"logprob_ref", t.logprob_ref},
             {"span_map", t.span_map}};
}
inline void from_json(const json& j, TokenizedTrajectory& t) {
    t.token_ids = j.value("token_ids", std::vector<int>{});
    const auto mask = j.value("loss_mask", std::vector<int>{});
    t.loss_mask.assign(mask.begin(), mask.end());
    t.logprob_old = j.value("logprob_old", std::vector<double>{});
    t.logprob_ref = j.value("logprob_ref", std::vector<double>{});
    t.span_map = j.value("span_map", std::vector<SpanEntry>{});
}

inline void to_json(json& j, const GroupBatch& b) {
    j = json{{"query_id", b.query_id},   {"members", b.members},
             {"rewards", b.rewards},     {"advantages", b.advantages},
             {"clip_epsilon", b.clip_epsilon}, {"kl_beta", b.kl_beta}};
}
inline void from_json(const json& j, GroupBatch& b) {
    b.query_id = j.value("query_id", "");
    b.members = j.value("members", std::vector<TokenizedTrajectory>{});
    b.rewards = j.value("rewards", std::vector<double>{});
    b.advantages = j.value("advantages", std::vector<double>{});
    b.clip_epsilon = j.value("clip_epsilon", 0.2);
    b.kl_beta = j.value("kl_beta", 0.001);
}

inline json batch_file_header(const json& tokenizer_spec) {
    return json{{"schema_version", kBatchSchemaVersion},
                {"kind", "grpo_group_batches"},
                {"advantage_std", "population"},
                {"zero_variance_guard", kZeroVarianceGuard},
                {"kl_estimator", "k3"},
                {"aggregation", "masked_token_mean_per_group_then_mean_over_groups"},
                {"tokenizer", tokenizer_spec}};
}

inline void export_batches(const std::vector<GroupBatch>& groups,
                           const std::filesystem::path& path, const json& tokenizer_spec) {
    std::vector<json> lines;
    lines.reserve(groups.size() + 1);
    lines.push_back(batch_file_header(tokenizer_spec));
    for (const auto& g : groups) lines.push_back(g);
    write_jsonl(path, lines);
}

struct BatchFile {
    json header;
    std::vector<GroupBatch> groups;
};

inline BatchFile import_batches(const std::filesystem::path& path) {
    const auto lines = read_jsonl(path);
    if (lines.empty()) throw IoError("batch file has no header record: " + path.string());
    BatchFile out;
    out.header = lines.front();
    if (out.header.value("schema_version", 0) != kBatchSchemaVersion) {
        throw IoError("unsupported batch schema version in " + path.string());
    }
    for (size_t i = 1; i < lines.size(); ++i) out.groups.push_back(lines[i].get<GroupBatch>());
    return out;
}

}  // namespace mmseek
