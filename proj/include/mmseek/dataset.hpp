// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multi-hop VQA dataset construction from a knowledge graph and a text
// corpus: breadth-first chain enumeration, answer-uniqueness filtering,
// per-hop evidence cross-validation against the corpus, solver-based
// difficulty labeling, and easy-question downsampling. Deterministic given
// inputs and seed; rerunning emits a byte-identical dataset.

#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mmseek/chat.hpp"
#include "mmseek/core.hpp"
#include "mmseek/corpus.hpp"
#include "mmseek/log.hpp"
#include "mmseek/reward.hpp"
#include "mmseek/tool_env.hpp"

namespace mmseek {

// ---------------------------------------------------------------------------
// Graph

struct Entity {
    std::string id;
    std::string label;
    std::string type;  // coarse class used in question templates, e.g. "landmark"
    std::vector<std::string> aliases;
    std::optional<ImageRef> image;
};

struct Relation {
    std::string id;
    std::string label;  // verb phrase, e.g. "was designed by"
};

struct Triple {
    std::string subject;
    std::string relation;
    std::string object;

    bool operator==(const Triple&) const = default;
    auto operator<=>(const Triple&) const = default;
};

class KnowledgeGraph {
public:
    KnowledgeGraph() = default;
    KnowledgeGraph(std::vector<Entity> entities, std::vector<Relation> relations,
                   std::vector<Triple> triples) {
        for (auto& e : entities) entities_.emplace(e.id, std::move(e));
        for (auto& r : relations) relations_.emplace(r.id, std::move(r));
        std::sort(triples.begin(), triples.end());
        triples.erase(std::unique(triples.begin(), triples.end()), triples.end());
        for (const auto& t : triples) {
            if (!entities_.count(t.subject) || !entities_.count(t.object)) {
                throw Error("triple endpoint not in entities: " + t.subject + " -> " + t.object);
            }
            if (!relations_.count(t.relation)) {
                throw Error("triple relation not declared: " + t.relation);
            }
            adjacency_[t.subject].push_back({t.relation, t.object});
        }
        // Sorted expansion order keeps every traversal deterministic.
        for (auto& [_, edges] : adjacency_) std::sort(edges.begin(), edges.end());
        triples_ = std::move(triples);
    }

    const std::map<std::string, Entity>& entities() const { return entities_; }
    const std::map<std::string, Relation>& relations() const { return relations_; }
    const std::vector<Triple>& triples() const { return triples_; }

    bool has_entity(const std::string& id) const { return entities_.count(id) > 0; }

    const Entity& entity(const std::string& id) const {
        auto it = entities_.find(id);
        if (it == entities_.end()) throw Error("unknown entity: " + id);
        return it->second;
    }

    const Relation& relation(const std::string& id) const {
        auto it = relations_.find(id);
        if (it == relations_.end()) throw Error("unknown relation: " + id);
        return it->second;
    }

    // (relation, object) pairs out of `subject`, sorted.
    const std::vector<std::pair<std::string, std::string>>& edges(
        const std::string& subject) const {
        static const std::vector<std::pair<std::string, std::string>> kEmpty;
        auto it = adjacency_.find(subject);
        return it == adjacency_.end() ? kEmpty : it->second;
    }

    // All entities reachable from `from` through the relation sequence, with
    // repetition allowed (pure relational composition).
    std::set<std::string> follow(const std::string& from,
                                 const std::vector<std::string>& relation_seq) const {
        std::set<std::string> frontier{from};
        for (const auto& rel : relation_seq) {
            std::set<std::string> next;
            for (const auto& node : frontier) {
                for (const auto& [r, object] : edges(node)) {
                    if (r == rel) next.insert(object);
                }
            }
            frontier = std::move(next);
            if (frontier.empty()) break;
        }
        return frontier;
    }

private:
    std::map<std::string, Entity> entities_;
    std::map<std::string, Relation> relations_;
    std::vector<Triple> triples_;
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> adjacency_;
};

// ---------------------------------------------------------------------------
// Chains

struct ChainHop {
    std::string relation;  // relation id
    std::string object;    // entity id reached by this hop

    bool operator==(const ChainHop&) const = default;
    auto operator<=>(const ChainHop&) const = default;
};

struct ReasoningChain {
    std::string start_entity;     // the depicted entity
    std::vector<ChainHop> hops;   // length >= 2
    std::string answer;           // final object label

    bool operator==(const ReasoningChain&) const = default;

    std::vector<std::string> relation_sequence() const {
        std::vector<std::string> out;
        out.reserve(hops.size());
        for (const auto& h : hops) out.push_back(h.relation);
        return out;
    }
};

// All simple relation paths from `start` of length 2..max_depth in
// breadth-first order; no entity repeats within a chain.
inline std::vector<ReasoningChain> enumerate_chains(const KnowledgeGraph& g,
                                                    const std::string& start, int max_depth) {
    if (!g.has_entity(start)) throw Error("enumerate_chains: unknown start entity " + start);
    if (max_depth < 2) throw Error("enumerate_chains: max_depth must be >= 2");
    std::vector<ReasoningChain> out;
    struct Path {
        std::vector<ChainHop> hops;
        std::set<std::string> visited;
        std::string tail;
    };
    std::deque<Path> queue;
    queue.push_back({{}, {start}, start});
    while (!queue.empty()) {
        Path path = std::move(queue.front());
        queue.pop_front();
        if (path.hops.size() >= 2) {
            out.push_back({start, path.hops, g.entity(path.tail).label});
        }
        if (path.hops.size() >= static_cast<size_t>(max_depth)) continue;
        for (const auto& [rel, object] : g.edges(path.tail)) {
            if (path.visited.count(object)) continue;
            Path next = path;
            next.hops.push_back({rel, object});
            next.visited.insert(object);
            next.tail = object;
            queue.push_back(std::move(next));
        }
    }
    return out;
}

// True iff interpreting the chain's relation sequence from the start entity
// yields exactly one terminal entity over all bindings. Unique answer, not
// unique path: bindings that reconverge still count as unique.
inline bool check_uniqueness(const KnowledgeGraph& g, const ReasoningChain& chain) {
    return g.follow(chain.start_entity, chain.relation_sequence()).size() == 1;
}

// ---------------------------------------------------------------------------
// Question templating. Per-relation phrase templates compose outward around
// the image slot, so the question never names the depicted entity; the image
// carries it. The table ships as data and is editable without code changes.

struct QuestionTemplates {
    std::map<std::string, std::string> relation_phrases;  // relation id -> "the architect of {X}"
    std::string default_phrase = "the {relation} of {X}";
    std::string wrapper = "What is {X}?";
    std::string image_slot = "the {type} in the image";

    static QuestionTemplates from_json(const json& j) {
        QuestionTemplates t;
        const json relations = j.value("relations", json::object());
        for (const auto& [k, v] : relations.items()) {
            t.relation_phrases[k] = v.get<std::string>();
        }
        t.default_phrase = j.value("default", t.default_phrase);
        t.wrapper = j.value("wrapper", t.wrapper);
        t.image_slot = j.value("image_slot", t.image_slot);
        return t;
    }
};

namespace detail {
inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}
}  // namespace detail

inline std::string render_question(const KnowledgeGraph& g, const ReasoningChain& chain,
                                   const QuestionTemplates& templates) {
    const Entity& start = g.entity(chain.start_entity);
    std::string phrase = detail::replace_all(templates.image_slot, "{type}",
                                             start.type.empty() ? "entity" : start.type);
    for (const auto& hop : chain.hops) {
        auto it = templates.relation_phrases.find(hop.relation);
        std::string tmpl = it != templates.relation_phrases.end()
                               ? it->second
                               : detail::replace_all(templates.default_phrase, "{relation}",
                                                     g.relation(hop.relation).label);
        phrase = detail::replace_all(tmpl, "{X}", phrase);
    }
    return detail::replace_all(templates.wrapper, "{X}", phrase);
}

// ---------------------------------------------------------------------------
// Candidate validation against the corpus

struct CandidateQuestion {
    ReasoningChain chain;
    std::string question_text;
    ImageRef image;  // start entity's image
    std::vector<EvidenceHop> validated_evidence;
    Difficulty difficulty = Difficulty::unlabeled;
};

struct ChainValidation {
    enum class Outcome { accepted, rejected, deferred };
    Outcome outcome = Outcome::rejected;
    int failed_hop = -1;       // for rejected
    std::string error;         // for deferred (search/judge failure)
    std::vector<EvidenceHop> evidence;
};

// The claim one hop asserts, e.g. "Eiffel Tower was designed by Gustave Eiffel."
inline std::string hop_claim(const KnowledgeGraph& g, const ReasoningChain& chain, size_t hop) {
    const std::string& subject =
        hop == 0 ? chain.start_entity : chain.hops[hop - 1].object;
    return g.entity(subject).label + " " + g.relation(chain.hops[hop].relation).label + " " +
           g.entity(chain.hops[hop].object).label + ".";
}

// Cross-validates every hop against the corpus: a hop-specific search
// (subject label + relation label), then a per-chunk support judgement. The
// first supporting chunk becomes the hop's evidence; any unsupported hop
// rejects the whole candidate. Search or judge failures defer the candidate
// instead of rejecting it.
inline ChainValidation validate_chain(const KnowledgeGraph& g, const ReasoningChain& chain,
                                      ToolEnv& search_env, const JudgeSet& judges) {
    ChainValidation result;
    for (size_t hop = 0; hop < chain.hops.size(); ++hop) {
        const std::string& subject =
            hop == 0 ? chain.start_entity : chain.hops[hop - 1].object;
        const std::string query =
            g.entity(subject).label + " " + g.relation(chain.hops[hop].relation).label;
        const std::string claim = hop_claim(g, chain, hop);
        TextResult chunks;
        try {
            chunks = std::get<TextResult>(search_env.text_search(query).payload);
        } catch (const std::exception& e) {
            result.outcome = ChainValidation::Outcome::deferred;
            result.error = e.what();
            return result;
        }
        bool supported = false;
        for (const auto& chunk : chunks.chunks) {
            std::vector<JudgeTranscript> transcripts;
            const std::string verdict = detail::judged_verdict(
                *judges.support, "support",
                support_judge_prompt(claim, chunk.text, judges.cfg.corpus_snapshot_date),
                {"yes", "no"}, "no", judges.cfg.unparseable_retries, transcripts);
            if (verdict == "yes") {
                result.evidence.push_back({static_cast<int>(hop), claim, chunk.text,
                                           chunk.source_id});
                supported = true;
                break;
            }
        }
        if (!supported) {
            result.outcome = ChainValidation::Outcome::rejected;
            result.failed_hop = static_cast<int>(hop);
            result.evidence.clear();
            return result;
        }
    }
    result.outcome = ChainValidation::Outcome::accepted;
    return result;
}

// ---------------------------------------------------------------------------
// Difficulty labeling: n solver attempts graded by the answer judge.
// all correct -> easy, some correct -> medium, none -> hard.

inline Difficulty label_difficulty(const CandidateQuestion& q, const std::string& gold_answer,
                                   const std::vector<std::string>& gold_aliases,
                                   ChatClient& solver, const JudgeSet& judges, int n = 3) {
    std::vector<std::string> golds{gold_answer};
    golds.insert(golds.end(), gold_aliases.begin(), gold_aliases.end());
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        std::string attempt;
        try {
            attempt = solver.complete(
                {Message::system("Answer the question as concisely as possible."),
                 Message::user(q.question_text)},
                SamplingParams{1.0, 64});
        } catch (const std::exception& e) {
            log_event("difficulty.solver_unavailable", {{"error", e.what()}});
            return Difficulty::unlabeled;
        }
        std::vector<JudgeTranscript> transcripts;
        if (score_answer(q.question_text, golds, attempt, judges, transcripts) == 1.0) {
            ++correct;
        }
    }
    if (correct == n) return Difficulty::easy;
    if (correct > 0) return Difficulty::medium;
    return Difficulty::hard;
}

// ---------------------------------------------------------------------------
// Balancing: keep all hard and medium questions; uniformly downsample easy
// ones to floor(|hard| / 2), deterministically under `seed`. Original order
// is preserved.

template <typename Item, typename DifficultyFn>
std::vector<Item> balance_pool(const std::vector<Item>& pool, DifficultyFn difficulty_of,
                               std::uint64_t seed) {
    size_t hard = 0;
    std::vector<size_t> easy_positions;
    for (size_t i = 0; i < pool.size(); ++i) {
        const Difficulty d = difficulty_of(pool[i]);
        if (d == Difficulty::hard) ++hard;
        if (d == Difficulty::easy) easy_positions.push_back(i);
    }
    const size_t quota = hard / 2;
    std::set<size_t> kept_easy;
    if (easy_positions.size() <= quota) {
        kept_easy.insert(easy_positions.begin(), easy_positions.end());
    } else {
        for (size_t k : sample_indices(easy_positions.size(), quota, seed)) {
            kept_easy.insert(easy_positions[k]);
        }
    }
    std::vector<Item> out;
    out.reserve(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
        const Difficulty d = difficulty_of(pool[i]);
        if (d == Difficulty::easy && !kept_easy.count(i)) continue;
        out.push_back(pool[i]);
    }
    return out;
}

inline std::vector<CandidateQuestion> balance(const std::vector<CandidateQuestion>& pool,
                                              std::uint64_t seed) {
    return balance_pool(pool, [](const CandidateQuestion& q) { return q.difficulty; }, seed);
}

// ---------------------------------------------------------------------------
// Graph IO and the full pipeline

// entities file: one JSON object per line; {"kind":"relation"} lines declare
// relations, everything else is an entity. Triples file: {"subject",
// "relation","object"} per line.
inline KnowledgeGraph load_graph(const std::filesystem::path& triples_path,
                                 const std::filesystem::path& entities_path) {
    std::vector<Entity> entities;
    std::vector<Relation> relations;
    for (const auto& j : read_jsonl(entities_path)) {
        if (j.value("kind", "entity") == "relation") {
            relations.push_back({j.at("id").get<std::string>(), j.value("label", "")});
        } else {
            Entity e;
            e.id = j.at("id").get<std::string>();
            e.label = j.value("label", e.id);
            e.type = j.value("type", "");
            e.aliases = j.value("aliases", std::vector<std::string>{});
            if (j.contains("image")) e.image = j.at("image").get<ImageRef>();
            entities.push_back(std::move(e));
        }
    }
    std::vector<Triple> triples;
    for (const auto& j : read_jsonl(triples_path)) {
        triples.push_back({j.at("subject").get<std::string>(),
                           j.at("relation").get<std::string>(),
                           j.at("object").get<std::string>()});
    }
    return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

struct ForgeConfig {
    int max_depth = 4;
    int solver_attempts = 3;
    std::uint64_t seed = 0;
    QuestionTemplates templates;
};

struct ForgeReport {
    size_t starts = 0;
    size_t chains = 0;
    size_t unique = 0;
    size_t validated = 0;
    size_t deferred = 0;
    size_t emitted = 0;
};

inline void to_json(json& j, const ForgeReport& r) {
    j = json{{"starts", r.starts},       {"chains", r.chains},   {"unique", r.unique},
             {"validated", r.validated}, {"deferred", r.deferred}, {"emitted", r.emitted}};
}

// Runs the full construction pipeline over every entity that carries an
// image. One question is kept per (start entity, relation sequence).
inline std::vector<MultimodalQuery> build_dataset(const KnowledgeGraph& g, ToolEnv& search_env,
                                                  ChatClient& solver, const JudgeSet& judges,
                                                  const ForgeConfig& cfg,
                                                  ForgeReport* report = nullptr) {
    ForgeReport local;
    std::vector<CandidateQuestion> pool;
    for (const auto& [id, entity] : g.entities()) {
        if (!entity.image.has_value()) continue;
        ++local.starts;
        std::set<std::vector<std::string>> seen_relation_seqs;
        for (const auto& chain : enumerate_chains(g, id, cfg.max_depth)) {
            ++local.chains;
            if (!check_uniqueness(g, chain)) continue;
            if (!seen_relation_seqs.insert(chain.relation_sequence()).second) continue;
            ++local.unique;
            CandidateQuestion candidate;
            candidate.chain = chain;
            candidate.question_text = render_question(g, chain, cfg.templates);
            candidate.image = *entity.image;
            // The image must carry the entity; a question naming it leaks the
            // visual hop.
            if (contains_normalized(candidate.question_text, entity.label)) continue;
            ChainValidation validation = validate_chain(g, chain, search_env, judges);
            if (validation.outcome == ChainValidation::Outcome::deferred) {
                ++local.deferred;
                log_event("forge.deferred", {{"start", id}, {"error", validation.error}});
                continue;
            }
            if (validation.outcome != ChainValidation::Outcome::accepted) continue;
            ++local.validated;
            candidate.validated_evidence = std::move(validation.evidence);
            const Entity& answer_entity = g.entity(chain.hops.back().object);
            candidate.difficulty = label_difficulty(candidate, answer_entity.label,
                                                    answer_entity.aliases, solver, judges,
                                                    cfg.solver_attempts);
            pool.push_back(std::move(candidate));
        }
    }
    std::vector<MultimodalQuery> out;
    for (const auto& c : balance(pool, cfg.seed)) {
        const Entity& start = g.entity(c.chain.start_entity);
        const Entity& answer_entity = g.entity(c.chain.hops.back().object);
        MultimodalQuery q;
        std::string rel_tag;
        for (const auto& hop : c.chain.hops) rel_tag += hop.relation + ">" + hop.object + ";";
        q.id = "q-" + sha256_hex(c.chain.start_entity + "|" + rel_tag).substr(0, 12);
        q.image = c.image;
        q.question = c.question_text;
        q.gold_answer = answer_entity.label;
        q.answer_aliases = answer_entity.aliases;
        q.evidence_hops = c.validated_evidence;
        q.difficulty = c.difficulty;
        q.visual_entity = start.label;
        out.push_back(std::move(q));
    }
    local.emitted = out.size();
    if (report != nullptr) *report = local;
    return out;
}

}  // namespace mmseek
