// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared test fixtures and independent oracles. Oracles here must stay
// independent of the implementation paths they check: the path oracle is a
// recursive DFS, the binding oracle walks raw triples, and expected values
// in tests are frozen from these.

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "mmseek/core.hpp"
#include "mmseek/dataset.hpp"
#include "mmseek/render.hpp"
#include "mmseek/reward.hpp"
#include "mmseek/rollout.hpp"
#include "mmseek/tool_env.hpp"

namespace mmseek::testing {

namespace fs = std::filesystem;

class TempDir {
public:
    TempDir() {
        static std::atomic<uint64_t> counter{0};
        path_ = fs::temp_directory_path() /
                ("mmseek-test-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

inline ImageRef test_image(const std::string& tag) {
    return {"img://" + tag, sha256_hex("img:" + tag), "image/png"};
}

inline MultimodalQuery make_query(const std::string& id, const std::string& question = "",
                                  const std::string& gold = "Paris") {
    MultimodalQuery q;
    q.id = id;
    q.image = test_image(id);
    q.question = question.empty() ? "What is the answer for " + id + "?" : question;
    q.gold_answer = gold;
    q.visual_entity = "Eiffel Tower";
    return q;
}

inline ToolEnvConfig test_env_config(const fs::path& cache_dir) {
    ToolEnvConfig cfg;
    cfg.cache_dir = cache_dir;
    cfg.retry_backoff_ms = 1;
    return cfg;
}

inline std::unique_ptr<ToolEnv> make_mock_env(const ToolEnvConfig& cfg) {
    return std::make_unique<ToolEnv>(cfg, std::make_unique<MockImageBackend>(),
                                     std::make_unique<MockTextBackend>(),
                                     std::make_unique<StubExpertBackend>());
}

// ---------------------------------------------------------------------------
// Trajectory builders

inline ToolResponse text_response(std::vector<TextChunk> chunks) {
    ToolResponse r;
    r.payload = TextResult{std::move(chunks)};
    return r;
}

inline ToolResponse image_response(int images = 1, int titles = 3) {
    ImageResult ir;
    for (int i = 0; i < images; ++i) ir.images.push_back(test_image("res" + std::to_string(i)));
    for (int i = 0; i < titles; ++i) {
        ir.titles.push_back({"title " + std::to_string(i), "https://t/" + std::to_string(i)});
    }
    ToolResponse r;
    r.payload = std::move(ir);
    return r;
}

inline ToolResponse answer_response(const std::string& answer) {
    ToolResponse r;
    r.payload = AnswerResult{answer};
    return r;
}

struct StepSpec {
    std::string reasoning;
    ToolCall call;
    ToolResponse response;
};

// Builds a trajectory whose raw turns are the canonical renderings of its
// steps; observations are left empty unless fill_observations is called.
inline Trajectory make_trajectory(const std::string& query_id, std::vector<StepSpec> specs,
                                  Terminated terminated) {
    Trajectory t;
    t.query_id = query_id;
    t.terminated = terminated;
    for (auto& spec : specs) {
        TrajectoryStep step;
        step.reasoning = spec.reasoning;
        step.tool_call = spec.call;
        step.tool_response = spec.response;
        t.raw_turns.push_back(canonical_turn(spec.reasoning, spec.call));
        t.steps.push_back(std::move(step));
    }
    return t;
}

// Makes stored observations consistent with the renderings the tokenizer
// reconstructs: obs[0] = prompt, obs[i+1] = obs[i] + assistant + info.
inline void fill_observations(Trajectory& t, const std::string& prompt,
                              ImagePresentation presentation = ImagePresentation::pixels_and_titles) {
    std::string rendered = prompt;
    for (size_t i = 0; i < t.steps.size(); ++i) {
        t.steps[i].observation = rendered;
        rendered += "<|assistant|>\n" + t.raw_turns[i] + "\n";
        Message info = Message::user(render_information_block(t.steps[i].tool_response));
        if (presentation == ImagePresentation::pixels_and_titles) {
            if (const auto* ir = std::get_if<ImageResult>(&t.steps[i].tool_response.payload)) {
                if (!ir->images.empty()) info.images.push_back(ir->images.front());
            }
        }
        rendered += render_message(info);
    }
}

inline Trajectory answered_trajectory(const std::string& query_id,
                                      const std::string& final_answer = "Paris") {
    return make_trajectory(
        query_id,
        {{"The image shows the Eiffel Tower. I need its architect.",
          TextSearchCall{"Eiffel Tower architect"},
          text_response({{"Gustave Eiffel designed the Eiffel Tower.", "doc1", 0, 1.0}})},
         {"I have enough evidence now.", AnswerExpertCall{}, answer_response(final_answer)}},
        Terminated::answered);
}

// ---------------------------------------------------------------------------
// Judge call counting

class CountingChatClient : public ChatClient {
public:
    explicit CountingChatClient(ChatClient& inner) : inner_(inner) {}
    std::string complete(const std::vector<Message>& messages,
                         const SamplingParams& params) override {
        ++calls_;
        return inner_.complete(messages, params);
    }
    size_t calls() const { return calls_.load(); }

private:
    ChatClient& inner_;
    std::atomic<size_t> calls_{0};
};

// Chat stub that replies from a fixed per-call sequence, then repeats the
// last entry.
class SequenceChatClient : public ChatClient {
public:
    explicit SequenceChatClient(std::vector<std::string> replies)
        : replies_(std::move(replies)) {}
    std::string complete(const std::vector<Message>&, const SamplingParams&) override {
        const size_t i = next_.fetch_add(1);
        if (replies_.empty()) return "";
        return replies_[std::min(i, replies_.size() - 1)];
    }

private:
    std::vector<std::string> replies_;
    std::atomic<size_t> next_{0};
};

// ---------------------------------------------------------------------------
// Random trajectories for the reward bounds sweep

inline Trajectory random_stub_trajectory(std::mt19937_64& rng, const MultimodalQuery& query) {
    auto coin = [&rng](double p) {
        return (static_cast<double>(rng()) / static_cast<double>(UINT64_MAX)) < p;
    };
    const int searches = static_cast<int>(rng() % 4);
    std::vector<StepSpec> specs;
    for (int i = 0; i < searches; ++i) {
        std::string reasoning;
        switch (rng() % 4) {
            case 0: reasoning = "The image shows " + query.visual_entity + "."; break;
            case 1: reasoning = "This appears to be a tall structure, unsure which."; break;
            case 2: reasoning = "The image shows the Brandenburg Gate."; break;
            default: reasoning = "Searching for supporting facts."; break;
        }
        if (coin(0.5)) {
            specs.push_back({reasoning, TextSearchCall{"query " + std::to_string(i)},
                             text_response({{query.evidence_hops.size() > static_cast<size_t>(i)
                                                 ? query.evidence_hops[i].claim
                                                 : "irrelevant passage",
                                             "doc", 0, 1.0}})});
        } else {
            specs.push_back({reasoning, ImageSearchCall{query.image}, image_response()});
        }
    }
    const int shape = static_cast<int>(rng() % 5);
    if (shape <= 1) {
        specs.push_back({"Answering now.", AnswerExpertCall{},
                         answer_response(coin(0.5) ? query.gold_answer : "something else")});
        return make_trajectory(query.id, std::move(specs), Terminated::answered);
    }
    if (shape == 2) {
        if (specs.empty()) {
            specs.push_back({"Looking.", TextSearchCall{"q"}, text_response({})});
        }
        return make_trajectory(query.id, std::move(specs), Terminated::turn_limit);
    }
    if (shape == 3) {
        Trajectory t = make_trajectory(query.id, std::move(specs), Terminated::parse_failure);
        t.raw_turns.push_back("no think tag here <tool_call>{}</tool_call>");
        return t;
    }
    // structurally corrupted: empty reasoning on an answered trajectory
    specs.push_back({"", AnswerExpertCall{}, answer_response("x")});
    Trajectory t = make_trajectory(query.id, std::move(specs), Terminated::answered);
    return t;
}

// ---------------------------------------------------------------------------
// Graph fixtures and oracles

// Random graph over n entities with edge density controlled by `edge_prob`.
inline KnowledgeGraph random_graph(std::mt19937_64& rng, int n_entities, int n_relations,
                                   double edge_prob, bool with_images = true) {
    std::vector<Entity> entities;
    for (int i = 0; i < n_entities; ++i) {
        Entity e;
        e.id = "e" + std::to_string(i);
        e.label = "Entity " + std::to_string(i);
        e.type = "thing";
        if (with_images) e.image = test_image(e.id);
        entities.push_back(std::move(e));
    }
    std::vector<Relation> relations;
    for (int i = 0; i < n_relations; ++i) {
        relations.push_back({"r" + std::to_string(i), "relates" + std::to_string(i) + " to"});
    }
    std::vector<Triple> triples;
    for (int s = 0; s < n_entities; ++s) {
        for (int o = 0; o < n_entities; ++o) {
            if (s == o) continue;
            for (int r = 0; r < n_relations; ++r) {
                const double draw =
                    static_cast<double>(rng()) / static_cast<double>(UINT64_MAX);
                if (draw < edge_prob) {
                    triples.push_back({"e" + std::to_string(s), "r" + std::to_string(r),
                                       "e" + std::to_string(o)});
                }
            }
        }
    }
    return KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples));
}

// Independent recursive DFS enumeration of all simple relation paths of
// length 2..max_depth from `start`.
inline void dfs_paths_oracle_rec(const KnowledgeGraph& g, const std::string& node,
                                 std::vector<ChainHop>& path, std::set<std::string>& visited,
                                 int max_depth,
                                 std::set<std::vector<ChainHop>>& out) {
    if (path.size() >= 2) out.insert(path);
    if (path.size() >= static_cast<size_t>(max_depth)) return;
    for (const auto& triple : g.triples()) {
        if (triple.subject != node || visited.count(triple.object)) continue;
        path.push_back({triple.relation, triple.object});
        visited.insert(triple.object);
        dfs_paths_oracle_rec(g, triple.object, path, visited, max_depth, out);
        visited.erase(triple.object);
        path.pop_back();
    }
}

inline std::set<std::vector<ChainHop>> dfs_paths_oracle(const KnowledgeGraph& g,
                                                        const std::string& start,
                                                        int max_depth) {
    std::set<std::vector<ChainHop>> out;
    std::vector<ChainHop> path;
    std::set<std::string> visited{start};
    dfs_paths_oracle_rec(g, start, path, visited, max_depth, out);
    return out;
}

// Independent binding enumeration: all terminal entities reachable through
// the relation sequence, walking raw triples.
inline void binding_oracle_rec(const KnowledgeGraph& g, const std::string& node,
                               const std::vector<std::string>& rels, size_t depth,
                               std::set<std::string>& out) {
    if (depth == rels.size()) {
        out.insert(node);
        return;
    }
    for (const auto& triple : g.triples()) {
        if (triple.subject == node && triple.relation == rels[depth]) {
            binding_oracle_rec(g, triple.object, rels, depth + 1, out);
        }
    }
}

inline std::set<std::string> binding_oracle(const KnowledgeGraph& g, const std::string& start,
                                            const std::vector<std::string>& rels) {
    std::set<std::string> out;
    binding_oracle_rec(g, start, rels, 0, out);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic two-hop world for end-to-end runs: landmark i -> person i -> city i,
// with a corpus sentence per hop.

struct SyntheticWorld {
    KnowledgeGraph graph;
    std::vector<CorpusDoc> docs;
};

inline SyntheticWorld synthetic_world(int n) {
    std::vector<Entity> entities;
    std::vector<Relation> relations{{"designed_by", "was designed by"},
                                    {"born_in", "was born in"}};
    std::vector<Triple> triples;
    std::vector<CorpusDoc> docs;
    for (int i = 0; i < n; ++i) {
        Entity landmark{"landmark" + std::to_string(i), "Landmark " + std::to_string(i),
                        "landmark", {}, test_image("landmark" + std::to_string(i))};
        Entity person{"person" + std::to_string(i), "Person " + std::to_string(i), "person",
                      {}, std::nullopt};
        Entity city{"city" + std::to_string(i), "City " + std::to_string(i), "city", {},
                    std::nullopt};
        triples.push_back({landmark.id, "designed_by", person.id});
        triples.push_back({person.id, "born_in", city.id});
        docs.push_back({"doc-arch-" + std::to_string(i), "architecture",
                        landmark.label + " was designed by " + person.label + "."});
        docs.push_back({"doc-bio-" + std::to_string(i), "biography",
                        person.label + " was born in " + city.label + "."});
        entities.push_back(std::move(landmark));
        entities.push_back(std::move(person));
        entities.push_back(std::move(city));
    }
    return {KnowledgeGraph(std::move(entities), std::move(relations), std::move(triples)),
            std::move(docs)};
}

// Policy that searches each evidence hop of its query, naming the depicted
// entity first, then hands off to the expert.
inline std::shared_ptr<ScriptedPolicy> oracle_policy(const MultimodalQuery& q) {
    std::vector<std::string> turns;
    for (size_t i = 0; i < q.evidence_hops.size(); ++i) {
        std::string reasoning =
            i == 0 ? "The image shows " + q.visual_entity + ". I will verify each fact."
                   : "Verifying the next hop.";
        turns.push_back(scripted_turn(reasoning, TextSearchCall{q.evidence_hops[i].claim}));
    }
    turns.push_back(
        scripted_turn("All facts are verified; asking the answer expert.", AnswerExpertCall{}));
    return std::make_shared<ScriptedPolicy>(std::move(turns));
}

// Policy that skips search entirely.
inline std::shared_ptr<ScriptedPolicy> lazy_policy(const MultimodalQuery&) {
    return std::make_shared<ScriptedPolicy>(std::vector<std::string>{
        scripted_turn("I will answer from memory without searching.", AnswerExpertCall{})});
}

}  // namespace mmseek::testing
