// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-binary command line: rollout, reward, train-export, build-dataset,
// eval, tools (warm-cache / health) and cache (stats / clear). Exit codes:
// 0 success, 1 operational error, 2 usage error. Every run that produces an
// output writes a <out>.manifest.json recording config fingerprint, input
// digests, cache statistics and wall time.

#include <chrono>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmseek/config.hpp"
#include "mmseek/dataset.hpp"
#include "mmseek/eval.hpp"
#include "mmseek/grpo.hpp"
#include "mmseek/log.hpp"
#include "mmseek/reward.hpp"
#include "mmseek/rollout.hpp"
#include "mmseek/tool_env.hpp"

namespace mmseek::cli {

// ---------------------------------------------------------------------------
// Component wiring

struct JudgeBundle {
    std::vector<std::unique_ptr<ChatClient>> owned;
    JudgeSet set;
};

inline JudgeBundle build_judges(const RunConfig& cfg) {
    JudgeBundle bundle;
    JudgeConfig jc;
    jc.unparseable_retries = cfg.judges.unparseable_retries;
    jc.rubric_version = cfg.judges.rubric_version;
    jc.corpus_snapshot_date = cfg.judges.corpus_snapshot_date;
    if (cfg.judges.backend == "http") {
        bundle.owned.push_back(std::make_unique<HttpChatClient>(EndpointConfig{
            cfg.judges.endpoint, cfg.judges.api_key, cfg.judges.model}));
    } else {
        StubJudge::Options options;
        if (!cfg.judges.synonyms_path.empty()) {
            const json j = json::parse(read_file(cfg.judges.synonyms_path));
            for (const auto& [phrase, alts] : j.items()) {
                options.synonyms[phrase] = alts.get<std::vector<std::string>>();
            }
        }
        bundle.owned.push_back(std::make_unique<StubJudge>(std::move(options)));
    }
    bundle.set = make_judge_set(*bundle.owned.back(), jc);
    return bundle;
}

struct ToolEnvBundle {
    std::shared_ptr<const Corpus> corpus;
    std::vector<std::unique_ptr<ChatClient>> owned_clients;
    std::unique_ptr<ToolEnv> env;
};

inline ToolEnvConfig tool_env_config(const ToolsSection& t) {
    ToolEnvConfig cfg;
    cfg.image_backend =
        t.image_backend == "external_api" ? ImageBackendKind::external_api : ImageBackendKind::mock;
    cfg.text_backend = t.text_backend == "local_corpus" ? TextBackendKind::local_corpus
                       : t.text_backend == "web_api"    ? TextBackendKind::web_api
                                                        : TextBackendKind::mock;
    cfg.image_top_images = t.image_top_images;
    cfg.image_top_titles = t.image_top_titles;
    cfg.text_top_k = t.text_top_k;
    cfg.first_stage_k = t.first_stage_k;
    cfg.cache_dir = t.cache_dir;
    cfg.rate_limits = {t.image_rps, t.text_rps, t.expert_rps};
    cfg.expert_endpoint = t.expert_endpoint;
    cfg.image_presentation = t.image_presentation == "titles_only"
                                 ? ImagePresentation::titles_only
                                 : ImagePresentation::pixels_and_titles;
    cfg.web_text_ttl_seconds = t.web_text_ttl_seconds;
    cfg.retry_attempts = t.retry_attempts;
    cfg.retry_backoff_ms = t.retry_backoff_ms;
    return cfg;
}

inline ToolEnvBundle build_tool_env(const RunConfig& cfg) {
    ToolEnvBundle bundle;
    const ToolsSection& t = cfg.tools;

    std::unique_ptr<ImageBackend> image;
    if (t.image_backend == "external_api") {
        image = std::make_unique<HttpImageBackend>(
            EndpointConfig{t.image_api_endpoint, t.image_api_key});
    } else if (!t.image_fixtures.empty()) {
        image = MockImageBackend::from_file(t.image_fixtures);
    } else {
        image = std::make_unique<MockImageBackend>();
    }

    std::unique_ptr<TextBackend> text;
    if (t.text_backend == "local_corpus") {
        bundle.corpus = std::make_shared<const Corpus>(
            Corpus::load(t.corpus, ChunkingConfig{t.chunk_window, t.chunk_overlap}));
        std::shared_ptr<const Scorer> retriever;
        std::shared_ptr<const Scorer> reranker;
        if (t.scorer_backend == "endpoint") {
            auto retr_client = std::make_unique<HttpChatClient>(EndpointConfig{t.scorer_endpoint});
            auto rer_client = std::make_unique<HttpChatClient>(EndpointConfig{
                t.reranker_endpoint.empty() ? t.scorer_endpoint : t.reranker_endpoint});
            retriever = std::make_shared<EndpointScorer>(*retr_client, "endpoint_retriever");
            reranker = std::make_shared<EndpointScorer>(*rer_client, "endpoint_reranker");
            bundle.owned_clients.push_back(std::move(retr_client));
            bundle.owned_clients.push_back(std::move(rer_client));
        } else {
            retriever = std::make_shared<LexicalScorer>();
            reranker = std::make_shared<LexicalScorer>();
        }
        text = std::make_unique<LocalCorpusTextBackend>(bundle.corpus, retriever, reranker);
    } else if (t.text_backend == "web_api") {
        text = std::make_unique<WebTextBackend>(
            EndpointConfig{t.text_api_endpoint, t.text_api_key});
    } else if (!t.text_fixtures.empty()) {
        text = std::make_unique<MockTextBackend>(json::parse(read_file(t.text_fixtures)));
    } else {
        text = std::make_unique<MockTextBackend>();
    }

    std::unique_ptr<ExpertBackend> expert;
    if (t.expert_backend == "http") {
        expert = std::make_unique<HttpExpertBackend>(EndpointConfig{t.expert_endpoint});
    } else {
        expert = std::make_unique<StubExpertBackend>(
            t.stub_expert_mode == "fixed" ? StubExpertBackend::Mode::fixed
                                          : StubExpertBackend::Mode::echo_last_chunk,
            t.stub_expert_answer);
    }

    bundle.env = std::make_unique<ToolEnv>(tool_env_config(cfg.tools), std::move(image),
                                           std::move(text), std::move(expert));
    return bundle;
}

// Script file: {"default": ["<turn>", ...], "per_query": {"<query id>": [...]}}
inline PolicyFactory build_policy_factory(const RunConfig& cfg) {
    if (cfg.policy.backend == "http") {
        auto client = std::make_shared<HttpPolicyClient>(
            EndpointConfig{cfg.policy.endpoint, cfg.policy.api_key, cfg.policy.model});
        return [client](const MultimodalQuery&) { return client; };
    }
    auto per_query = std::make_shared<std::map<std::string, std::vector<std::string>>>();
    auto fallback = std::make_shared<std::vector<std::string>>();
    if (!cfg.policy.script_path.empty()) {
        const json j = json::parse(read_file(cfg.policy.script_path));
        *fallback = j.value("default", std::vector<std::string>{});
        const json per_query_json = j.value("per_query", json::object());
        for (const auto& [id, turns] : per_query_json.items()) {
            (*per_query)[id] = turns.get<std::vector<std::string>>();
        }
    }
    return [per_query, fallback](const MultimodalQuery& q) -> std::shared_ptr<PolicyClient> {
        auto it = per_query->find(q.id);
        return std::make_shared<ScriptedPolicy>(it != per_query->end() ? it->second : *fallback);
    };
}

// Fixed-answer chat stub; serves as the offline difficulty solver.
class FixedAnswerClient : public ChatClient {
public:
    explicit FixedAnswerClient(std::string answer) : answer_(std::move(answer)) {}
    std::string complete(const std::vector<Message>&, const SamplingParams&) override {
        return answer_;
    }

private:
    std::string answer_;
};

inline std::unique_ptr<ChatClient> build_solver(const RunConfig& cfg) {
    if (cfg.dataset.solver_backend == "http") {
        return std::make_unique<HttpChatClient>(EndpointConfig{cfg.dataset.solver_endpoint});
    }
    return std::make_unique<FixedAnswerClient>(cfg.dataset.solver_stub_answer);
}

// ---------------------------------------------------------------------------
// IO helpers

inline std::vector<MultimodalQuery> read_dataset(const std::filesystem::path& path) {
    std::vector<MultimodalQuery> out;
    for (const auto& j : read_jsonl(path)) {
        MultimodalQuery q = j.get<MultimodalQuery>();
        if (trim(q.question).empty()) {
            throw Error(path.string() + ": query '" + q.id + "' has an empty question");
        }
        out.push_back(std::move(q));
    }
    return out;
}

inline std::vector<Trajectory> read_trajectories(const std::filesystem::path& path) {
    std::vector<Trajectory> out;
    for (const auto& j : read_jsonl(path)) out.push_back(j.get<Trajectory>());
    return out;
}

class Stopwatch {
public:
    std::int64_t elapsed_ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// ---------------------------------------------------------------------------
// Subcommands

struct CommonArgs {
    std::string config_path;
};

inline RunConfig load_run_config(const CommonArgs& args) {
    return load_config(args.config_path, env_from_os());
}

inline int cmd_rollout(const CommonArgs& common, const std::string& dataset_path,
                       const std::string& policy_endpoint, int group_size, int max_turns,
                       const std::string& out_path) {
    Stopwatch watch;
    RunConfig cfg = load_run_config(common);
    if (!policy_endpoint.empty()) {
        cfg.policy.backend = "http";
        cfg.policy.endpoint = policy_endpoint;
    }
    if (group_size > 0) cfg.rollout.group_size = group_size;
    if (max_turns > 0) cfg.rollout.max_turns = max_turns;
    if (auto errors = validate_config(cfg); !errors.empty()) throw ValidationError(errors);

    const auto items = read_dataset(dataset_path);
    ToolEnvBundle tools = build_tool_env(cfg);
    PolicyFactory policy_factory = build_policy_factory(cfg);
    log_event("rollout.start", {{"items", items.size()}, {"group_size", cfg.rollout.group_size}});

    std::vector<json> lines;
    for (const auto& item : items) {
        auto policy = policy_factory(item);
        for (auto& trajectory : run_group(item, *policy, *tools.env, cfg.rollout)) {
            lines.emplace_back(trajectory);
        }
    }
    write_jsonl(out_path, lines);
    write_run_manifest(out_path + ".manifest.json", "rollout", cfg,
                       {{"dataset", dataset_path}}, {out_path},
                       json{{"env_stats", tools.env->stats()}, {"trajectories", lines.size()}},
                       watch.elapsed_ms());
    log_event("rollout.done", {{"trajectories", lines.size()}});
    return 0;
}

inline int cmd_reward(const CommonArgs& common, const std::string& trajectories_path,
                      const std::string& dataset_path, const std::string& judge_endpoint,
                      bool audit, const std::string& out_path) {
    Stopwatch watch;
    RunConfig cfg = load_run_config(common);
    if (!judge_endpoint.empty()) {
        cfg.judges.backend = "http";
        cfg.judges.endpoint = judge_endpoint;
    }
    if (auto errors = validate_config(cfg); !errors.empty()) throw ValidationError(errors);

    const auto items = read_dataset(dataset_path);
    std::map<std::string, const MultimodalQuery*> by_id;
    for (const auto& item : items) by_id[item.id] = &item;
    const auto trajectories = read_trajectories(trajectories_path);
    JudgeBundle judges = build_judges(cfg);

    std::vector<json> lines;
    for (const auto& t : trajectories) {
        json line{{"query_id", t.query_id}};
        if (t.terminated == Terminated::tool_failure) {
            line["env_fault"] = true;  // environment fault: excluded from reward groups
        } else {
            auto it = by_id.find(t.query_id);
            if (it == by_id.end()) throw Error("trajectory references unknown query: " + t.query_id);
            RewardBreakdown b = score(t, *it->second, judges.set);
            json jb = b;
            if (!audit) jb.erase("judge_transcripts");
            line.update(jb);
            line["env_fault"] = false;
        }
        lines.push_back(std::move(line));
    }
    write_jsonl(out_path, lines);
    write_run_manifest(out_path + ".manifest.json", "reward", cfg,
                       {{"trajectories", trajectories_path}, {"dataset", dataset_path}},
                       {out_path}, json{{"scored", lines.size()}}, watch.elapsed_ms());
    return 0;
}

inline int cmd_train_export(const CommonArgs& common, const std::string& trajectories_path,
                            const std::string& rewards_path, const std::string& tokenizer_path,
                            double clip_epsilon, double kl_beta, const std::string& out_path) {
    Stopwatch watch;
    RunConfig cfg = load_run_config(common);
    if (!tokenizer_path.empty()) cfg.grpo.tokenizer_spec = tokenizer_path;
    if (clip_epsilon > 0) cfg.grpo.clip_epsilon = clip_epsilon;
    if (kl_beta >= 0) cfg.grpo.kl_beta = kl_beta;
    if (auto errors = validate_config(cfg); !errors.empty()) throw ValidationError(errors);

    const auto trajectories = read_trajectories(trajectories_path);
    const auto reward_lines = read_jsonl(rewards_path);
    if (trajectories.size() != reward_lines.size()) {
        throw AlignmentError("trajectories and rewards differ in line count");
    }
    const json tokenizer_spec = cfg.grpo.tokenizer_spec.empty()
                                    ? json{{"type", "byte"}}
                                    : json::parse(read_file(cfg.grpo.tokenizer_spec));
    const auto tokenizer = load_tokenizer(tokenizer_spec);
    const ImagePresentation presentation =
        cfg.tools.image_presentation == "titles_only" ? ImagePresentation::titles_only
                                                      : ImagePresentation::pixels_and_titles;

    // Group by query id in order of first appearance; environment-faulted
    // rollouts carry no reward and are skipped.
    std::vector<std::string> group_order;
    std::map<std::string, std::pair<std::vector<TokenizedTrajectory>, std::vector<double>>> groups;
    for (size_t i = 0; i < trajectories.size(); ++i) {
        if (reward_lines[i].value("env_fault", false)) continue;
        const auto& t = trajectories[i];
        if (!groups.count(t.query_id)) group_order.push_back(t.query_id);
        auto& [members, rewards] = groups[t.query_id];
        members.push_back(build_loss_mask(t, *tokenizer, presentation));
        rewards.push_back(reward_lines[i].value("total", 0.0));
    }
    std::vector<GroupBatch> batches;
    for (const auto& id : group_order) {
        auto& [members, rewards] = groups[id];
        batches.push_back(make_group_batch(id, std::move(members), std::move(rewards),
                                           cfg.grpo.clip_epsilon, cfg.grpo.kl_beta));
    }
    export_batches(batches, out_path, tokenizer_spec);
    write_run_manifest(out_path + ".manifest.json", "train-export", cfg,
                       {{"trajectories", trajectories_path}, {"rewards", rewards_path}},
                       {out_path}, json{{"groups", batches.size()}}, watch.elapsed_ms());
    return 0;
}

inline int cmd_build_dataset(const CommonArgs& common, const std::string& graph_path,
                             const std::string& entities_path, const std::string& corpus_path,
                             const std::string& solver_endpoint,
                             const std::string& judge_endpoint, std::uint64_t seed,
                             const std::string& templates_path, const std::string& out_path) {
    Stopwatch watch;
    RunConfig cfg = load_run_config(common);
    cfg.tools.text_backend = "local_corpus";
    cfg.tools.corpus = corpus_path;
    if (!solver_endpoint.empty()) {
        cfg.dataset.solver_backend = "http";
        cfg.dataset.solver_endpoint = solver_endpoint;
    }
    if (!judge_endpoint.empty()) {
        cfg.judges.backend = "http";
        cfg.judges.endpoint = judge_endpoint;
    }
    if (!templates_path.empty()) cfg.dataset.templates = templates_path;
    cfg.dataset.seed = seed;
    if (auto errors = validate_config(cfg); !errors.empty()) throw ValidationError(errors);

    const KnowledgeGraph graph = load_graph(graph_path, entities_path);
    ToolEnvBundle tools = build_tool_env(cfg);
    JudgeBundle judges = build_judges(cfg);
    auto solver = build_solver(cfg);

    ForgeConfig forge_cfg;
    forge_cfg.max_depth = cfg.dataset.max_depth;
    forge_cfg.solver_attempts = cfg.dataset.solver_attempts;
    forge_cfg.seed = cfg.dataset.seed;
    if (!cfg.dataset.templates.empty()) {
        forge_cfg.templates = QuestionTemplates::from_json(json::parse(read_file(cfg.dataset.templates)));
    }

    ForgeReport report;
    const auto dataset =
        build_dataset(graph, *tools.env, *solver, judges.set, forge_cfg, &report);
    std::vector<json> lines;
    for (const auto& q : dataset) lines.emplace_back(q);
    write_jsonl(out_path, lines);
    write_run_manifest(out_path + ".manifest.json", "build-dataset", cfg,
                       {{"graph", graph_path}, {"entities", entities_path}}, {out_path},
                       json{{"report", report}}, watch.elapsed_ms());
    log_event("forge.done", {{"report", json(report)}});
    return 0;
}

inline int cmd_eval(const CommonArgs& common, const std::string& dataset_path,
                    const std::string& out_path, const std::string& csv_path,
                    const std::string& trajectories_out) {
    Stopwatch watch;
    RunConfig cfg = load_run_config(common);
    const auto items = read_dataset(dataset_path);
    ToolEnvBundle tools = build_tool_env(cfg);
    JudgeBundle judges = build_judges(cfg);
    PolicyFactory policy_factory = build_policy_factory(cfg);

    std::vector<Trajectory> trajectories;
    EvalReport report = evaluate(items, policy_factory, *tools.env, judges.set, cfg.rollout,
                                 cfg.eval.workers, &trajectories);
    const ToolUsageStats usage = tool_usage_stats(trajectories);
    const RetrievalScores retrieval = retrieval_scores(trajectories, items, judges.set);

    json out = report;
    out["tool_usage"] = usage;
    out["retrieval"] = retrieval;
    out["run_name"] = cfg.eval.run_name;
    out["dataset"] = dataset_path;
    out["config_fingerprint"] = config_fingerprint(cfg);
    out["prompt_sha256"] = sha256_hex(cfg.rollout.system_prompt);
    out["judge_rubric_version"] = cfg.judges.rubric_version;
    out["text_top_k"] = cfg.tools.text_top_k;
    out["image_top_titles"] = cfg.tools.image_top_titles;
    out["wall_time_ms"] = watch.elapsed_ms();
    write_file(out_path, out.dump(2) + "\n");

    if (!csv_path.empty()) {
        std::string csv = "run,dataset,slice,n,correct,accuracy,wilson_low,wilson_high\n";
        auto row = [&](const std::string& slice, const AccuracyStat& s) {
            const auto w = s.wilson();
            csv += cfg.eval.run_name + "," + dataset_path + "," + slice + "," +
                   std::to_string(s.total) + "," + std::to_string(s.correct) + "," +
                   std::to_string(s.accuracy()) + "," + std::to_string(w.low) + "," +
                   std::to_string(w.high) + "\n";
        };
        row("overall", report.overall);
        for (const auto& [name, stat] : report.per_difficulty) row("difficulty=" + name, stat);
        for (const auto& [hops, stat] : report.per_hop) {
            row("hops=" + std::to_string(hops), stat);
        }
        write_file(csv_path, csv);
    }
    if (!trajectories_out.empty()) {
        std::vector<json> lines;
        for (const auto& t : trajectories) lines.emplace_back(t);
        write_jsonl(trajectories_out, lines);
    }
    write_run_manifest(out_path + ".manifest.json", "eval", cfg, {{"dataset", dataset_path}},
                       {out_path},
                       json{{"env_stats", tools.env->stats()},
                            {"accuracy", report.overall.accuracy()}},
                       watch.elapsed_ms());
    return 0;
}

inline int cmd_tools_health(const CommonArgs& common) {
    RunConfig cfg = load_run_config(common);
    ToolEnvBundle tools = build_tool_env(cfg);
    bool all_healthy = true;
    json statuses = json::array();
    for (const auto& status : tools.env->health_check()) {
        statuses.push_back(status);
        all_healthy = all_healthy && status.healthy;
    }
    std::cout << statuses.dump(2) << "\n";
    return all_healthy ? 0 : 1;
}

inline int cmd_tools_warm_cache(const CommonArgs& common, const std::string& dataset_path,
                                bool with_hop_queries) {
    Stopwatch watch;
    RunConfig cfg = load_run_config(common);
    const auto items = read_dataset(dataset_path);
    ToolEnvBundle tools = build_tool_env(cfg);
    size_t image_warmed = 0, text_warmed = 0;
    for (const auto& item : items) {
        tools.env->image_search(item.image);
        ++image_warmed;
        if (with_hop_queries) {
            for (const auto& hop : item.evidence_hops) {
                tools.env->text_search(hop.claim);
                ++text_warmed;
            }
        }
    }
    const json extra{{"image_warmed", image_warmed},
                     {"text_warmed", text_warmed},
                     {"env_stats", tools.env->stats()}};
    std::cout << extra.dump(2) << "\n";
    write_run_manifest(cfg.tools.cache_dir + "/warm-cache.manifest.json", "tools warm-cache",
                       cfg, {{"dataset", dataset_path}}, {}, extra, watch.elapsed_ms());
    return 0;
}

inline int cmd_cache_stats(const CommonArgs& common) {
    RunConfig cfg = load_run_config(common);
    DiskCache cache{cfg.tools.cache_dir};
    const json out{{"cache_dir", cfg.tools.cache_dir},
                   {"entries", cache.entry_count()},
                   {"bytes", cache.total_bytes()}};
    std::cout << out.dump(2) << "\n";
    return 0;
}

inline int cmd_cache_clear(const CommonArgs& common) {
    RunConfig cfg = load_run_config(common);
    DiskCache cache{cfg.tools.cache_dir};
    const auto entries = cache.entry_count();
    cache.clear();
    std::cout << json{{"cleared_entries", entries}}.dump() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv) {
    CLI::App app{"mmseek: decoupled multimodal search agent runtime"};
    app.require_subcommand(1);
    CommonArgs common;
    app.add_option("--config", common.config_path, "run configuration JSON file");

    // rollout
    auto* rollout_cmd = app.add_subcommand("rollout", "run grouped rollouts over a dataset");
    std::string dataset_path, out_path, policy_endpoint;
    int group_size = 0, max_turns = 0;
    rollout_cmd->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    rollout_cmd->add_option("--policy-endpoint", policy_endpoint, "policy chat endpoint URL");
    rollout_cmd->add_option("--group-size", group_size, "rollouts per query (G)");
    rollout_cmd->add_option("--max-turns", max_turns, "turn budget per rollout");
    rollout_cmd->add_option("--out", out_path, "output trajectories JSONL")->required();

    // reward
    auto* reward_cmd = app.add_subcommand("reward", "score trajectories");
    std::string trajectories_path, reward_dataset, judge_endpoint, reward_out;
    bool audit = false;
    reward_cmd->add_option("--trajectories", trajectories_path, "trajectories JSONL")->required();
    reward_cmd->add_option("--dataset", reward_dataset, "dataset JSONL")->required();
    reward_cmd->add_option("--judge-endpoint", judge_endpoint, "judge chat endpoint URL");
    reward_cmd->add_flag("--audit", audit, "include judge transcripts in the output");
    reward_cmd->add_option("--out", reward_out, "output rewards JSONL")->required();

    // train-export
    auto* export_cmd = app.add_subcommand("train-export", "export GRPO group batches");
    std::string export_trajectories, rewards_path, tokenizer_path, export_out;
    double clip_epsilon = 0.0, kl_beta = -1.0;
    export_cmd->add_option("--trajectories", export_trajectories, "trajectories JSONL")->required();
    export_cmd->add_option("--rewards", rewards_path, "rewards JSONL")->required();
    export_cmd->add_option("--tokenizer-spec", tokenizer_path, "tokenizer spec JSON");
    export_cmd->add_option("--clip-epsilon", clip_epsilon, "PPO-style clip range");
    export_cmd->add_option("--kl-beta", kl_beta, "KL penalty weight");
    export_cmd->add_option("--out", export_out, "output batches JSONL")->required();

    // build-dataset
    auto* forge_cmd = app.add_subcommand("build-dataset", "construct a multi-hop VQA dataset");
    std::string graph_path, entities_path, corpus_path, solver_endpoint, forge_judge_endpoint,
        templates_path, forge_out;
    std::uint64_t seed = 0;
    forge_cmd->add_option("--graph", graph_path, "triples JSONL")->required();
    forge_cmd->add_option("--entities", entities_path, "entities/relations JSONL")->required();
    forge_cmd->add_option("--corpus", corpus_path, "corpus file or directory")->required();
    forge_cmd->add_option("--solver-endpoint", solver_endpoint, "difficulty solver endpoint");
    forge_cmd->add_option("--judge-endpoint", forge_judge_endpoint, "validation judge endpoint");
    forge_cmd->add_option("--seed", seed, "downsampling seed");
    forge_cmd->add_option("--templates", templates_path, "question template table JSON");
    forge_cmd->add_option("--out", forge_out, "output dataset JSONL")->required();

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run the evaluation harness");
    std::string eval_dataset, eval_out, csv_path, eval_trajectories_out;
    eval_cmd->add_option("--dataset", eval_dataset, "dataset JSONL")->required();
    eval_cmd->add_option("--out", eval_out, "report JSON")->required();
    eval_cmd->add_option("--csv", csv_path, "optional CSV table export");
    eval_cmd->add_option("--trajectories-out", eval_trajectories_out,
                         "optional trajectories JSONL");

    // tools
    auto* tools_cmd = app.add_subcommand("tools", "tool environment utilities");
    tools_cmd->require_subcommand(1);
    auto* health_cmd = tools_cmd->add_subcommand("health", "probe backend health");
    auto* warm_cmd = tools_cmd->add_subcommand("warm-cache", "pre-populate the tool cache");
    std::string warm_dataset;
    bool with_hop_queries = false;
    warm_cmd->add_option("--dataset", warm_dataset, "dataset JSONL")->required();
    warm_cmd->add_flag("--with-hop-queries", with_hop_queries,
                       "also warm text searches for evidence claims");

    // cache
    auto* cache_cmd = app.add_subcommand("cache", "cache maintenance");
    cache_cmd->require_subcommand(1);
    auto* stats_cmd = cache_cmd->add_subcommand("stats", "print cache statistics");
    auto* clear_cmd = cache_cmd->add_subcommand("clear", "delete all cache entries");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);  // prints help, exit 0
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (rollout_cmd->parsed()) {
            return cmd_rollout(common, dataset_path, policy_endpoint, group_size, max_turns,
                               out_path);
        }
        if (reward_cmd->parsed()) {
            return cmd_reward(common, trajectories_path, reward_dataset, judge_endpoint, audit,
                              reward_out);
        }
        if (export_cmd->parsed()) {
            return cmd_train_export(common, export_trajectories, rewards_path, tokenizer_path,
                                    clip_epsilon, kl_beta, export_out);
        }
        if (forge_cmd->parsed()) {
            return cmd_build_dataset(common, graph_path, entities_path, corpus_path,
                                     solver_endpoint, forge_judge_endpoint, seed, templates_path,
                                     forge_out);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(common, eval_dataset, eval_out, csv_path, eval_trajectories_out);
        }
        if (tools_cmd->parsed()) {
            if (health_cmd->parsed()) return cmd_tools_health(common);
            if (warm_cmd->parsed()) return cmd_tools_warm_cache(common, warm_dataset,
                                                                with_hop_queries);
        }
        if (cache_cmd->parsed()) {
            if (stats_cmd->parsed()) return cmd_cache_stats(common);
            if (clear_cmd->parsed()) return cmd_cache_clear(common);
        }
    } catch (const std::exception& e) {
        log_event("error", {{"message", e.what()}});
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace mmseek::cli
