// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Run configuration: JSON file merged with environment overrides (the
// environment wins), validated in one pass that reports every bad field at
// once, and hashed into a canonical fingerprint for provenance. Every CLI
// run also writes a manifest so results can be replayed exactly.

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmseek/reward.hpp"
#include "mmseek/rollout.hpp"
#include "mmseek/tool_env.hpp"
#include "mmseek/util.hpp"

namespace mmseek {

struct ValidationError : Error {
    explicit ValidationError(std::vector<std::string> fields_in)
        : Error(join(fields_in)), fields(std::move(fields_in)) {}

    std::vector<std::string> fields;

    static std::string join(const std::vector<std::string>& fields) {
        std::string out = "config validation failed:";
        for (const auto& f : fields) out += "\n  - " + f;
        return out;
    }
};

struct PolicySection {
    std::string backend = "scripted";  // scripted | http
    std::string endpoint;
    std::string api_key;
    std::string model;
    std::string script_path;  // scripted backend: turn script file
};

struct JudgesSection {
    std::string backend = "stub";  // stub | http
    std::string endpoint;
    std::string api_key;
    std::string model;
    int unparseable_retries = 1;
    std::string rubric_version = kJudgeRubricVersion;
    std::string synonyms_path;  // stub backend: optional synonym table
    std::string corpus_snapshot_date;
};

struct ToolsSection {
    std::string image_backend = "mock";  // mock | external_api
    std::string text_backend = "mock";   // mock | local_corpus | web_api
    std::string expert_backend = "stub";  // stub | http
    int image_top_images = 1;
    int image_top_titles = 30;
    int text_top_k = 10;
    int first_stage_k = 100;
    std::string cache_dir = ".mmseek-cache";
    double image_rps = 0.0;
    double text_rps = 0.0;
    double expert_rps = 0.0;
    std::string expert_endpoint;
    std::string image_api_endpoint;
    std::string image_api_key;
    std::string text_api_endpoint;
    std::string text_api_key;
    std::string scorer_endpoint;    // retriever scorer (endpoint scorer backend)
    std::string reranker_endpoint;  // defaults to scorer_endpoint when empty
    std::string scorer_backend = "lexical";  // lexical | endpoint
    std::string image_fixtures;  // mock backend fixture file
    std::string text_fixtures;
    std::string corpus;  // local_corpus backend: file or directory
    int chunk_window = 1000;
    int chunk_overlap = 200;
    std::string image_presentation = "pixels_and_titles";  // or titles_only
    std::int64_t web_text_ttl_seconds = 7 * 24 * 3600;
    int retry_attempts = 3;
    int retry_backoff_ms = 50;
    std::string stub_expert_mode = "echo_last_chunk";  // or fixed
    std::string stub_expert_answer = "unknown";
};

struct GrpoSection {
    double clip_epsilon = 0.2;
    double kl_beta = 0.001;
    std::string tokenizer_spec;  // path; empty means byte tokenizer
};

struct DatasetSection {
    int max_depth = 4;
    int solver_attempts = 3;
    std::uint64_t seed = 0;
    std::string templates;  // path to the question template table
    std::string solver_backend = "stub";  // stub | http
    std::string solver_endpoint;
    std::string solver_stub_answer = "unknown";
};

struct EvalSection {
    int workers = 8;
    std::string run_name = "run";
};

struct RunConfig {
    RolloutConfig rollout;
    ToolsSection tools;
    PolicySection policy;
    JudgesSection judges;
    GrpoSection grpo;
    DatasetSection dataset;
    EvalSection eval;
};

// ---------------------------------------------------------------------------
// JSON binding

inline void from_json(const json& j, PolicySection& s) {
    s.backend = j.value("backend", s.backend);
    s.endpoint = j.value("endpoint", s.endpoint);
    s.api_key = j.value("api_key", s.api_key);
    s.model = j.value("model", s.model);
    s.script_path = j.value("script", s.script_path);
}

inline void from_json(const json& j, JudgesSection& s) {
    s.backend = j.value("backend", s.backend);
    s.endpoint = j.value("endpoint", s.endpoint);
    s.api_key = j.value("api_key", s.api_key);
    s.model = j.value("model", s.model);
    s.unparseable_retries = j.value("unparseable_retries", s.unparseable_retries);
    s.rubric_version = j.value("rubric_version", s.rubric_version);
    s.synonyms_path = j.value("synonyms", s.synonyms_path);
    s.corpus_snapshot_date = j.value("corpus_snapshot_date", s.corpus_snapshot_date);
}

inline void from_json(const json& j, ToolsSection& s) {
    s.image_backend = j.value("image_backend", s.image_backend);
    s.text_backend = j.value("text_backend", s.text_backend);
    s.expert_backend = j.value("expert_backend", s.expert_backend);
    s.image_top_images = j.value("image_top_images", s.image_top_images);
    s.image_top_titles = j.value("image_top_titles", s.image_top_titles);
    s.text_top_k = j.value("text_top_k", s.text_top_k);
    s.first_stage_k = j.value("first_stage_k", s.first_stage_k);
    s.cache_dir = j.value("cache_dir", s.cache_dir);
    s.image_rps = j.value("image_rps", s.image_rps);
    s.text_rps = j.value("text_rps", s.text_rps);
    s.expert_rps = j.value("expert_rps", s.expert_rps);
    s.expert_endpoint = j.value("expert_endpoint", s.expert_endpoint);
    s.image_api_endpoint = j.value("image_api_endpoint", s.image_api_endpoint);
    s.image_api_key = j.value("image_api_key", s.image_api_key);
    s.text_api_endpoint = j.value("text_api_endpoint", s.text_api_endpoint);
    s.text_api_key = j.value("text_api_key", s.text_api_key);
    s.scorer_endpoint = j.value("scorer_endpoint", s.scorer_endpoint);
    s.reranker_endpoint = j.value("reranker_endpoint", s.reranker_endpoint);
    s.scorer_backend = j.value("scorer_backend", s.scorer_backend);
    s.image_fixtures = j.value("image_fixtures", s.image_fixtures);
    s.text_fixtures = j.value("text_fixtures", s.text_fixtures);
    s.corpus = j.value("corpus", s.corpus);
    s.chunk_window = j.value("chunk_window", s.chunk_window);
    s.chunk_overlap = j.value("chunk_overlap", s.chunk_overlap);
    s.image_presentation = j.value("image_presentation", s.image_presentation);
    s.web_text_ttl_seconds = j.value("web_text_ttl_seconds", s.web_text_ttl_seconds);
    s.retry_attempts = j.value("retry_attempts", s.retry_attempts);
    s.retry_backoff_ms = j.value("retry_backoff_ms", s.retry_backoff_ms);
    s.stub_expert_mode = j.value("stub_expert_mode", s.stub_expert_mode);
    s.stub_expert_answer = j.value("stub_expert_answer", s.stub_expert_answer);
}

inline void from_json(const json& j, GrpoSection& s) {
    s.clip_epsilon = j.value("clip_epsilon", s.clip_epsilon);
    s.kl_beta = j.value("kl_beta", s.kl_beta);
    s.tokenizer_spec = j.value("tokenizer_spec", s.tokenizer_spec);
}

inline void from_json(const json& j, DatasetSection& s) {
    s.max_depth = j.value("max_depth", s.max_depth);
    s.solver_attempts = j.value("solver_attempts", s.solver_attempts);
    s.seed = j.value("seed", s.seed);
    s.templates = j.value("templates", s.templates);
    s.solver_backend = j.value("solver_backend", s.solver_backend);
    s.solver_endpoint = j.value("solver_endpoint", s.solver_endpoint);
    s.solver_stub_answer = j.value("solver_stub_answer", s.solver_stub_answer);
}

inline void from_json(const json& j, EvalSection& s) {
    s.workers = j.value("workers", s.workers);
    s.run_name = j.value("run_name", s.run_name);
}

inline void config_rollout_from_json(const json& j, RolloutConfig& s) {
    s.max_turns = j.value("max_turns", s.max_turns);
    s.system_prompt = j.value("system_prompt", s.system_prompt);
    s.group_size = j.value("group_size", s.group_size);
    s.temperature = j.value("temperature", s.temperature);
    s.turn_token_budget = j.value("turn_token_budget", s.turn_token_budget);
    s.workers = j.value("workers", s.workers);
}

// Effective config as canonical JSON; api keys are redacted to their digests
// so the fingerprint is stable without embedding secrets.
inline json config_to_json(const RunConfig& c, bool redact_secrets) {
    auto key = [&](const std::string& k) -> std::string {
        if (k.empty()) return "";
        return redact_secrets ? "sha256:" + sha256_hex(k).substr(0, 16) : k;
    };
    return json{
        {"rollout",
         {{"max_turns", c.rollout.max_turns},
          {"system_prompt", c.rollout.system_prompt},
          {"group_size", c.rollout.group_size},
          {"temperature", c.rollout.temperature},
          {"turn_token_budget", c.rollout.turn_token_budget},
          {"workers", c.rollout.workers}}},
        {"tools",
         {{"image_backend", c.tools.image_backend},
          {"text_backend", c.tools.text_backend},
          {"expert_backend", c.tools.expert_backend},
          {"image_top_images", c.tools.image_top_images},
          {"image_top_titles", c.tools.image_top_titles},
          {"text_top_k", c.tools.text_top_k},
          {"first_stage_k", c.tools.first_stage_k},
          {"cache_dir", c.tools.cache_dir},
          {"image_rps", c.tools.image_rps},
          {"text_rps", c.tools.text_rps},
          {"expert_rps", c.tools.expert_rps},
          {"expert_endpoint", c.tools.expert_endpoint},
          {"image_api_endpoint", c.tools.image_api_endpoint},
          {"image_api_key", key(c.tools.image_api_key)},
          {"text_api_endpoint", c.tools.text_api_endpoint},
          {"text_api_key", key(c.tools.text_api_key)},
          {"scorer_endpoint", c.tools.scorer_endpoint},
          {"reranker_endpoint", c.tools.reranker_endpoint},
          {"scorer_backend", c.tools.scorer_backend},
          {"image_fixtures", c.tools.image_fixtures},
          {"text_fixtures", c.tools.text_fixtures},
          {"corpus", c.tools.corpus},
          {"chunk_window", c.tools.chunk_window},
          {"chunk_overlap", c.tools.chunk_overlap},
          {"image_presentation", c.tools.image_presentation},
          {"web_text_ttl_seconds", c.tools.web_text_ttl_seconds},
          {"retry_attempts", c.tools.retry_attempts},
          {"retry_backoff_ms", c.tools.retry_backoff_ms},
          {"stub_expert_mode", c.tools.stub_expert_mode},
          {"stub_expert_answer", c.tools.stub_expert_answer}}},
        {"policy",
         {{"backend", c.policy.backend},
          {"endpoint", c.policy.endpoint},
          {"api_key", key(c.policy.api_key)},
          {"model", c.policy.model},
          {"script", c.policy.script_path}}},
        {"judges",
         {{"backend", c.judges.backend},
          {"endpoint", c.judges.endpoint},
          {"api_key", key(c.judges.api_key)},
          {"model", c.judges.model},
          {"unparseable_retries", c.judges.unparseable_retries},
          {"rubric_version", c.judges.rubric_version},
          {"synonyms", c.judges.synonyms_path},
          {"corpus_snapshot_date", c.judges.corpus_snapshot_date}}},
        {"grpo",
         {{"clip_epsilon", c.grpo.clip_epsilon},
          {"kl_beta", c.grpo.kl_beta},
          {"tokenizer_spec", c.grpo.tokenizer_spec}}},
        {"dataset",
         {{"max_depth", c.dataset.max_depth},
          {"solver_attempts", c.dataset.solver_attempts},
          {"seed", c.dataset.seed},
          {"templates", c.dataset.templates},
          {"solver_backend", c.dataset.solver_backend},
          {"solver_endpoint", c.dataset.solver_endpoint},
          {"solver_stub_answer", c.dataset.solver_stub_answer}}},
        {"eval", {{"workers", c.eval.workers}, {"run_name", c.eval.run_name}}}};
}

inline std::string config_fingerprint(const RunConfig& c) {
    return sha256_hex(config_to_json(c, /*redact_secrets=*/true).dump());
}

// ---------------------------------------------------------------------------
// Validation: every bad field reported at once.

namespace detail {

inline void check_one_of(std::vector<std::string>& errors, const std::string& field,
                         const std::string& value, std::initializer_list<const char*> allowed) {
    for (const char* a : allowed) {
        if (value == a) return;
    }
    std::string msg = field + ": '" + value + "' not one of {";
    bool first = true;
    for (const char* a : allowed) {
        if (!first) msg += ", ";
        msg += a;
        first = false;
    }
    errors.push_back(msg + "}");
}

}  // namespace detail

inline std::vector<std::string> validate_config(const RunConfig& c) {
    std::vector<std::string> errors;
    for (const auto& e : c.rollout.validate()) errors.push_back("rollout." + e);

    detail::check_one_of(errors, "tools.image_backend", c.tools.image_backend,
                         {"mock", "external_api"});
    detail::check_one_of(errors, "tools.text_backend", c.tools.text_backend,
                         {"mock", "local_corpus", "web_api"});
    detail::check_one_of(errors, "tools.expert_backend", c.tools.expert_backend,
                         {"stub", "http"});
    detail::check_one_of(errors, "tools.scorer_backend", c.tools.scorer_backend,
                         {"lexical", "endpoint"});
    detail::check_one_of(errors, "tools.image_presentation", c.tools.image_presentation,
                         {"pixels_and_titles", "titles_only"});
    detail::check_one_of(errors, "tools.stub_expert_mode", c.tools.stub_expert_mode,
                         {"echo_last_chunk", "fixed"});
    if (c.tools.image_top_images < 1) errors.push_back("tools.image_top_images: must be >= 1");
    if (c.tools.image_top_titles < 0) errors.push_back("tools.image_top_titles: must be >= 0");
    if (c.tools.text_top_k < 1) errors.push_back("tools.text_top_k: must be >= 1");
    if (c.tools.first_stage_k < c.tools.text_top_k) {
        errors.push_back("tools.first_stage_k: must be >= text_top_k");
    }
    if (c.tools.chunk_window <= 0) errors.push_back("tools.chunk_window: must be > 0");
    if (c.tools.chunk_overlap < 0 || c.tools.chunk_overlap >= c.tools.chunk_window) {
        errors.push_back("tools.chunk_overlap: must be in [0, chunk_window)");
    }
    if (c.tools.web_text_ttl_seconds < 0) {
        errors.push_back("tools.web_text_ttl_seconds: must be >= 0");
    }
    if (c.tools.retry_attempts < 1) errors.push_back("tools.retry_attempts: must be >= 1");
    if (c.tools.image_backend == "external_api" && c.tools.image_api_endpoint.empty()) {
        errors.push_back("tools.image_api_endpoint: required for the external_api backend");
    }
    if (c.tools.text_backend == "web_api" && c.tools.text_api_endpoint.empty()) {
        errors.push_back("tools.text_api_endpoint: required for the web_api backend");
    }
    if (c.tools.text_backend == "local_corpus" && c.tools.corpus.empty()) {
        errors.push_back("tools.corpus: required for the local_corpus backend");
    }
    if (c.tools.expert_backend == "http" && c.tools.expert_endpoint.empty()) {
        errors.push_back("tools.expert_endpoint: required for the http expert backend");
    }
    if (c.tools.scorer_backend == "endpoint" && c.tools.scorer_endpoint.empty()) {
        errors.push_back("tools.scorer_endpoint: required for the endpoint scorer backend");
    }

    detail::check_one_of(errors, "policy.backend", c.policy.backend, {"scripted", "http"});
    if (c.policy.backend == "http" && c.policy.endpoint.empty()) {
        errors.push_back("policy.endpoint: required for the http policy backend");
    }
    detail::check_one_of(errors, "judges.backend", c.judges.backend, {"stub", "http"});
    if (c.judges.backend == "http" && c.judges.endpoint.empty()) {
        errors.push_back("judges.endpoint: required for the http judge backend");
    }
    if (c.judges.unparseable_retries < 0) {
        errors.push_back("judges.unparseable_retries: must be >= 0");
    }

    if (c.grpo.clip_epsilon <= 0.0 || c.grpo.clip_epsilon >= 1.0) {
        errors.push_back("grpo.clip_epsilon: must be in (0, 1)");
    }
    if (c.grpo.kl_beta < 0.0) errors.push_back("grpo.kl_beta: must be >= 0");

    if (c.dataset.max_depth < 2) errors.push_back("dataset.max_depth: must be >= 2");
    if (c.dataset.solver_attempts < 1) errors.push_back("dataset.solver_attempts: must be >= 1");
    detail::check_one_of(errors, "dataset.solver_backend", c.dataset.solver_backend,
                         {"stub", "http"});
    if (c.dataset.solver_backend == "http" && c.dataset.solver_endpoint.empty()) {
        errors.push_back("dataset.solver_endpoint: required for the http solver backend");
    }

    if (c.eval.workers < 1) errors.push_back("eval.workers: must be >= 1");
    return errors;
}

// ---------------------------------------------------------------------------
// Loading

using EnvMap = std::map<std::string, std::string>;

inline EnvMap env_from_os() {
    EnvMap env;
    for (const char* name : {"POLICY_ENDPOINT", "POLICY_API_KEY", "EXPERT_ENDPOINT",
                             "JUDGE_ENDPOINT", "SCORER_ENDPOINT", "IMAGE_API_KEY",
                             "TEXT_API_KEY"}) {
        if (const char* v = std::getenv(name); v != nullptr && *v != '\0') env[name] = v;
    }
    return env;
}

inline void apply_env_overrides(RunConfig& c, const EnvMap& env) {
    auto get = [&env](const char* name) -> std::optional<std::string> {
        auto it = env.find(name);
        if (it == env.end()) return std::nullopt;
        return it->second;
    };
    if (auto v = get("POLICY_ENDPOINT")) c.policy.endpoint = *v;
    if (auto v = get("POLICY_API_KEY")) c.policy.api_key = *v;
    if (auto v = get("EXPERT_ENDPOINT")) c.tools.expert_endpoint = *v;
    if (auto v = get("JUDGE_ENDPOINT")) c.judges.endpoint = *v;
    if (auto v = get("SCORER_ENDPOINT")) c.tools.scorer_endpoint = *v;
    if (auto v = get("IMAGE_API_KEY")) c.tools.image_api_key = *v;
    if (auto v = get("TEXT_API_KEY")) c.tools.text_api_key = *v;
}

inline RunConfig load_config_json(const json& j, const EnvMap& env) {
    RunConfig c;
    if (j.contains("rollout")) config_rollout_from_json(j.at("rollout"), c.rollout);
    if (j.contains("tools")) j.at("tools").get_to(c.tools);
    if (j.contains("policy")) j.at("policy").get_to(c.policy);
    if (j.contains("judges")) j.at("judges").get_to(c.judges);
    if (j.contains("grpo")) j.at("grpo").get_to(c.grpo);
    if (j.contains("dataset")) j.at("dataset").get_to(c.dataset);
    if (j.contains("eval")) j.at("eval").get_to(c.eval);
    apply_env_overrides(c, env);
    auto errors = validate_config(c);
    if (!errors.empty()) throw ValidationError(std::move(errors));
    return c;
}

// File values merged with environment overrides (environment wins),
// validated as a whole. Throws ValidationError listing every bad field.
inline RunConfig load_config(const std::filesystem::path& path, const EnvMap& env) {
    json j = json::object();
    if (!path.empty()) j = json::parse(read_file(path));
    return load_config_json(j, env);
}

// ---------------------------------------------------------------------------
// Run manifest: enough to replay a run exactly.

inline void write_run_manifest(const std::filesystem::path& path, const std::string& command,
                               const RunConfig& cfg,
                               const std::map<std::string, std::string>& input_paths,
                               const std::vector<std::string>& outputs, const json& extra,
                               std::int64_t wall_time_ms) {
    json inputs = json::object();
    for (const auto& [label, p] : input_paths) {
        try {
            inputs[label] = json{{"path", p}, {"sha256", sha256_hex(read_file(p))}};
        } catch (const std::exception&) {
            inputs[label] = json{{"path", p}, {"sha256", nullptr}};
        }
    }
    const json manifest{{"command", command},
                        {"config_fingerprint", config_fingerprint(cfg)},
                        {"config", config_to_json(cfg, /*redact_secrets=*/true)},
                        {"inputs", inputs},
                        {"outputs", outputs},
                        {"extra", extra},
                        {"wall_time_ms", wall_time_ms},
                        {"written_at", iso8601_now()}};
    write_file(path, manifest.dump(2) + "\n");
}

}  // namespace mmseek
