// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// The shared tool environment: an image search tool, a text search tool and
// an answer expert behind one facade, with disk caching, per-backend token
// bucket rate limiting, bounded retries and single-flight de-duplication.
// Safe for concurrent calls from many rollout workers; mock backends are
// pure functions of the normalized request.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mmseek/cache.hpp"
#include "mmseek/chat.hpp"
#include "mmseek/concurrency.hpp"
#include "mmseek/core.hpp"
#include "mmseek/corpus.hpp"
#include "mmseek/http.hpp"
#include "mmseek/render.hpp"

namespace mmseek {

enum class ImageBackendKind { external_api, mock };
enum class TextBackendKind { local_corpus, web_api, mock };
enum class ExpertBackendKind { http, stub };

struct RateLimits {
    double image_rps = 0.0;   // <= 0 disables limiting
    double text_rps = 0.0;
    double expert_rps = 0.0;
};

struct ToolEnvConfig {
    ImageBackendKind image_backend = ImageBackendKind::mock;
    TextBackendKind text_backend = TextBackendKind::mock;
    int image_top_images = 1;
    int image_top_titles = 30;
    int text_top_k = 10;
    int first_stage_k = 100;
    std::filesystem::path cache_dir = ".mmseek-cache";
    RateLimits rate_limits;
    std::string expert_endpoint;
    ImagePresentation image_presentation = ImagePresentation::pixels_and_titles;
    std::int64_t web_text_ttl_seconds = 7 * 24 * 3600;  // web content drifts
    int retry_attempts = 3;
    int retry_backoff_ms = 50;

    std::vector<std::string> validate() const {
        std::vector<std::string> errors;
        if (image_top_images < 1) errors.push_back("image_top_images: must be >= 1");
        if (image_top_titles < 0) errors.push_back("image_top_titles: must be >= 0");
        if (text_top_k < 1) errors.push_back("text_top_k: must be >= 1");
        if (first_stage_k < text_top_k) errors.push_back("first_stage_k: must be >= text_top_k");
        if (retry_attempts < 1) errors.push_back("retry_attempts: must be >= 1");
        if (web_text_ttl_seconds < 0) errors.push_back("web_text_ttl_seconds: must be >= 0");
        return errors;
    }
};

// ---------------------------------------------------------------------------
// Backends. search() returns raw, untruncated results; the facade truncates
// on serve so cached entries survive cap changes.

class ImageBackend {
public:
    virtual ~ImageBackend() = default;
    virtual ImageResult search(const ImageRef& image) = 0;
    virtual void probe() = 0;  // throws when unreachable
    virtual std::string name() const = 0;
};

class TextBackend {
public:
    virtual ~TextBackend() = default;
    virtual std::vector<TextChunk> search(const std::string& query, int first_stage_k,
                                          int top_k) = 0;
    virtual void probe() = 0;
    virtual std::string name() const = 0;
    // Part of the cache key; non-empty when results depend on local state.
    virtual std::string state_fingerprint() const { return ""; }
};

class ExpertBackend {
public:
    virtual ~ExpertBackend() = default;
    virtual AnswerResult answer(const MultimodalQuery& query,
                                const std::vector<TrajectoryStep>& history,
                                const std::string& pending_reasoning) = 0;
    virtual void probe() = 0;
    virtual std::string name() const = 0;
};

// Deterministic image backend: fixture table keyed by content hash (or uri),
// with an optional synthesized result for unknown images. Pure function of
// the request.
class MockImageBackend : public ImageBackend {
public:
    explicit MockImageBackend(json fixtures = json::object(), bool synthesize_missing = true)
        : fixtures_(std::move(fixtures)), synthesize_missing_(synthesize_missing) {}

    static std::unique_ptr<MockImageBackend> from_file(const std::filesystem::path& path) {
        const json j = json::parse(read_file(path));
        return std::make_unique<MockImageBackend>(j.value("fixtures", json::object()),
                                                  j.value("synthesize_missing", true));
    }

    ImageResult search(const ImageRef& image) override {
        ++calls_;
        const json* fx = nullptr;
        if (auto it = fixtures_.find(image.content_hash); it != fixtures_.end()) {
            fx = &*it;
        } else if (auto it2 = fixtures_.find(image.uri); it2 != fixtures_.end()) {
            fx = &*it2;
        }
        if (fx != nullptr) {
            ImageResult out;
            out.images = fx->value("images", std::vector<ImageRef>{});
            out.titles = fx->value("titles", std::vector<TitleEntry>{});
            return out;
        }
        if (!synthesize_missing_) throw InvalidImage("no fixture for image: " + image.uri);
        return synthesize(image.content_hash);
    }

    void probe() override {}
    std::string name() const override { return "mock_image"; }
    std::uint64_t call_count() const { return calls_.load(); }

    // Oversized on purpose (2 images, 40 titles) so truncation caps apply.
    static ImageResult synthesize(const std::string& content_hash) {
        const std::string tag = content_hash.substr(0, std::min<size_t>(12, content_hash.size()));
        ImageResult out;
        for (int i = 0; i < 2; ++i) {
            out.images.push_back({"mock-image://" + tag + "/" + std::to_string(i),
                                  sha256_hex(tag + "#img" + std::to_string(i)), "image/png"});
        }
        for (int i = 0; i < 40; ++i) {
            out.titles.push_back({"mock title " + std::to_string(i) + " for " + tag,
                                  "https://mock.example/" + tag + "/" + std::to_string(i)});
        }
        return out;
    }

private:
    json fixtures_;
    bool synthesize_missing_;
    std::atomic<std::uint64_t> calls_{0};
};

// Thin adapter over a reverse-image-search HTTP API:
// request {"image_uri","image_hash"}; response {"images":[...],"titles":[...]}.
class HttpImageBackend : public ImageBackend {
public:
    explicit HttpImageBackend(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

    ImageResult search(const ImageRef& image) override {
        const json resp = post_json(
            cfg_, "/search", json{{"image_uri", image.uri}, {"image_hash", image.content_hash}});
        ImageResult out;
        out.images = resp.value("images", std::vector<ImageRef>{});
        out.titles = resp.value("titles", std::vector<TitleEntry>{});
        return out;
    }

    void probe() override {
        post_json(cfg_, "/search",
                  json{{"image_uri", "probe://canary"}, {"image_hash", sha256_hex("canary")}});
    }
    std::string name() const override { return "http_image"; }

private:
    EndpointConfig cfg_;
};

// Retrieval-rerank text search over a local corpus.
class LocalCorpusTextBackend : public TextBackend {
public:
    LocalCorpusTextBackend(std::shared_ptr<const Corpus> corpus,
                           std::shared_ptr<const Scorer> retriever,
                           std::shared_ptr<const Scorer> reranker)
        : corpus_(std::move(corpus)),
          retriever_(std::move(retriever)),
          reranker_(std::move(reranker)) {}

    std::vector<TextChunk> search(const std::string& query, int first_stage_k,
                                  int top_k) override {
        return corpus_->search(query, *retriever_, *reranker_, first_stage_k, top_k);
    }

    void probe() override {
        if (corpus_->empty()) throw EmptyCorpus("corpus has no documents");
    }
    std::string name() const override { return "local_corpus"; }
    std::string state_fingerprint() const override {
        return corpus_->fingerprint() + "/" + retriever_->name() + "/" + reranker_->name();
    }

private:
    std::shared_ptr<const Corpus> corpus_;
    std::shared_ptr<const Scorer> retriever_;
    std::shared_ptr<const Scorer> reranker_;
};

// Deterministic text backend for tests: fixtures keyed by normalized query,
// synthesized passages otherwise.
class MockTextBackend : public TextBackend {
public:
    explicit MockTextBackend(json fixtures = json::object(), bool synthesize_missing = true)
        : fixtures_(std::move(fixtures)), synthesize_missing_(synthesize_missing) {}

    std::vector<TextChunk> search(const std::string& query, int /*first_stage_k*/,
                                  int top_k) override {
        ++calls_;
        const std::string key = normalize_text(query);
        if (auto it = fixtures_.find(key); it != fixtures_.end()) {
            auto chunks = it->value("chunks", std::vector<TextChunk>{});
            if (chunks.size() > static_cast<size_t>(top_k)) chunks.resize(top_k);
            return chunks;
        }
        if (!synthesize_missing_) return {};
        std::vector<TextChunk> out;
        const std::string tag = sha256_hex(key).substr(0, 8);
        for (int i = 0; i < top_k; ++i) {
            out.push_back({"synthetic passage " + std::to_string(i) + " about " + key,
                           "mock-" + tag, i * 100, 1.0 - 0.01 * i});
        }
        return out;
    }

    void probe() override {}
    std::string name() const override { return "mock_text"; }
    std::uint64_t call_count() const { return calls_.load(); }

private:
    json fixtures_;
    bool synthesize_missing_;
    std::atomic<std::uint64_t> calls_{0};
};

// External web search adapter: request {"q","k"}; response
// {"results":[{"text","source_id","score"}]}.
class WebTextBackend : public TextBackend {
public:
    explicit WebTextBackend(EndpointConfig cfg) : cfg_(std::move(cfg)) {}

    std::vector<TextChunk> search(const std::string& query, int /*first_stage_k*/,
                                  int top_k) override {
        const json resp = post_json(cfg_, "/search", json{{"q", query}, {"k", top_k}});
        std::vector<TextChunk> out;
        std::int64_t pos = 0;
        for (const auto& r : resp.value("results", json::array())) {
            out.push_back({r.value("text", ""), r.value("source_id", ""),
                           r.value("offset", pos), r.value("score", 0.0)});
            ++pos;
            if (out.size() >= static_cast<size_t>(top_k)) break;
        }
        return out;
    }

    void probe() override { post_json(cfg_, "/search", json{{"q", "probe"}, {"k", 1}}); }
    std::string name() const override { return "web_text"; }

private:
    EndpointConfig cfg_;
};

namespace detail {

// The expert never receives the raw image; visual content reaches it only as
// the agent's own textual descriptions, which keeps the generator
// modality-agnostic.
inline std::vector<Message> expert_messages(const MultimodalQuery& query,
                                            const std::vector<TrajectoryStep>& history,
                                            const std::string& pending_reasoning) {
    std::string body = "Question: " + query.question + "\n\n";
    body += "Information-seeking history:\n";
    for (const auto& step : history) {
        body += "Think: " + step.reasoning + "\n";
        body += "Information: " + render_tool_payload(step.tool_response.payload) + "\n";
    }
    if (!pending_reasoning.empty()) body += "Think: " + pending_reasoning + "\n";
    return {Message::system(
                "You are the answer generator. Using only the question and the gathered "
                "information-seeking history, reason over the evidence and reply with the "
                "final answer, as concisely as possible."),
            Message::user(body)};
}

}  // namespace detail

class HttpExpertBackend : public ExpertBackend {
public:
    explicit HttpExpertBackend(EndpointConfig cfg) : client_(std::move(cfg)) {}

    AnswerResult answer(const MultimodalQuery& query,
                        const std::vector<TrajectoryStep>& history,
                        const std::string& pending_reasoning) override {
        const std::string text = client_.complete(
            detail::expert_messages(query, history, pending_reasoning), SamplingParams{0.0, 512});
        if (trim(text).empty()) throw BackendUnavailable("expert returned an empty response");
        return AnswerResult{text};
    }

    void probe() override {
        client_.complete({Message::user("Reply with the single word: ok")},
                         SamplingParams{0.0, 8});
    }
    std::string name() const override { return "http_expert"; }

private:
    HttpChatClient client_;
};

// Deterministic expert for tests and offline runs.
class StubExpertBackend : public ExpertBackend {
public:
    enum class Mode { echo_last_chunk, fixed };

    explicit StubExpertBackend(Mode mode = Mode::echo_last_chunk, std::string fixed_answer = "unknown")
        : mode_(mode), fixed_answer_(std::move(fixed_answer)) {}

    AnswerResult answer(const MultimodalQuery& /*query*/,
                        const std::vector<TrajectoryStep>& history,
                        const std::string& /*pending_reasoning*/) override {
        if (mode_ == Mode::fixed) return AnswerResult{fixed_answer_};
        for (auto it = history.rbegin(); it != history.rend(); ++it) {
            if (const auto* tr = std::get_if<TextResult>(&it->tool_response.payload)) {
                if (!tr->chunks.empty()) return AnswerResult{tr->chunks.front().text};
            }
        }
        return AnswerResult{fixed_answer_};
    }

    void probe() override {}
    std::string name() const override { return "stub_expert"; }

private:
    Mode mode_;
    std::string fixed_answer_;
};

// ---------------------------------------------------------------------------
// Facade

struct BackendStatus {
    std::string tool;     // image_search / text_search / answer_expert
    std::string backend;  // backend name
    bool healthy = false;
    std::int64_t latency_ms = 0;
    std::string error;
};

inline void to_json(json& j, const BackendStatus& s) {
    j = json{{"tool", s.tool},
             {"backend", s.backend},
             {"healthy", s.healthy},
             {"latency_ms", s.latency_ms},
             {"error", s.error}};
}

struct EnvStats {
    std::uint64_t image_backend_calls = 0;
    std::uint64_t text_backend_calls = 0;
    std::uint64_t expert_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
};

inline void to_json(json& j, const EnvStats& s) {
    j = json{{"image_backend_calls", s.image_backend_calls},
             {"text_backend_calls", s.text_backend_calls},
             {"expert_calls", s.expert_calls},
             {"cache_hits", s.cache_hits},
             {"cache_misses", s.cache_misses}};
}

class ToolEnv {
public:
    ToolEnv(ToolEnvConfig cfg, std::unique_ptr<ImageBackend> image,
            std::unique_ptr<TextBackend> text, std::unique_ptr<ExpertBackend> expert)
        : cfg_(std::move(cfg)),
          image_(std::move(image)),
          text_(std::move(text)),
          expert_(std::move(expert)),
          cache_(cfg_.cache_dir),
          image_limiter_(cfg_.rate_limits.image_rps),
          text_limiter_(cfg_.rate_limits.text_rps),
          expert_limiter_(cfg_.rate_limits.expert_rps) {}

    const ToolEnvConfig& config() const { return cfg_; }
    const DiskCache& cache() const { return cache_; }

    // Fills in the content hash of an image handle: explicit hash wins, then
    // a digest of the file bytes, then a digest of the uri itself.
    ImageRef resolve_image(const ImageRef& ref) const {
        ImageRef out = ref;
        if (!out.content_hash.empty()) return out;
        std::error_code ec;
        if (!out.uri.empty() && std::filesystem::is_regular_file(out.uri, ec)) {
            try {
                out.content_hash = sha256_hex(read_file(out.uri));
            } catch (const IoError& e) {
                throw InvalidImage(std::string("unreadable image file: ") + e.what());
            }
        } else if (!out.uri.empty()) {
            out.content_hash = sha256_hex("uri:" + out.uri);
        } else {
            throw InvalidImage("image reference has neither uri nor content hash");
        }
        return out;
    }

    // Reverse image search. Cached permanently by content hash; the cap
    // truncation (top images / top titles) happens on serve.
    ToolResponse image_search(const ImageRef& image) {
        const ImageRef resolved = resolve_image(image);
        const std::string key =
            sha256_hex("image_search\x1f" + image_->name() + "\x1f" + resolved.content_hash);
        CachedFetch fetched = fetch_cached("image", key, /*ttl=*/0, [&] {
            image_limiter_.acquire();
            ++image_calls_;
            return with_retries<ImageResult>([&] { return image_->search(resolved); });
        });
        ToolResponse out;
        ImageResult ir = std::get<ImageResult>(fetched.payload);
        if (ir.images.size() > static_cast<size_t>(cfg_.image_top_images)) {
            ir.images.resize(cfg_.image_top_images);
        }
        if (ir.titles.size() > static_cast<size_t>(cfg_.image_top_titles)) {
            ir.titles.resize(cfg_.image_top_titles);
        }
        out.payload = std::move(ir);
        out.cache_hit = fetched.cache_hit;
        out.latency_ms = fetched.latency_ms;
        return out;
    }

    ToolResponse text_search(const std::string& query) {
        if (trim(query).empty()) throw Error("text_search: empty query");
        const std::string key = sha256_hex(
            "text_search\x1f" + text_->name() + "\x1f" + text_->state_fingerprint() + "\x1f" +
            normalize_text(query) + "\x1f" + std::to_string(cfg_.first_stage_k) + "\x1f" +
            std::to_string(cfg_.text_top_k));
        const std::int64_t ttl =
            cfg_.text_backend == TextBackendKind::web_api ? cfg_.web_text_ttl_seconds : 0;
        CachedFetch fetched = fetch_cached("text", key, ttl, [&] {
            text_limiter_.acquire();
            ++text_calls_;
            TextResult tr;
            tr.chunks = with_retries<std::vector<TextChunk>>(
                [&] { return text_->search(query, cfg_.first_stage_k, cfg_.text_top_k); });
            return tr;
        });
        ToolResponse out;
        out.payload = std::get<TextResult>(fetched.payload);
        out.cache_hit = fetched.cache_hit;
        out.latency_ms = fetched.latency_ms;
        return out;
    }

    // Uncached: the expert consumes the trajectory, which is unique per call.
    ToolResponse answer_expert(const MultimodalQuery& query,
                               const std::vector<TrajectoryStep>& history,
                               const std::string& pending_reasoning = "") {
        const auto t0 = std::chrono::steady_clock::now();
        expert_limiter_.acquire();
        ++expert_calls_;
        AnswerResult result = with_retries<AnswerResult>(
            [&] { return expert_->answer(query, history, pending_reasoning); });
        ToolResponse out;
        out.payload = std::move(result);
        out.cache_hit = false;
        out.latency_ms = elapsed_ms(t0);
        return out;
    }

    // Probes every configured backend with a canary request through its rate
    // limiter. Failures are reported in the statuses, never thrown.
    std::vector<BackendStatus> health_check() {
        std::vector<BackendStatus> out;
        out.push_back(probe_one("image_search", image_->name(), image_limiter_,
                                [&] { image_->probe(); }));
        out.push_back(
            probe_one("text_search", text_->name(), text_limiter_, [&] { text_->probe(); }));
        out.push_back(probe_one("answer_expert", expert_->name(), expert_limiter_,
                                [&] { expert_->probe(); }));
        return out;
    }

    EnvStats stats() const {
        return {image_calls_.load(), text_calls_.load(), expert_calls_.load(), cache_.hits(),
                cache_.misses()};
    }

private:
    struct CachedFetch {
        ToolPayload payload;
        bool cache_hit = false;
        std::int64_t latency_ms = 0;
    };

    static std::int64_t elapsed_ms(std::chrono::steady_clock::time_point t0) {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    }

    template <typename T, typename Fn>
    T with_retries(Fn&& fn) {
        int backoff = cfg_.retry_backoff_ms;
        std::string last;
        for (int attempt = 0; attempt < cfg_.retry_attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
                backoff *= 2;
            }
            try {
                return fn();
            } catch (const BackendUnavailable& e) {
                last = e.what();
            }
        }
        throw BackendUnavailable("backend failed after " + std::to_string(cfg_.retry_attempts) +
                                 " attempts: " + last);
    }

    // Cache + single-flight wrapper. All participants of one cold fetch share
    // the leader's payload, latency and (false) cache-hit flag; exactly one
    // backend call is made per cold key.
    template <typename Fn>
    CachedFetch fetch_cached(const std::string& kind, const std::string& key, std::int64_t ttl,
                             Fn&& compute) {
        return flights_.run(kind + "/" + key, [&]() -> CachedFetch {
            const auto t0 = std::chrono::steady_clock::now();
            if (auto cached = cache_.get(kind, key, ttl)) {
                ToolResponse stored = cached->get<ToolResponse>();
                return {std::move(stored.payload), true, elapsed_ms(t0)};
            }
            ToolPayload payload = compute();
            ToolResponse canonical;
            canonical.payload = payload;
            cache_.put(kind, key, canonical_payload_json(canonical));
            return {std::move(payload), false, elapsed_ms(t0)};
        });
    }

    template <typename Fn>
    BackendStatus probe_one(const std::string& tool, const std::string& backend,
                            TokenBucket& limiter, Fn&& probe) {
        BackendStatus status;
        status.tool = tool;
        status.backend = backend;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            limiter.acquire();
            probe();
            status.healthy = true;
        } catch (const std::exception& e) {
            status.healthy = false;
            status.error = e.what();
        }
        status.latency_ms = elapsed_ms(t0);
        return status;
    }

    ToolEnvConfig cfg_;
    std::unique_ptr<ImageBackend> image_;
    std::unique_ptr<TextBackend> text_;
    std::unique_ptr<ExpertBackend> expert_;
    DiskCache cache_;
    TokenBucket image_limiter_;
    TokenBucket text_limiter_;
    TokenBucket expert_limiter_;
    SingleFlight<CachedFetch> flights_;
    std::atomic<std::uint64_t> image_calls_{0};
    std::atomic<std::uint64_t> text_calls_{0};
    std::atomic<std::uint64_t> expert_calls_{0};
};

}  // namespace mmseek
