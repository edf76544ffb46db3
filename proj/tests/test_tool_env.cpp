// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

#include "mmseek/tool_env.hpp"
#include "support.hpp"

using namespace mmseek;
using namespace mmseek::testing;

namespace {

TEST(Corpus, ChunksTileDocumentsCompletely) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int window = 5 + static_cast<int>(rng() % 40);
        const int overlap = static_cast<int>(rng() % window);
        const size_t len = 1 + rng() % 300;
        std::string text(len, 'x');
        for (auto& c : text) c = static_cast<char>('a' + rng() % 26);
        Corpus corpus({{"d", "t", text}}, {window, overlap});
        // every byte covered, in order, no gaps
        size_t covered_until = 0;
        for (const auto& chunk : corpus.chunks()) {
            ASSERT_LE(static_cast<size_t>(chunk.offset), covered_until);
            covered_until =
                std::max(covered_until, static_cast<size_t>(chunk.offset) + chunk.text.size());
            EXPECT_EQ(chunk.text,
                      text.substr(static_cast<size_t>(chunk.offset), chunk.text.size()));
        }
        EXPECT_EQ(covered_until, text.size());
    }
}

TEST(Corpus, LexicalScorerRanksOverlappingChunkFirst) {
    Corpus corpus(
        {{"d1", "", "the eiffel tower was designed by gustave eiffel"},
         {"d2", "", "bananas are yellow fruit"},
         {"d3", "", "the louvre is a museum in paris"}},
        {1000, 200});
    LexicalScorer scorer;
    const auto results = corpus.search("eiffel tower designed", scorer, scorer, 100, 10);
    ASSERT_FALSE(results.empty());
    EXPECT_EQ(results[0].source_id, "d1");
}

TEST(Corpus, NoPaddingWhenCorpusSmallerThanK) {
    Corpus corpus({{"d1", "", "alpha"}, {"d2", "", "beta"}, {"d3", "", "gamma"},
                   {"d4", "", "delta"}},
                  {1000, 200});
    LexicalScorer scorer;
    EXPECT_EQ(corpus.search("anything", scorer, scorer, 100, 10).size(), 4u);
}

TEST(Corpus, ScoreTiesBreakBySourceIdThenOffset) {
    // Duplicate-content docs force identical scores.
    Corpus corpus({{"zz", "", "identical words here"}, {"aa", "", "identical words here"}},
                  {1000, 200});
    LexicalScorer scorer;
    const auto results = corpus.search("identical words", scorer, scorer, 100, 10);
    ASSERT_EQ(results.size(), 2u);
    EXPECT_EQ(results[0].source_id, "aa");
    EXPECT_EQ(results[1].source_id, "zz");
}

// Property: every reranked result comes from the first-stage candidate set.
TEST(Corpus, RerankContainmentOnRandomCorpora) {
    std::mt19937_64 rng(99);
    auto random_word = [&rng] {
        std::string w;
        for (int i = 0; i < 3 + static_cast<int>(rng() % 5); ++i) {
            w.push_back(static_cast<char>('a' + rng() % 6));
        }
        return w;
    };
    // lightweight local check; the full 1000-corpus sweep runs in acceptance
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<CorpusDoc> docs;
        const int n_docs = 2 + static_cast<int>(rng() % 6);
        for (int d = 0; d < n_docs; ++d) {
            std::string text;
            for (int w = 0; w < 5 + static_cast<int>(rng() % 20); ++w) {
                text += random_word() + " ";
            }
            docs.push_back({"d" + std::to_string(d), "", text});
        }
        Corpus corpus(std::move(docs), {30, 10});
        const int first_k = 1 + static_cast<int>(rng() % 8);
        const int top_k = 1 + static_cast<int>(rng() % first_k);
        const std::string query = random_word() + " " + random_word();
        LexicalScorer retriever;
        // reranker with a different preference ordering
        struct LengthScorer : Scorer {
            double score(const std::string&, const TextChunk& c) const override {
                return static_cast<double>(c.text.size());
            }
            std::string name() const override { return "length"; }
        } reranker;
        const auto stage1 = corpus.search(query, retriever, retriever, first_k, first_k);
        const auto reranked = corpus.search(query, retriever, reranker, first_k, top_k);
        ASSERT_LE(reranked.size(), static_cast<size_t>(top_k));
        for (const auto& r : reranked) {
            const bool contained =
                std::any_of(stage1.begin(), stage1.end(), [&](const TextChunk& c) {
                    return c.source_id == r.source_id && c.offset == r.offset;
                });
            EXPECT_TRUE(contained);
        }
    }
}

TEST(Corpus, EmptyCorpusThrows) {
    Corpus corpus(std::vector<CorpusDoc>{}, {1000, 200});
    LexicalScorer scorer;
    EXPECT_THROW(corpus.search("q", scorer, scorer, 10, 5), EmptyCorpus);
}

// ---------------------------------------------------------------------------

class CountingImageBackend : public ImageBackend {
public:
    explicit CountingImageBackend(ImageResult fixture) : fixture_(std::move(fixture)) {}
    ImageResult search(const ImageRef&) override {
        ++calls_;
        return fixture_;
    }
    void probe() override {}
    std::string name() const override { return "counting_image"; }
    std::atomic<int> calls_{0};

private:
    ImageResult fixture_;
};

ImageResult landmark_fixture(int titles) {
    ImageResult r;
    r.images.push_back(test_image("landmark"));
    r.images.push_back(test_image("landmark-2"));
    for (int i = 0; i < titles; ++i) {
        r.titles.push_back({"landmark title " + std::to_string(i),
                            "https://l/" + std::to_string(i)});
    }
    return r;
}

TEST(ToolEnvImage, FixtureServedThenCached) {
    TempDir tmp;
    const auto img = test_image("A");
    json fx;
    fx[img.content_hash] = {{"images", json(landmark_fixture(5).images)},
                            {"titles", json(landmark_fixture(5).titles)}};
    ToolEnv env(test_env_config(tmp.path()), std::make_unique<MockImageBackend>(fx),
                std::make_unique<MockTextBackend>(), std::make_unique<StubExpertBackend>());
    const auto first = env.image_search(img);
    EXPECT_FALSE(first.cache_hit);
    const auto second = env.image_search(img);
    EXPECT_TRUE(second.cache_hit);
    EXPECT_EQ(canonical_payload_json(first).dump(), canonical_payload_json(second).dump());
    const auto& ir = std::get<ImageResult>(first.payload);
    EXPECT_EQ(ir.images.size(), 1u);  // top-1 default
    EXPECT_EQ(ir.titles.size(), 5u);
}

TEST(ToolEnvImage, SecondIdenticalCallHitsNoBackend) {
    TempDir tmp;
    auto backend = std::make_unique<CountingImageBackend>(landmark_fixture(3));
    auto* raw = backend.get();
    ToolEnv env(test_env_config(tmp.path()), std::move(backend),
                std::make_unique<MockTextBackend>(), std::make_unique<StubExpertBackend>());
    const auto img = test_image("B");
    env.image_search(img);
    EXPECT_EQ(raw->calls_.load(), 1);
    env.image_search(img);
    EXPECT_EQ(raw->calls_.load(), 1);  // request counter unchanged
}

TEST(ToolEnvImage, TitleCapTruncatesOversizedFixture) {
    TempDir tmp;
    auto cfg = test_env_config(tmp.path());
    cfg.image_top_titles = 30;
    auto backend = std::make_unique<CountingImageBackend>(landmark_fixture(50));
    ToolEnv env(cfg, std::move(backend), std::make_unique<MockTextBackend>(),
                std::make_unique<StubExpertBackend>());
    const auto resp = env.image_search(test_image("C"));
    const auto& ir = std::get<ImageResult>(resp.payload);
    ASSERT_EQ(ir.titles.size(), 30u);
    for (int i = 0; i < 30; ++i) {
        EXPECT_EQ(ir.titles[i].title, "landmark title " + std::to_string(i));  // fixture order
    }
    EXPECT_EQ(ir.images.size(), 1u);
}

TEST(ToolEnvImage, CapChangeReusesCachedRawResult) {
    TempDir tmp;
    auto cfg = test_env_config(tmp.path());
    cfg.image_top_titles = 30;
    const auto img = test_image("D");
    auto backend = std::make_unique<CountingImageBackend>(landmark_fixture(50));
    auto* raw = backend.get();
    {
        ToolEnv env(cfg, std::move(backend), std::make_unique<MockTextBackend>(),
                    std::make_unique<StubExpertBackend>());
        env.image_search(img);
        EXPECT_EQ(raw->calls_.load(), 1);
    }
    cfg.image_top_titles = 10;
    ToolEnv env2(cfg, std::make_unique<CountingImageBackend>(landmark_fixture(50)),
                 std::make_unique<MockTextBackend>(), std::make_unique<StubExpertBackend>());
    const auto resp = env2.image_search(img);
    EXPECT_TRUE(resp.cache_hit);  // raw entry keyed by content hash only
    EXPECT_EQ(std::get<ImageResult>(resp.payload).titles.size(), 10u);
}

TEST(ToolEnvText, CachedAndFreshAreByteIdentical) {
    TempDir tmp;
    ToolEnv env(test_env_config(tmp.path()), std::make_unique<MockImageBackend>(),
                std::make_unique<MockTextBackend>(), std::make_unique<StubExpertBackend>());
    const auto fresh = env.text_search("what is the capital of france");
    const auto cached = env.text_search("what is   the capital of FRANCE");  // normalizes equal
    EXPECT_FALSE(fresh.cache_hit);
    EXPECT_TRUE(cached.cache_hit);
    EXPECT_EQ(canonical_payload_json(fresh).dump(), canonical_payload_json(cached).dump());
}

TEST(ToolEnvImage, UnreadableFileIsInvalidImage) {
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    const auto dir_as_image = tmp.path() / "not-a-file";
    std::filesystem::create_directories(dir_as_image);
    EXPECT_THROW(env->resolve_image(ImageRef{"", "", ""}), InvalidImage);
    // a directory path resolves as an opaque handle, not a file read
    const auto resolved = env->resolve_image(ImageRef{dir_as_image.string(), "", ""});
    EXPECT_FALSE(resolved.content_hash.empty());
}

TEST(ToolEnvImage, FilePathHashedByContent) {
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    const auto img_path = tmp.path() / "img.bin";
    write_file(img_path, "pixel bytes");
    const auto resolved = env->resolve_image(ImageRef{img_path.string(), "", ""});
    EXPECT_EQ(resolved.content_hash, sha256_hex("pixel bytes"));
}

TEST(ToolEnvText, EmptyQueryRejected) {
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    EXPECT_THROW(env->text_search("   "), Error);
}

TEST(ToolEnv, MockBackendsArePureFunctions) {
    TempDir tmp1, tmp2;
    auto env1 = make_mock_env(test_env_config(tmp1.path()));
    auto env2 = make_mock_env(test_env_config(tmp2.path()));
    const auto r1 = env1->text_search("same query");
    const auto r2 = env2->text_search("same query");
    EXPECT_EQ(canonical_payload_json(r1).dump(), canonical_payload_json(r2).dump());
    const auto i1 = env1->image_search(test_image("Z"));
    const auto i2 = env2->image_search(test_image("Z"));
    EXPECT_EQ(canonical_payload_json(i1).dump(), canonical_payload_json(i2).dump());
}

TEST(ToolEnv, SingleFlightCollapsesConcurrentColdRequests) {
    TempDir tmp;
    auto backend = std::make_unique<CountingImageBackend>(landmark_fixture(3));
    auto* raw = backend.get();
    ToolEnv env(test_env_config(tmp.path()), std::move(backend),
                std::make_unique<MockTextBackend>(), std::make_unique<StubExpertBackend>());
    const auto img = test_image("SF");
    constexpr int kThreads = 32;
    std::vector<std::string> payloads(kThreads);
    std::vector<std::thread> threads;
    for (int i = 0; i < kThreads; ++i) {
        threads.emplace_back([&, i] {
            payloads[i] = canonical_payload_json(env.image_search(img)).dump();
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(raw->calls_.load(), 1);  // exactly one backend call
    for (const auto& p : payloads) EXPECT_EQ(p, payloads[0]);
}

TEST(ToolEnv, RateLimiterPacesProbes) {
    TempDir tmp;
    auto cfg = test_env_config(tmp.path());
    cfg.rate_limits.text_rps = 2.0;
    ToolEnv env(cfg, std::make_unique<MockImageBackend>(), std::make_unique<MockTextBackend>(),
                std::make_unique<StubExpertBackend>());
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 10; ++i) env.health_check();
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    // 10 probes at 2 rps with an initial burst of 2 tokens
    EXPECT_GE(elapsed, 4.0);
}

TEST(ToolEnv, HealthCheckAllMocksHealthy) {
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    const auto statuses = env->health_check();
    ASSERT_EQ(statuses.size(), 3u);
    for (const auto& s : statuses) {
        EXPECT_TRUE(s.healthy) << s.tool;
        EXPECT_LT(s.latency_ms, 5);
    }
}

TEST(ToolEnv, HealthCheckReportsUnreachableExpert) {
    TempDir tmp;
    ToolEnv env(test_env_config(tmp.path()), std::make_unique<MockImageBackend>(),
                std::make_unique<MockTextBackend>(),
                std::make_unique<HttpExpertBackend>(EndpointConfig{
                    "http://127.0.0.1:1/unreachable", "", "", 1, 1, 1}));
    const auto statuses = env.health_check();
    bool found = false;
    for (const auto& s : statuses) {
        if (s.tool == "answer_expert") {
            found = true;
            EXPECT_FALSE(s.healthy);
            EXPECT_FALSE(s.error.empty());
        } else {
            EXPECT_TRUE(s.healthy);
        }
    }
    EXPECT_TRUE(found);
}

// ---------------------------------------------------------------------------

TEST(AnswerExpert, StubEchoesFirstChunkOfLastTextResult) {
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    const auto q = make_query("q1");
    std::vector<TrajectoryStep> history;
    TrajectoryStep step;
    step.reasoning = "found it";
    step.tool_call = TextSearchCall{"x"};
    step.tool_response = text_response({{"The answer passage.", "d", 0, 1.0}});
    history.push_back(step);
    const auto resp = env->answer_expert(q, history, "final reasoning");
    EXPECT_EQ(std::get<AnswerResult>(resp.payload).answer, "The answer passage.");
}

TEST(AnswerExpert, EmptyHistoryGetsFallbackAnswer) {
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    const auto resp = env->answer_expert(make_query("q1"), {}, "");
    EXPECT_EQ(std::get<AnswerResult>(resp.payload).answer, "unknown");
}

TEST(AnswerExpert, PromptCarriesNoImageAttachment) {
    // The generator is modality-agnostic: images reach it only as text.
    const auto q = make_query("q1");
    std::vector<TrajectoryStep> history;
    TrajectoryStep step;
    step.reasoning = "saw a tower";
    step.tool_call = ImageSearchCall{q.image};
    step.tool_response = image_response();
    history.push_back(step);
    const auto msgs = detail::expert_messages(q, history, "pending");
    for (const auto& m : msgs) EXPECT_TRUE(m.images.empty());
    EXPECT_NE(msgs[1].content.find("saw a tower"), std::string::npos);
    EXPECT_NE(msgs[1].content.find("pending"), std::string::npos);
}

TEST(AnswerExpert, SwappingGeneratorChangesOnlyTheAnswer) {
    TempDir tmp1, tmp2;
    const auto q = make_query("q1");
    auto run_with_expert = [&](const fs::path& cache,
                               std::unique_ptr<ExpertBackend> expert) {
        ToolEnv env(test_env_config(cache), std::make_unique<MockImageBackend>(),
                    std::make_unique<MockTextBackend>(), std::move(expert));
        ScriptedPolicy policy({scripted_turn("search", TextSearchCall{"fact"}),
                               scripted_turn("done", AnswerExpertCall{})});
        RolloutConfig cfg;
        return run_rollout(q, policy, env, cfg);
    };
    const Trajectory a = run_with_expert(
        tmp1.path(), std::make_unique<StubExpertBackend>(StubExpertBackend::Mode::fixed, "A"));
    const Trajectory b = run_with_expert(
        tmp2.path(), std::make_unique<StubExpertBackend>(StubExpertBackend::Mode::fixed, "B"));
    EXPECT_EQ(std::get<AnswerResult>(a.steps.back().tool_response.payload).answer, "A");
    EXPECT_EQ(std::get<AnswerResult>(b.steps.back().tool_response.payload).answer, "B");
    // identical trajectories except the final answer
    json ja = stable_trajectory_json(a);
    json jb = stable_trajectory_json(b);
    ja["steps"].back()["tool_response"].erase("answer");
    jb["steps"].back()["tool_response"].erase("answer");
    EXPECT_EQ(ja.dump(), jb.dump());
}

TEST(DiskCache, CorruptEntryBehavesLikeMiss) {
    TempDir tmp;
    DiskCache cache(tmp.path());
    cache.put("text", "k1", json{{"type", "text_result"}, {"chunks", json::array()}});
    write_file(tmp.path() / "text" / "k1.json", "{not valid json");
    EXPECT_FALSE(cache.get("text", "k1").has_value());
}

TEST(DiskCache, TtlExpiresEntries) {
    TempDir tmp;
    DiskCache cache(tmp.path());
    cache.put("text", "k1", json{{"type", "text_result"}, {"chunks", json::array()}});
    EXPECT_TRUE(cache.get("text", "k1", 3600).has_value());
    // rewrite with an old timestamp
    json entry = json::parse(read_file(tmp.path() / "text" / "k1.json"));
    entry["created_at"] = 1;
    write_file(tmp.path() / "text" / "k1.json", entry.dump());
    EXPECT_FALSE(cache.get("text", "k1", 3600).has_value());
    EXPECT_TRUE(cache.get("text", "k1", 0).has_value());  // 0 = never expires
}

}  // namespace
