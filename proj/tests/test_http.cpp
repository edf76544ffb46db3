// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0

// Endpoint bindings exercised against a local in-process server.

#include <gtest/gtest.h>

#include <httplib.h>

#include <thread>

#include "mmseek/http.hpp"
#include "mmseek/tool_env.hpp"
#include "support.hpp"

using namespace mmseek;
using namespace mmseek::testing;

namespace {

class LocalServer {
public:
    explicit LocalServer(std::function<void(httplib::Server&)> setup) {
        setup(server_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    std::string url(const std::string& path = "") const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

json chat_response(const std::string& content) {
    return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}};
}

TEST(HttpChatClient, SendsMessagesReceivesText) {
    json seen_body;
    LocalServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            seen_body = json::parse(req.body);
            res.set_content(chat_response("hello back").dump(), "application/json");
        });
    });
    HttpChatClient client(EndpointConfig{server.url(), "test-key", "judge-model", 1, 1, 5});
    const std::string reply = client.complete(
        {Message::system("be brief"), Message::user("hello")}, SamplingParams{0.0, 32});
    EXPECT_EQ(reply, "hello back");
    EXPECT_EQ(seen_body["model"], "judge-model");
    EXPECT_EQ(seen_body["messages"].size(), 2u);
    EXPECT_EQ(seen_body["messages"][1]["content"], "hello");
    EXPECT_EQ(seen_body["max_tokens"], 32);
}

TEST(HttpChatClient, ImageAttachmentsBecomeContentParts) {
    json seen_body;
    LocalServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            seen_body = json::parse(req.body);
            res.set_content(chat_response("ok").dump(), "application/json");
        });
    });
    HttpChatClient client(EndpointConfig{server.url()});
    client.complete({Message::user("what is this?", {test_image("x")})}, SamplingParams{});
    const auto& content = seen_body["messages"][0]["content"];
    ASSERT_TRUE(content.is_array());
    EXPECT_EQ(content[0]["type"], "text");
    EXPECT_EQ(content[1]["type"], "image_url");
}

TEST(HttpPolicyClient, ParsesLogprobs) {
    LocalServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
            json body = chat_response("<think>x</think>");
            body["choices"][0]["logprobs"] = {
                {"content",
                 {{{"token", "<think>"}, {"logprob", -0.1}},
                  {{"token", "x"}, {"logprob", -0.5}}}}};
            res.set_content(body.dump(), "application/json");
        });
    });
    HttpPolicyClient client(EndpointConfig{server.url()});
    const PolicyTurn turn = client.next_turn({Message::user("go")}, SamplingParams{});
    EXPECT_EQ(turn.text, "<think>x</think>");
    ASSERT_EQ(turn.logprobs.size(), 2u);
    EXPECT_EQ(turn.logprobs[1].token, "x");
    EXPECT_EQ(turn.logprobs[1].logprob, -0.5);
}

TEST(PostJson, RetriesTransientFailuresThenSucceeds) {
    std::atomic<int> hits{0};
    LocalServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
            if (hits.fetch_add(1) == 0) {
                res.status = 500;
                return;
            }
            res.set_content(chat_response("recovered").dump(), "application/json");
        });
    });
    HttpChatClient client(EndpointConfig{server.url(), "", "", 3, 1, 5});
    EXPECT_EQ(client.complete({Message::user("x")}, SamplingParams{}), "recovered");
    EXPECT_EQ(hits.load(), 2);
}

TEST(PostJson, ExhaustedRetriesThrowBackendUnavailable) {
    HttpChatClient client(EndpointConfig{"http://127.0.0.1:1/unreachable", "", "", 2, 1, 1});
    EXPECT_THROW(client.complete({Message::user("x")}, SamplingParams{}), BackendUnavailable);
}

TEST(WebTextBackend, ParsesResultsAndRespectsK) {
    LocalServer server([&](httplib::Server& s) {
        s.Post("/search", [&](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            json results = json::array();
            for (int i = 0; i < 20; ++i) {
                results.push_back({{"text", "result " + std::to_string(i) + " for " +
                                                body["q"].get<std::string>()},
                                   {"source_id", "web-" + std::to_string(i)},
                                   {"score", 1.0 - 0.01 * i}});
            }
            res.set_content(json{{"results", results}}.dump(), "application/json");
        });
    });
    WebTextBackend backend(EndpointConfig{server.url(), "", "", 1, 1, 5});
    const auto chunks = backend.search("capital of france", 100, 10);
    ASSERT_EQ(chunks.size(), 10u);
    EXPECT_EQ(chunks[0].source_id, "web-0");
    EXPECT_NE(chunks[0].text.find("capital of france"), std::string::npos);
}

TEST(HttpImageBackend, RoundTripsImagesAndTitles) {
    LocalServer server([&](httplib::Server& s) {
        s.Post("/search", [&](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            EXPECT_FALSE(body["image_hash"].get<std::string>().empty());
            const json out{
                {"images", {{{"uri", "https://img/1"}, {"content_hash", "h1"},
                             {"media_type", "image/jpeg"}}}},
                {"titles", {{{"title", "t1"}, {"url", "https://u/1"}}}}};
            res.set_content(out.dump(), "application/json");
        });
    });
    HttpImageBackend backend(EndpointConfig{server.url(), "key", "", 1, 1, 5});
    const auto result = backend.search(test_image("q"));
    ASSERT_EQ(result.images.size(), 1u);
    EXPECT_EQ(result.images[0].uri, "https://img/1");
    ASSERT_EQ(result.titles.size(), 1u);
    EXPECT_EQ(result.titles[0].title, "t1");
}

TEST(EndpointScorer, ParsesFirstFloatFromReply) {
    EXPECT_DOUBLE_EQ(EndpointScorer::parse_first_float("relevance: 0.85 out of 1"), 0.85);
    EXPECT_DOUBLE_EQ(EndpointScorer::parse_first_float("0.2"), 0.2);
    EXPECT_THROW(EndpointScorer::parse_first_float("no numbers"), Error);
}

TEST(EndpointScorer, ScoresViaChatEndpoint) {
    LocalServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            const std::string user = body["messages"][1]["content"];
            const std::string passage = user.substr(user.find("Passage:"));
            const double score = passage.find("paris") != std::string::npos ? 0.9 : 0.1;
            res.set_content(chat_response(std::to_string(score)).dump(), "application/json");
        });
    });
    HttpChatClient client(EndpointConfig{server.url(), "", "", 1, 1, 5});
    EndpointScorer scorer(client, "endpoint_retriever");
    TextChunk relevant{"paris is the capital of france", "d", 0, 0.0};
    TextChunk irrelevant{"bananas are yellow", "d", 0, 0.0};
    EXPECT_GT(scorer.score("capital of france paris", relevant),
              scorer.score("capital of france paris", irrelevant));
}

// End-to-end over HTTP: a rollout against a local policy server.
TEST(HttpRollout, PolicyServerDrivesAnsweredTrajectory) {
    LocalServer server([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            size_t assistant_turns = 0;
            for (const auto& m : body["messages"]) {
                if (m["role"] == "assistant") ++assistant_turns;
            }
            const std::string turn =
                assistant_turns == 0
                    ? scripted_turn("search first", TextSearchCall{"some fact"})
                    : scripted_turn("enough", AnswerExpertCall{});
            res.set_content(chat_response(turn).dump(), "application/json");
        });
    });
    TempDir tmp;
    auto env = make_mock_env(test_env_config(tmp.path()));
    HttpPolicyClient policy(EndpointConfig{server.url(), "", "", 1, 1, 5});
    RolloutConfig cfg;
    const Trajectory t = run_rollout(make_query("q1"), policy, *env, cfg);
    EXPECT_EQ(t.terminated, Terminated::answered);
    EXPECT_EQ(t.steps.size(), 2u);
}

}  // namespace
