// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Local text corpus: character-window chunking and a two-stage
// retrieve-then-rerank search over pluggable scorers. Production binds
// embedding-endpoint scorers (one retriever, one reranker); tests bind the
// deterministic lexical scorer.

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "mmseek/chat.hpp"
#include "mmseek/core.hpp"
#include "mmseek/util.hpp"

namespace mmseek {

struct CorpusDoc {
    std::string source_id;
    std::string title;
    std::string text;
};

struct ChunkingConfig {
    int window = 1000;   // characters per chunk
    int overlap = 200;   // characters shared between neighbours
};

// score(query, chunk) -> real; higher is more relevant. Must be a pure
// function of its inputs.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual double score(const std::string& query, const TextChunk& chunk) const = 0;
    virtual std::string name() const = 0;
};

// Token-overlap scorer: fraction of query word tokens present in the chunk.
class LexicalScorer : public Scorer {
public:
    double score(const std::string& query, const TextChunk& chunk) const override {
        const auto q = word_tokens(query);
        if (q.empty()) return 0.0;
        const auto c = word_tokens(chunk.text);
        const std::set<std::string> cset(c.begin(), c.end());
        size_t hit = 0;
        for (const auto& tok : q) {
            if (cset.count(tok)) ++hit;
        }
        return static_cast<double>(hit) / static_cast<double>(q.size());
    }
    std::string name() const override { return "lexical"; }
};

// Binds a chat-completion endpoint as a scorer: the server is asked for a
// single relevance number and the first float in its reply is used.
class EndpointScorer : public Scorer {
public:
    EndpointScorer(ChatClient& client, std::string label)
        : client_(client), label_(std::move(label)) {}

    double score(const std::string& query, const TextChunk& chunk) const override {
        std::vector<Message> msgs{
            Message::system("Rate how relevant the passage is to the query. "
                            "Reply with a single number between 0 and 1."),
            Message::user("Query: " + query + "\nPassage: " + chunk.text)};
        const std::string reply = client_.complete(msgs, SamplingParams{0.0, 16});
        return parse_first_float(reply);
    }
    std::string name() const override { return label_; }

    static double parse_first_float(const std::string& text) {
        size_t i = 0;
        while (i < text.size() && !(std::isdigit(static_cast<unsigned char>(text[i])) ||
                                    text[i] == '-' || text[i] == '.')) {
            ++i;
        }
        if (i == text.size()) throw Error("scorer reply has no number: " + text);
        return std::stod(text.substr(i));
    }

private:
    ChatClient& client_;
    std::string label_;
};

class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<CorpusDoc> docs, ChunkingConfig chunking)
        : docs_(std::move(docs)), chunking_(chunking) {
        if (chunking_.window <= 0) throw Error("corpus: window must be positive");
        if (chunking_.overlap < 0 || chunking_.overlap >= chunking_.window) {
            throw Error("corpus: overlap must be in [0, window)");
        }
        build_chunks();
    }

    const std::vector<CorpusDoc>& docs() const { return docs_; }
    const std::vector<TextChunk>& chunks() const { return chunks_; }
    bool empty() const { return chunks_.empty(); }

    // Digest over documents and chunking parameters; part of cache keys so a
    // corpus swap can never serve stale results.
    const std::string& fingerprint() const { return fingerprint_; }

    // Two-stage search: first-stage top `first_stage_k` under the retriever,
    // reranked to `top_k` under the reranker. Descending score; ties broken
    // by (source_id, offset) ascending. Every result is drawn from the
    // first-stage candidate set.
    std::vector<TextChunk> search(const std::string& query, const Scorer& retriever,
                                  const Scorer& reranker, int first_stage_k, int top_k) const {
        if (empty()) throw EmptyCorpus("corpus has no documents");
        std::vector<TextChunk> stage1 = chunks_;
        for (auto& c : stage1) c.score = retriever.score(query, c);
        rank(stage1);
        if (static_cast<size_t>(first_stage_k) < stage1.size()) {
            stage1.resize(static_cast<size_t>(first_stage_k));
        }
        for (auto& c : stage1) c.score = reranker.score(query, c);
        rank(stage1);
        if (static_cast<size_t>(top_k) < stage1.size()) {
            stage1.resize(static_cast<size_t>(top_k));
        }
        return stage1;
    }

    static void rank(std::vector<TextChunk>& chunks) {
        std::stable_sort(chunks.begin(), chunks.end(), [](const TextChunk& a, const TextChunk& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.source_id != b.source_id) return a.source_id < b.source_id;
            return a.offset < b.offset;
        });
    }

    // Loads documents from a .jsonl file ({"source_id","title","text"} per
    // line) or a directory of such files.
    static Corpus load(const std::filesystem::path& path, ChunkingConfig chunking) {
        namespace fs = std::filesystem;
        std::vector<fs::path> files;
        if (fs::is_directory(path)) {
            for (const auto& entry : fs::directory_iterator(path)) {
                if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(path);
        }
        std::vector<CorpusDoc> docs;
        for (const auto& f : files) {
            for (const auto& j : read_jsonl(f)) {
                docs.push_back({j.value("source_id", ""), j.value("title", ""),
                                j.value("text", "")});
            }
        }
        return Corpus(std::move(docs), chunking);
    }

private:
    // Windows tile each document completely: starts advance by
    // window - overlap; the final window is clipped at the document end.
    void build_chunks() {
        const size_t stride = static_cast<size_t>(chunking_.window - chunking_.overlap);
        for (const auto& doc : docs_) {
            const std::string& text = doc.text;
            if (text.empty()) continue;
            size_t start = 0;
            for (;;) {
                const size_t end = std::min(start + static_cast<size_t>(chunking_.window),
                                            text.size());
                chunks_.push_back({text.substr(start, end - start), doc.source_id,
                                   static_cast<std::int64_t>(start), 0.0});
                if (end == text.size()) break;
                start += stride;
            }
        }
        std::string acc = std::to_string(chunking_.window) + "/" +
                          std::to_string(chunking_.overlap);
        for (const auto& doc : docs_) {
            acc += '\x1f';
            acc += doc.source_id;
            acc += '\x1f';
            acc += doc.text;
        }
        fingerprint_ = sha256_hex(acc);
    }

    std::vector<CorpusDoc> docs_;
    ChunkingConfig chunking_;
    std::vector<TextChunk> chunks_;
    std::string fingerprint_;
};

}  // namespace mmseek
