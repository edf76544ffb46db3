// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Content-addressed disk cache for tool responses: one JSON file per entry,
// filename = hex digest of the normalized request. Writes are atomic
// (tmp + rename), so concurrent writers of the same key are safe.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "mmseek/util.hpp"

namespace mmseek {

class DiskCache {
public:
    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    const std::filesystem::path& dir() const { return dir_; }

    // ttl_seconds == 0 means entries never expire.
    std::optional<json> get(const std::string& kind, const std::string& key,
                            std::int64_t ttl_seconds = 0) const {
        const auto path = entry_path(kind, key);
        std::error_code ec;
        if (!std::filesystem::exists(path, ec)) {
            ++misses_;
            return std::nullopt;
        }
        json entry;
        try {
            entry = json::parse(read_file(path));
        } catch (const std::exception&) {
            ++misses_;
            return std::nullopt;  // corrupt entry behaves like a miss
        }
        if (ttl_seconds > 0) {
            const std::int64_t age = unix_millis_now() / 1000 - entry.value("created_at", std::int64_t{0});
            if (age > ttl_seconds) {
                ++misses_;
                return std::nullopt;
            }
        }
        ++hits_;
        return entry.at("value");
    }

    void put(const std::string& kind, const std::string& key, const json& value) const {
        const json entry{{"key", key},
                         {"kind", kind},
                         {"created_at", unix_millis_now() / 1000},
                         {"value", value}};
        write_file(entry_path(kind, key), entry.dump());
    }

    std::uint64_t hits() const { return hits_.load(); }
    std::uint64_t misses() const { return misses_.load(); }

    std::uint64_t entry_count() const {
        namespace fs = std::filesystem;
        std::error_code ec;
        if (!fs::exists(dir_, ec)) return 0;
        std::uint64_t n = 0;
        for (const auto& e : fs::recursive_directory_iterator(dir_, ec)) {
            if (e.is_regular_file() && e.path().extension() == ".json") ++n;
        }
        return n;
    }

    std::uint64_t total_bytes() const {
        namespace fs = std::filesystem;
        std::error_code ec;
        if (!fs::exists(dir_, ec)) return 0;
        std::uint64_t n = 0;
        for (const auto& e : fs::recursive_directory_iterator(dir_, ec)) {
            if (e.is_regular_file()) n += e.file_size(ec);
        }
        return n;
    }

    void clear() const {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }

private:
    std::filesystem::path entry_path(const std::string& kind, const std::string& key) const {
        return dir_ / kind / (key + ".json");
    }

    std::filesystem::path dir_;
    mutable std::atomic<std::uint64_t> hits_{0};
    mutable std::atomic<std::uint64_t> misses_{0};
};

}  // namespace mmseek
