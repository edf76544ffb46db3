// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Structured logging: one JSON object per event so log pipelines can ingest
// runs without parsing free text.

#include <iostream>
#include <mutex>
#include <string>

#include "mmseek/util.hpp"

namespace mmseek {

class Logger {
public:
    static Logger& instance() {
        static Logger logger;
        return logger;
    }

    void set_stream(std::ostream* out) {
        std::lock_guard<std::mutex> lock(mu_);
        out_ = out;
    }

    void set_enabled(bool on) {
        std::lock_guard<std::mutex> lock(mu_);
        enabled_ = on;
    }

    void event(std::string_view name, json fields = json::object()) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!enabled_ || out_ == nullptr) return;
        fields["event"] = std::string(name);
        fields["ts"] = iso8601_now();
        (*out_) << fields.dump() << '\n';
        out_->flush();
    }

private:
    Logger() = default;
    std::mutex mu_;
    std::ostream* out_ = &std::cerr;
    bool enabled_ = true;
};

inline void log_event(std::string_view name, json fields = json::object()) {
    Logger::instance().event(name, std::move(fields));
}

}  // namespace mmseek
