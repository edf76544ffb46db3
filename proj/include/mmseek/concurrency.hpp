// Copyright 2026 The mmseek Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

// Concurrency primitives for the shared tool environment: token-bucket rate
// limiting, single-flight request de-duplication, and a bounded parallel map.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "mmseek/util.hpp"

namespace mmseek {

// Blocking token bucket. Capacity = max(1, rate) tokens, starts full;
// refills continuously at `rate` tokens per second. rate <= 0 disables
// limiting.
class TokenBucket {
public:
    explicit TokenBucket(double rate_per_sec)
        : rate_(rate_per_sec), capacity_(std::max(1.0, rate_per_sec)), tokens_(capacity_) {}

    void acquire() {
        if (rate_ <= 0.0) return;
        std::unique_lock<std::mutex> lock(mu_);
        for (;;) {
            refill();
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            const double deficit = 1.0 - tokens_;
            const auto wait = std::chrono::duration<double>(deficit / rate_);
            cv_.wait_for(lock, wait);
        }
    }

private:
    void refill() {
        const auto now = std::chrono::steady_clock::now();
        const double elapsed = std::chrono::duration<double>(now - last_).count();
        last_ = now;
        tokens_ = std::min(capacity_, tokens_ + elapsed * rate_);
    }

    double rate_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
    std::mutex mu_;
    std::condition_variable cv_;
};

// Collapses concurrent identical requests into one execution of `fn`; every
// caller for the same key receives the same result (or the same exception).
template <typename V>
class SingleFlight {
public:
    V run(const std::string& key, const std::function<V()>& fn) {
        std::shared_ptr<std::promise<V>> prom;  // set only for the leader
        std::shared_future<V> fut;
        {
            std::lock_guard<std::mutex> lock(mu_);
            auto it = inflight_.find(key);
            if (it == inflight_.end()) {
                prom = std::make_shared<std::promise<V>>();
                fut = prom->get_future().share();
                inflight_.emplace(key, fut);
            } else {
                fut = it->second;
            }
        }
        if (!prom) return fut.get();

        try {
            prom->set_value(fn());
        } catch (...) {
            prom->set_exception(std::current_exception());
        }
        {
            std::lock_guard<std::mutex> lock(mu_);
            inflight_.erase(key);
        }
        return fut.get();
    }

private:
    std::mutex mu_;
    std::map<std::string, std::shared_future<V>> inflight_;
};

// Runs fn(i) for i in [0, n) on up to `workers` threads. Results are indexed,
// so output order is independent of scheduling. Exceptions are rethrown
// (first by index).
template <typename Fn>
void parallel_for(size_t n, size_t workers, Fn&& fn) {
    if (n == 0) return;
    workers = std::max<size_t>(1, std::min(workers, n));
    if (workers == 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace mmseek
