#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <mutex>
#include <stop_token>

namespace quali {

/// Source of waiting for recovery delays. Sleeps return early (false) when
/// the stop token fires.
class Clock {
public:
    virtual ~Clock() = default;
    virtual bool sleep_for(std::chrono::milliseconds d, std::stop_token stop) = 0;
};

class SystemClock final : public Clock {
public:
    bool sleep_for(std::chrono::milliseconds d, std::stop_token stop) override {
        std::mutex m;
        std::condition_variable_any cv;
        std::unique_lock lock(m);
        return !cv.wait_for(lock, stop, d, [] { return false; });
    }
};

/// Advances a counter instead of sleeping. Used with scripted backends and in
/// tests.
class VirtualClock final : public Clock {
public:
    bool sleep_for(std::chrono::milliseconds d, std::stop_token stop) override {
        if (stop.stop_requested()) return false;
        slept_ms_ += d.count();
        return true;
    }

    std::chrono::milliseconds total_slept() const { return std::chrono::milliseconds(slept_ms_.load()); }

private:
    std::atomic<long long> slept_ms_{0};
};

}  // namespace quali
