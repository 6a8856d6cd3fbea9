#pragma once

#include <string>
#include <string_view>
#include <utility>

namespace quali {

/// Holds a credential in memory only. The buffer is overwritten before it is
/// released, and the value is never streamed or serialized implicitly.
class SecretString {
public:
    SecretString() = default;
    explicit SecretString(std::string value) : value_(std::move(value)) {}
    SecretString(const SecretString&) = delete;
    SecretString& operator=(const SecretString&) = delete;
    // Moves copy and then wipe the source.
    SecretString(SecretString&& other) : value_(other.value_) { other.wipe(); }
    SecretString& operator=(SecretString&& other) {
        if (this != &other) {
            wipe();
            value_ = other.value_;
            other.wipe();
        }
        return *this;
    }
    ~SecretString() { wipe(); }

    std::string_view reveal() const noexcept { return value_; }
    bool empty() const noexcept { return value_.empty(); }
    std::size_t size() const noexcept { return value_.size(); }

    void wipe() noexcept {
        volatile char* p = value_.data();
        for (std::size_t i = 0; i < value_.size(); ++i) p[i] = 0;
        value_.clear();
    }

private:
    std::string value_;
};

}  // namespace quali
