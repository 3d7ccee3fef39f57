#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "lad/detail/sha256.hpp"
#include "lad/detail/strings.hpp"
#include "lad/errors.hpp"

namespace lad {

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    Usage& operator+=(const Usage& other) {
        prompt_tokens += other.prompt_tokens;
        completion_tokens += other.completion_tokens;
        return *this;
    }
    std::uint64_t total() const { return prompt_tokens + completion_tokens; }
};

struct ImagePart {
    std::vector<std::uint8_t> bytes;
    std::string media_type;  // e.g. "image/png"
};

using RequestPart = std::variant<std::string, ImagePart>;

// One chat-completion request. Parts keep their order; image parts are only
// legal against vision-capable backends.
struct ModelRequest {
    std::string system_text;
    std::vector<RequestPart> user_parts;
    double temperature = 0.5;
    double top_p = 0.9;
    int max_output = 1024;

    bool has_image() const {
        for (const auto& p : user_parts)
            if (std::holds_alternative<ImagePart>(p)) return true;
        return false;
    }

    std::string joined_text() const {
        std::string out;
        for (const auto& p : user_parts) {
            if (const auto* text = std::get_if<std::string>(&p)) {
                if (!out.empty()) out += '\n';
                out += *text;
            }
        }
        return out;
    }

    void validate() const {
        if (user_parts.empty()) throw InvalidInputError("request has no user parts");
        if (temperature < 0.0 || temperature > 1.0)
            throw InvalidInputError("temperature out of [0,1]: " + std::to_string(temperature));
        if (top_p <= 0.0 || top_p > 1.0)
            throw InvalidInputError("top_p out of (0,1]: " + std::to_string(top_p));
        if (max_output <= 0) throw InvalidInputError("max_output must be positive");
        for (const auto& p : user_parts) {
            if (const auto* img = std::get_if<ImagePart>(&p)) {
                if (img->bytes.empty()) throw InvalidInputError("image part has no bytes");
                if (img->media_type.empty()) throw InvalidInputError("image part has no media type");
            }
        }
    }
};

struct ModelResponse {
    std::string text;
    Usage usage;
    std::string backend_name;
};

struct BackendDescriptor {
    std::string name;
    bool vision_capable = false;
    std::map<std::string, std::string> endpoint_config;  // sorted keys; base address, credential env, ...
};

// Stable digest over every request field. Image bytes are hashed, text is
// length-prefixed so field boundaries cannot collide.
inline std::string fingerprint(const ModelRequest& request) {
    detail::Sha256 h;
    auto put_len = [&h](std::uint64_t n) {
        std::uint8_t bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<std::uint8_t>(n >> (56 - 8 * i));
        h.update(bytes, 8);
    };
    auto put = [&](std::string_view tag, std::string_view payload) {
        h.update(tag);
        put_len(payload.size());
        h.update(payload);
    };
    put("sys", request.system_text);
    for (const auto& part : request.user_parts) {
        if (const auto* text = std::get_if<std::string>(&part)) {
            put("txt", *text);
        } else {
            const auto& img = std::get<ImagePart>(part);
            put("imt", img.media_type);
            h.update("img");
            put_len(img.bytes.size());
            h.update(img.bytes.data(), img.bytes.size());
        }
    }
    put("tmp", detail::format_fixed(request.temperature, 6));
    put("top", detail::format_fixed(request.top_p, 6));
    put("max", std::to_string(request.max_output));
    return h.hex_digest();
}

// Variant that also binds the backend identity. endpoint_config is a sorted
// map, so key insertion order cannot change the digest.
inline std::string fingerprint(const ModelRequest& request, const BackendDescriptor& backend) {
    detail::Sha256 h;
    h.update(fingerprint(request));
    h.update("bk:");
    h.update(backend.name);
    h.update(backend.vision_capable ? "/v1" : "/v0");
    for (const auto& [key, value] : backend.endpoint_config) {
        h.update("\x1f");
        h.update(key);
        h.update("\x1e");
        h.update(value);
    }
    return h.hex_digest();
}

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual const BackendDescriptor& descriptor() const = 0;

    // Raw completion. Throws TransportError / EmptyResponseError; never
    // checks vision capability (that is the gateway's job).
    virtual ModelResponse complete_raw(const ModelRequest& request) = 0;
};

// Single completion against one backend. Validates the request, enforces the
// vision capability precondition and trims trailing whitespace only.
inline ModelResponse complete(ChatBackend& backend, const ModelRequest& request) {
    request.validate();
    const auto& desc = backend.descriptor();
    if (request.has_image() && !desc.vision_capable)
        throw CapabilityError("image part sent to text-only backend '" + desc.name + "'");
    ModelResponse response = backend.complete_raw(request);
    response.text = detail::trim_trailing(response.text);
    response.backend_name = desc.name;
    if (response.text.empty()) throw EmptyResponseError("backend '" + desc.name + "' returned no text");
    return response;
}

// Backoff schedule: 1s base, doubled per attempt, +-20% jitter, 30s cap.
struct RetryPolicy {
    std::chrono::milliseconds base_delay{1000};
    double factor = 2.0;
    double jitter = 0.2;
    std::chrono::milliseconds max_delay{30000};
    std::function<void(std::chrono::milliseconds)> sleeper;  // injectable for tests
    std::uint64_t jitter_seed = 0;                           // 0 -> nondeterministic

    std::chrono::milliseconds delay_for_attempt(int attempt, std::mt19937_64& rng) const {
        double ms = static_cast<double>(base_delay.count());
        for (int i = 1; i < attempt; ++i) ms *= factor;
        ms = std::min(ms, static_cast<double>(max_delay.count()));
        if (jitter > 0.0) {
            std::uniform_real_distribution<double> dist(1.0 - jitter, 1.0 + jitter);
            ms *= dist(rng);
        }
        ms = std::min(ms, static_cast<double>(max_delay.count()));
        return std::chrono::milliseconds(static_cast<long long>(ms));
    }
};

// Retries only transient failures (transport, empty response). Capability
// and validation errors surface immediately.
inline ModelResponse complete_with_retry(ChatBackend& backend, const ModelRequest& request, int max_attempts,
                                         const RetryPolicy& policy = {}) {
    if (max_attempts < 1) throw InvalidInputError("max_attempts must be >= 1");
    std::mt19937_64 rng(policy.jitter_seed ? policy.jitter_seed : std::random_device{}());
    auto sleep_fn = policy.sleeper ? policy.sleeper : [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
    for (int attempt = 1;; ++attempt) {
        try {
            return complete(backend, request);
        } catch (const TransportError&) {
            if (attempt >= max_attempts) throw;
        } catch (const EmptyResponseError&) {
            if (attempt >= max_attempts) throw;
        }
        sleep_fn(policy.delay_for_attempt(attempt, rng));
    }
}

// Sliding-window limiter: at most `rpm` acquisitions per 60s window.
// rpm <= 0 disables limiting. Clock and sleeper are injectable for tests.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit RateLimiter(int rpm, Clock clock = nullptr, Sleeper sleeper = nullptr)
        : rpm_(rpm),
          clock_(clock ? std::move(clock) : [] { return std::chrono::steady_clock::now(); }),
          sleeper_(sleeper ? std::move(sleeper) : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

    void acquire() {
        if (rpm_ <= 0) return;
        for (;;) {
            std::chrono::milliseconds wait{0};
            {
                std::lock_guard<std::mutex> lock(mu_);
                auto now = clock_();
                auto window_start = now - std::chrono::seconds(60);
                while (!history_.empty() && history_.front() <= window_start) history_.pop_front();
                if (static_cast<int>(history_.size()) < rpm_) {
                    history_.push_back(now);
                    return;
                }
                wait = std::chrono::duration_cast<std::chrono::milliseconds>(history_.front() - window_start) +
                       std::chrono::milliseconds(1);
            }
            sleeper_(wait);
        }
    }

    // True iff a call at `now` would be admitted without waiting.
    bool would_admit() {
        if (rpm_ <= 0) return true;
        std::lock_guard<std::mutex> lock(mu_);
        auto window_start = clock_() - std::chrono::seconds(60);
        std::size_t in_window = 0;
        for (auto t : history_)
            if (t > window_start) ++in_window;
        return static_cast<int>(in_window) < rpm_;
    }

private:
    int rpm_;
    Clock clock_;
    Sleeper sleeper_;
    std::mutex mu_;
    std::deque<std::chrono::steady_clock::time_point> history_;
};

}  // namespace lad
