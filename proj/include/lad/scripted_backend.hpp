#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "lad/gateway.hpp"

namespace lad {

// Deterministic backend for tests and offline runs. Resolution order for a
// request: exact fingerprint key, substring rules (first match wins), the
// ordered fallback queue, then the default reply.
//
// Substring rules exist because the fallback queue alone is order-sensitive:
// the search stage fans out concurrently, so replies keyed on request
// content are the only way to keep golden traces stable.
class ScriptedBackend : public ChatBackend {
public:
    enum class Outcome { ok, transport_error, empty_response };

    struct Reply {
        std::string text;
        Outcome outcome = Outcome::ok;
        Usage usage;  // zeros -> synthesize from text lengths
    };

    explicit ScriptedBackend(std::string name, bool vision_capable = true) {
        descriptor_.name = std::move(name);
        descriptor_.vision_capable = vision_capable;
        descriptor_.endpoint_config["kind"] = "scripted";
    }

    const BackendDescriptor& descriptor() const override { return descriptor_; }

    void script_exact(const std::string& request_fingerprint, Reply reply) {
        std::lock_guard<std::mutex> lock(mu_);
        exact_[request_fingerprint] = std::move(reply);
    }

    // max_uses < 0 means unlimited.
    void add_rule(std::string needle, Reply reply, int max_uses = -1) {
        std::lock_guard<std::mutex> lock(mu_);
        rules_.push_back(Rule{std::move(needle), std::move(reply), max_uses});
    }

    void push_fallback(Reply reply) {
        std::lock_guard<std::mutex> lock(mu_);
        fallback_.push_back(std::move(reply));
    }

    void set_default(Reply reply) {
        std::lock_guard<std::mutex> lock(mu_);
        default_ = std::move(reply);
        has_default_ = true;
    }

    // Next N calls fail with TransportError regardless of script.
    void fail_next(int n) { forced_failures_.store(n); }

    // Crash simulation for resumability tests: after `n` more calls every
    // call throws AbortInjected, which is not part of the Error hierarchy
    // and therefore tears the batch down like a dying process would.
    struct AbortInjected : std::exception {
        const char* what() const noexcept override { return "scripted abort injection"; }
    };
    void abort_after(int n) { abort_countdown_.store(n); }

    std::uint64_t call_count() const { return calls_.load(); }

    ModelResponse complete_raw(const ModelRequest& request) override {
        calls_.fetch_add(1);
        if (abort_countdown_.load() >= 0 && abort_countdown_.fetch_sub(1) <= 0) throw AbortInjected{};
        int remaining = forced_failures_.load();
        while (remaining > 0) {
            if (forced_failures_.compare_exchange_weak(remaining, remaining - 1))
                throw TransportError("scripted failure injection");
        }
        Reply reply = resolve(request);
        switch (reply.outcome) {
            case Outcome::transport_error:
                throw TransportError("scripted transport error");
            case Outcome::empty_response:
                return make_response(request, Reply{});
            case Outcome::ok:
                break;
        }
        return make_response(request, reply);
    }

private:
    struct Rule {
        std::string needle;
        Reply reply;
        int uses_left;
    };

    Reply resolve(const ModelRequest& request) {
        std::lock_guard<std::mutex> lock(mu_);
        if (auto it = exact_.find(fingerprint(request)); it != exact_.end()) return it->second;
        std::string text = request.system_text + "\n" + request.joined_text();
        for (auto& rule : rules_) {
            if (rule.uses_left == 0) continue;
            if (text.find(rule.needle) != std::string::npos) {
                if (rule.uses_left > 0) --rule.uses_left;
                return rule.reply;
            }
        }
        if (!fallback_.empty()) {
            Reply reply = fallback_.front();
            fallback_.pop_front();
            return reply;
        }
        if (has_default_) return default_;
        throw TransportError("scripted backend has no reply for request");
    }

    ModelResponse make_response(const ModelRequest& request, const Reply& reply) const {
        ModelResponse response;
        response.text = reply.text;
        response.backend_name = descriptor_.name;
        if (reply.usage.prompt_tokens == 0 && reply.usage.completion_tokens == 0) {
            // Deterministic pseudo-usage so token accounting stays testable.
            std::size_t prompt_chars = request.system_text.size();
            for (const auto& part : request.user_parts) {
                if (const auto* t = std::get_if<std::string>(&part))
                    prompt_chars += t->size();
                else
                    prompt_chars += 256;  // flat charge per image part
            }
            response.usage.prompt_tokens = prompt_chars / 4 + 1;
            response.usage.completion_tokens = reply.text.size() / 4 + 1;
        } else {
            response.usage = reply.usage;
        }
        return response;
    }

    BackendDescriptor descriptor_;
    mutable std::mutex mu_;
    std::map<std::string, Reply> exact_;
    std::vector<Rule> rules_;
    std::deque<Reply> fallback_;
    Reply default_;
    bool has_default_ = false;
    std::atomic<std::uint64_t> calls_{0};
    std::atomic<int> forced_failures_{0};
    std::atomic<int> abort_countdown_{-1};  // negative = disarmed
};

}  // namespace lad
