#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include "json.hpp"

#include "lad/detail/sha256.hpp"
#include "lad/errors.hpp"
#include "lad/gateway.hpp"

namespace lad {

// Disk cache of model responses keyed by request fingerprint. Entries are
// JSON files with a payload checksum; a mismatch is treated as a miss and
// the entry is evicted. Stores are atomic (temp file + rename) and
// idempotent.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw StorageError("cannot create cache dir " + dir_.string() + ": " + ec.message());
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::optional<ModelResponse> lookup(const std::string& fingerprint) {
        std::lock_guard<std::mutex> lock(mu_);
        auto path = entry_path(fingerprint);
        std::ifstream in(path);
        if (!in) return std::nullopt;
        nlohmann::json entry = nlohmann::json::parse(in, nullptr, false);
        if (entry.is_discarded() || !entry.is_object() || !entry.contains("response") ||
            !entry.contains("checksum")) {
            evict_locked(path, fingerprint);
            return std::nullopt;
        }
        std::string payload = entry["response"].dump();
        if (detail::sha256_hex(payload) != entry["checksum"].get<std::string>()) {
            evict_locked(path, fingerprint);
            return std::nullopt;
        }
        const auto& r = entry["response"];
        ModelResponse response;
        response.text = r.value("text", std::string());
        response.backend_name = r.value("backend", std::string());
        response.usage.prompt_tokens = r.value("prompt_tokens", 0ull);
        response.usage.completion_tokens = r.value("completion_tokens", 0ull);
        return response;
    }

    void store(const std::string& fingerprint, const ModelResponse& response) {
        std::lock_guard<std::mutex> lock(mu_);
        nlohmann::json payload{{"text", response.text},
                               {"backend", response.backend_name},
                               {"prompt_tokens", response.usage.prompt_tokens},
                               {"completion_tokens", response.usage.completion_tokens}};
        nlohmann::json entry{{"schema", "lad-cache/1"},
                             {"fingerprint", fingerprint},
                             {"checksum", detail::sha256_hex(payload.dump())},
                             {"response", payload}};
        auto path = entry_path(fingerprint);
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw StorageError("cannot write cache entry " + tmp.string());
            out << entry.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw StorageError("cannot publish cache entry " + path.string() + ": " + ec.message());
    }

    std::uint64_t evictions() const { return evictions_; }

private:
    std::filesystem::path entry_path(const std::string& fingerprint) const {
        // Two-level fanout keeps directories small on full-benchmark runs.
        std::string shard = fingerprint.size() >= 2 ? fingerprint.substr(0, 2) : std::string("xx");
        return dir_ / shard / (fingerprint + ".json");
    }

    void evict_locked(const std::filesystem::path& path, const std::string& fingerprint) {
        std::error_code ec;
        std::filesystem::remove(path, ec);
        ++evictions_;
        (void)fingerprint;
    }

    std::filesystem::path dir_;
    std::mutex mu_;
    std::uint64_t evictions_ = 0;
};

}  // namespace lad
