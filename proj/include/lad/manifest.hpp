#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "lad/errors.hpp"
#include "lad/perception.hpp"
#include "lad/reasoning.hpp"

namespace lad {

inline constexpr std::string_view kManifestSchema = "lad-manifest/1";

enum class EntryTask { mcq, osq, both };

inline const char* to_string(EntryTask task) {
    switch (task) {
        case EntryTask::mcq: return "mcq";
        case EntryTask::osq: return "osq";
        case EntryTask::both: return "both";
    }
    return "?";
}

inline EntryTask parse_entry_task(const std::string& s) {
    if (s == "mcq") return EntryTask::mcq;
    if (s == "osq") return EntryTask::osq;
    if (s == "both") return EntryTask::both;
    throw InvalidInputError("unknown task kind '" + s + "'");
}

struct BenchmarkEntry {
    std::string id;
    std::filesystem::path image_path;  // resolved against the manifest dir
    Language language = Language::en;
    EntryTask task = EntryTask::mcq;
    std::string question;
    std::vector<std::string> options;     // 6 for MCQ-bearing entries
    std::optional<char> gold_label;       // 'A'..'F'
    std::optional<std::string> gt_description;
    std::optional<std::string> gt_implication;

    bool wants_mcq() const { return task == EntryTask::mcq || task == EntryTask::both; }
    bool wants_osq() const { return task == EntryTask::osq || task == EntryTask::both; }
};

// Media types the loader accepts, keyed by lowercase extension.
inline std::optional<std::string> media_type_for_extension(std::string ext) {
    ext = detail::to_lower(ext);
    if (!ext.empty() && ext.front() == '.') ext.erase(ext.begin());
    if (ext == "png") return "image/png";
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "webp") return "image/webp";
    if (ext == "gif") return "image/gif";
    if (ext == "bmp") return "image/bmp";
    return std::nullopt;
}

inline ImageInput load_image(const BenchmarkEntry& entry) {
    auto media_type = media_type_for_extension(entry.image_path.extension().string());
    if (!media_type)
        throw MissingImageError("entry '" + entry.id + "': unsupported image extension '" +
                                entry.image_path.extension().string() + "'");
    std::ifstream in(entry.image_path, std::ios::binary);
    if (!in) throw MissingImageError("entry '" + entry.id + "': cannot open " + entry.image_path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ImageInput image;
    image.id = entry.id;
    image.bytes = std::move(bytes);
    image.media_type = *media_type;
    image.language = entry.language;
    image.validate();
    return image;
}

// Line-oriented manifest: first line a header record carrying the schema
// version, then one JSON entry per line. Errors carry the offending line
// number and entry id.
inline std::vector<BenchmarkEntry> load_benchmark(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw ManifestError("cannot open manifest " + manifest_path.string());
    std::filesystem::path base_dir = manifest_path.parent_path();

    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& message) -> ManifestError {
        return ManifestError(manifest_path.filename().string() + ":" + std::to_string(line_no) + ": " + message);
    };

    if (!std::getline(in, line)) throw ManifestError("manifest is empty: " + manifest_path.string());
    line_no = 1;
    nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded() || !header.is_object() || header.value("schema", "") != kManifestSchema)
        throw fail(std::string("first line must be the header {\"schema\":\"") + std::string(kManifestSchema) +
                   "\"}");

    std::vector<BenchmarkEntry> entries;
    std::set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw fail("invalid JSON entry");

        BenchmarkEntry entry;
        try {
            entry.id = j.at("id").get<std::string>();
            entry.language = parse_language(j.at("language").get<std::string>());
            entry.task = parse_entry_task(j.at("task").get<std::string>());
            entry.image_path = base_dir / j.at("image").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("missing or mistyped field: ") + e.what());
        } catch (const InvalidInputError& e) {
            throw fail(e.what());
        }
        if (entry.id.empty()) throw fail("entry id is empty");
        if (!seen_ids.insert(entry.id).second) throw fail("duplicate entry id '" + entry.id + "'");

        entry.question = j.value("question", std::string());
        if (j.contains("options")) {
            if (!j["options"].is_array()) throw fail("entry '" + entry.id + "': options must be an array");
            for (const auto& option : j["options"]) {
                if (!option.is_string()) throw fail("entry '" + entry.id + "': options must be strings");
                entry.options.push_back(option.get<std::string>());
            }
        }
        if (j.contains("gold")) {
            std::string gold = j["gold"].get<std::string>();
            if (gold.size() != 1 || gold[0] < 'A' || gold[0] > 'F')
                throw fail("entry '" + entry.id + "': gold label must be A-F, got '" + gold + "'");
            entry.gold_label = gold[0];
        }
        if (j.contains("gt_description")) entry.gt_description = j["gt_description"].get<std::string>();
        if (j.contains("gt_implication")) entry.gt_implication = j["gt_implication"].get<std::string>();

        if (entry.wants_mcq()) {
            if (entry.options.size() != kMcqOptionCount)
                throw fail("entry '" + entry.id + "': MCQ needs exactly " + std::to_string(kMcqOptionCount) +
                           " options, got " + std::to_string(entry.options.size()));
            if (!entry.gold_label) throw fail("entry '" + entry.id + "': MCQ needs a gold label");
            if (entry.question.empty()) throw fail("entry '" + entry.id + "': MCQ needs a question");
        }
        if (entry.wants_osq()) {
            if (!entry.gt_description || entry.gt_description->empty())
                throw fail("entry '" + entry.id + "': OSQ needs gt_description");
            if (!entry.gt_implication || entry.gt_implication->empty())
                throw fail("entry '" + entry.id + "': OSQ needs gt_implication");
        }

        std::error_code ec;
        auto size = std::filesystem::file_size(entry.image_path, ec);
        if (ec) throw MissingImageError("entry '" + entry.id + "': image not found at " + entry.image_path.string());
        if (size == 0) throw MissingImageError("entry '" + entry.id + "': image is empty: " + entry.image_path.string());

        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace lad
