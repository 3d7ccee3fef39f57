#pragma once

// Shared builders for the test suites: synthetic images, manifests, and the
// scripted run configuration that drives the offline golden pipeline.

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "lad/lad.hpp"

namespace lad::testing {

inline ImageInput make_image(const std::string& id, Language lang = Language::en, std::uint8_t seed = 1) {
    ImageInput image;
    image.id = id;
    image.media_type = "image/png";
    image.bytes = {0x89, 0x50, 0x4e, 0x47, seed,
                   static_cast<std::uint8_t>(seed + 1), static_cast<std::uint8_t>(seed + 2)};
    image.language = lang;
    return image;
}

inline ModelRequest make_text_request(const std::string& text) {
    ModelRequest request;
    request.system_text = "system";
    request.user_parts.emplace_back(text);
    return request;
}

// RoleClient over a ScriptedBackend, the way the pipeline builds one.
inline RoleClient client_for(ScriptedBackend& backend) {
    return [&backend](const ModelRequest& request) { return complete(backend, request); };
}

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& tag) {
        path = std::filesystem::temp_directory_path() /
               ("lad-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

private:
    static int& counter() {
        static int n = 0;
        return n;
    }
};

inline std::filesystem::path write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
    return path;
}

// Six options with C as the gold answer; gt fields included so entries can
// serve either task.
inline nlohmann::json manifest_entry_json(const std::string& id, const std::string& lang,
                                          const std::string& task, const std::string& image_rel) {
    nlohmann::json entry{{"id", id},
                         {"language", lang},
                         {"task", task},
                         {"image", image_rel},
                         {"question", "What is the implication in this image? [" + id + "]"}};
    if (task == "mcq" || task == "both") {
        entry["options"] = {"A literal reading",    "A joke about weather", "A satire of overwork",
                            "A celebration of art", "A travel advert",      "A cooking tip"};
        entry["gold"] = "C";
    }
    if (task == "osq" || task == "both") {
        entry["gt_description"] = "A person melting into a desk under a giant clock, office colors muted.";
        entry["gt_implication"] = "The image criticizes relentless overwork consuming personal life.";
    }
    return entry;
}

// Writes images/<id>.png stubs plus the manifest file; returns the manifest
// path. Entry ids are generated as <lang>-NNN.
inline std::filesystem::path write_manifest(const std::filesystem::path& dir, int count,
                                            const std::string& task = "both") {
    std::string manifest = nlohmann::json{{"schema", std::string(kManifestSchema)}}.dump() + "\n";
    for (int i = 0; i < count; ++i) {
        std::string lang = i % 2 == 0 ? "en" : "zh";
        std::string id = lang + "-" + std::to_string(100 + i);
        std::string rel = "images/" + id + ".png";
        std::string bytes = "PNGDATA-" + id;  // loader checks presence, not pixel validity
        write_file(dir / rel, bytes);
        manifest += manifest_entry_json(id, lang, task, rel).dump() + "\n";
    }
    return write_file(dir / "manifest.jsonl", manifest);
}

// Scripted replies for every stage the pipeline touches. Rules match in
// order, so stage-template phrases (each unique to one prompt) come first
// and question-content rules last: later-stage prompts quote the question
// text and would otherwise be shadowed by the judge rules.
inline nlohmann::json scripted_script_json() {
    nlohmann::json rules = nlohmann::json::array();
    auto rule = [&rules](const std::string& contains, const std::string& text) {
        rules.push_back({{"contains", contains}, {"text", text}});
    };
    rule("write a detailed description",
         "A tired office worker melts into a desk beneath an enormous wall clock. Cool blue tones dominate; a "
         "banner reads OVERTIME FOREVER while coworkers shuffle past in identical grey suits.");
    rule("Condense it into about 7 keywords",
         "exhaustion; overwork; office culture; giant clock; blue tones; satire; conformity");
    rule("Write exactly 5 search questions",
         "1. What does a giant clock symbolize in workplace imagery?\n"
         "2. What is the OVERTIME FOREVER meme about?\n"
         "3. How do muted blue tones affect the mood of an illustration?\n"
         "4. What social commentary is common in office satire cartoons?\n"
         "5. How does conformity imagery relate to critiques of corporate culture?\n");
    rule("Break the following search question",
         "{\"nodes\": [{\"id\": 1, \"text\": \"origin of the OVERTIME FOREVER slogan\"}, "
         "{\"id\": 2, \"text\": \"how {ans:1} spread as a meme\"}], \"edges\": [[1, 2]]}");
    rule("Pick up to", "URL: https://stub.example/origin-of-the-overtime-forever-slogan/1\n"
                       "URL: https://stub.example/origin-of-the-overtime-forever-slogan/2\n");
    rule("Using only the material below",
         "The slogan spread as an ironic badge of burnout culture, mocking workplaces that celebrate unpaid "
         "overtime.");
    rule("Answer the following question from your existing knowledge",
         "In workplace imagery such symbols typically stand for lost personal time and pressure to conform.");
    rule("Rank these pairs", "Ranking: [2, 1, 3]\nReason: the meme context is the most specific evidence.");
    rule("Consolidate the following question-answer pairs",
         "Clocks in office satire stand for stolen time; the OVERTIME FOREVER slogan is an ironic burnout badge; "
         "muted blues and identical suits signal draining conformity.");
    rule("give your final choice",
         "<think>The clock, the slogan and the grey suits all point at mocking overwork, matching option C."
         "</think>Answer: C");
    rule("write your final interpretation",
         "<think>Combining the symbols with the background knowledge, the image condemns a culture that "
         "normalizes overtime.</think>The image implies that relentless overwork hollows out workers' lives.");
    // Judge rules: one web-routed question per entry, the rest model-routed.
    rule("OVERTIME FOREVER meme", "Confidence: 0.9\nThis is internet slang tied to recent meme culture.");
    rule("Score how much this question", "Confidence: 0.2\nGeneral world knowledge suffices.");
    return nlohmann::json{{"rules", rules}};
}

inline nlohmann::json scripted_config_json(bool search_enabled = true, const std::string& cache_dir = "") {
    nlohmann::json doc{
        {"schema", std::string(kConfigSchema)},
        {"backends",
         nlohmann::json::array({nlohmann::json{{"name", "scripted-main"},
                                               {"type", "scripted"},
                                               {"vision_capable", true},
                                               {"script", scripted_script_json()}}})},
        {"roles",
         {{"perceiver", "scripted-main"},
          {"planner", "scripted-main"},
          {"judge_router", "scripted-main"},
          {"searcher_summarizer", "scripted-main"},
          {"reasoner", "scripted-main"},
          {"evaluator", "scripted-main"}}},
        {"stages", {{"search_enabled", search_enabled}}},
        {"web_search", {{"provider", {{"type", "stub"}}}, {"fetcher", {{"type", "stub"}}}}},
    };
    if (!cache_dir.empty()) doc["cache_dir"] = cache_dir;
    return doc;
}

}  // namespace lad::testing
