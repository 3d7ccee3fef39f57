#pragma once

#include <string>
#include <string_view>

namespace lad::prompts {

// Prompt texts are part of the artifact's contract surface: stage parsers
// depend on the output formats requested here. Bump the version whenever any
// wording changes so cached responses and traces never mix prompt
// generations.
inline constexpr std::string_view kPromptVersion = "prompts/1";

enum class Language { en, zh };

inline const char* language_name(Language lang) { return lang == Language::en ? "en" : "zh"; }

inline std::string language_directive(Language lang) {
    return lang == Language::en ? "Respond in English." : "Respond in Simplified Chinese.";
}

// ---- Stage I -------------------------------------------------------------

inline std::string describe_system() {
    return "You analyze images that carry implied meanings such as metaphor, symbolism, "
           "emotion, or cultural reference.";
}

inline std::string describe_user(Language lang) {
    return "Look at the attached image and write a detailed description of what it shows. "
           "Cover, where present: any readable text inside the image, the prominent colors, "
           "the overall layout and composition, and the salient objects, figures, or entities. "
           "Describe only what is visible; do not interpret the meaning yet. " +
           language_directive(lang);
}

inline std::string keywords_system() { return describe_system(); }

inline std::string keywords_user(const std::string& description, Language lang) {
    return "Below is a description of an image.\n\nDescription:\n" + description +
           "\n\nCondense it into about 7 keywords that would help interpret the image's implied "
           "meaning. Include the perceived emotion, the domain or context (for example political, "
           "social, cultural), any rhetorical device the image suggests (irony, exaggeration, "
           "contrast, ...), and the key entities or in-image text.\n"
           "Output exactly one line: the keywords separated by semicolons, nothing else. " +
           language_directive(lang);
}

// ---- Stage II ------------------------------------------------------------

inline std::string plan_system() {
    return "You prepare research questions that uncover the hidden meaning of an image.";
}

inline std::string plan_user(const std::string& keyword_line, Language lang) {
    return "An image produced these keywords:\n" + keyword_line +
           "\n\nWrite exactly 5 search questions that would uncover latent meanings, cultural "
           "references, or background information relevant to what the image implies. Order them "
           "from the most literal or factual (question 1) to the most cultural or contextual "
           "(question 5).\n"
           "Output 5 numbered lines, one question per line, like:\n"
           "1. <question>\n2. <question>\n3. <question>\n4. <question>\n5. <question>\n" +
           language_directive(lang);
}

inline std::string judge_route_system() {
    return "You decide whether a question needs a live web search or can be answered from general "
           "knowledge.";
}

inline std::string judge_route_user(const std::string& question) {
    return "Question: " + question +
           "\n\nScore how much this question needs up-to-date or niche information from the web, "
           "considering: how popular or common the required knowledge is, whether it concerns "
           "real-time or recent events, and whether it involves internet slang or meme culture.\n"
           "Reply with a single line 'Confidence: <number between 0 and 1>' where higher means the "
           "web is needed, followed by one short line of reasoning.";
}

inline std::string model_search_system() {
    return "You answer questions from your own knowledge, concisely and factually.";
}

inline std::string model_search_user(const std::string& question) {
    return "Answer the following question from your existing knowledge. Be concise (a short "
           "paragraph) and state the widely accepted interpretation or facts.\n\nQuestion: " +
           question;
}

inline std::string rank_system() {
    return "You rank evidence by how much it helps explain an image's implied meaning.";
}

inline std::string rank_user(const std::string& description, const std::string& numbered_pairs, int select_count) {
    return "Image description:\n" + description + "\n\nQuestion-answer pairs:\n" + numbered_pairs +
           "\nRank these pairs by relevance to the core implication of the image and pick the top " +
           std::to_string(select_count) +
           ".\nReply with a line 'Ranking: [i, j, ...]' listing pair numbers from most to least "
           "relevant, then a line 'Reason: <why>'.";
}

inline std::string refine_system() {
    return "You merge several pieces of research into one short, dense briefing.";
}

inline std::string refine_user(const std::string& selected_pairs, const std::string& rank_reason, Language lang) {
    std::string out = "Consolidate the following question-answer pairs into a single concise summary "
                      "that will serve as background knowledge for interpreting an image. Remove "
                      "irrelevant or redundant information, reconcile differences, and keep concrete "
                      "facts.\n\nPairs:\n" + selected_pairs;
    if (!rank_reason.empty()) out += "\nRanking rationale: " + rank_reason + "\n";
    out += "\nWrite only the summary text. " + language_directive(lang);
    return out;
}

// ---- WebSearch sub-procedure ----------------------------------------------

inline std::string rewrite_system() {
    return "You plan web research by breaking a question into smaller sub-questions.";
}

inline std::string rewrite_user(const std::string& question, int max_nodes) {
    return "Break the following search question into at most " + std::to_string(max_nodes) +
           " smaller sub-questions that can each be answered with one web search. If a sub-question "
           "needs the answer of an earlier one, reference it with the placeholder {ans:<id>} inside "
           "its text and declare the dependency as an edge. Keep the plan at most two levels deep.\n"
           "\nQuestion: " + question +
           "\n\nReply with only a JSON object of the form:\n"
           "{\"nodes\": [{\"id\": 1, \"text\": \"...\"}], \"edges\": [[1, 2]]}\n"
           "where an edge [a, b] means sub-question b depends on a's answer.";
}

inline std::string select_pages_system() {
    return "You pick the most promising web results to read in full.";
}

inline std::string select_pages_user(const std::string& question, const std::string& numbered_snippets,
                                     int per_question) {
    return "Search question: " + question + "\n\nResults:\n" + numbered_snippets +
           "\nPick up to " + std::to_string(per_question) +
           " URLs per sub-question that are most likely to answer the search question.\n"
           "Reply with one line per pick: 'URL: <url>'. Use only URLs from the list above.";
}

inline std::string web_summarize_system() {
    return "You write grounded answers from retrieved web material.";
}

inline std::string web_summarize_user(const std::string& question, const std::string& context) {
    return "Using only the material below, answer the search question in a short paragraph. If the "
           "material is insufficient, state what is known from it.\n\nQuestion: " + question +
           "\n\nMaterial:\n" + context + "\nWrite only the answer text.";
}

// ---- Stage III -------------------------------------------------------------

inline std::string reasoning_system() {
    return "You interpret the implied meaning of images: metaphor, symbolism, emotion, and cultural "
           "reference beyond the literal content.";
}

// ---- OSQ judging -----------------------------------------------------------

// The five scoring perspectives used by the judge.
inline constexpr const char* kJudgePerspectives[5] = {
    "Surface-level Information",
    "Emotional Expression",
    "Domain and Context",
    "Rhetorical Skills",
    "Deep Implications",
};

inline std::string judge_osq_system() {
    return "You are a strict grader of image-implication interpretations.";
}

inline std::string judge_osq_user(const std::string& gt_description, const std::string& gt_implication,
                                  const std::string& candidate) {
    std::string out =
        "Grade the candidate interpretation of an image against the ground truth.\n\n"
        "Ground-truth description:\n" + gt_description +
        "\n\nGround-truth implication:\n" + gt_implication +
        "\n\nCandidate interpretation:\n" + candidate +
        "\n\nAssess the candidate on five perspectives:\n";
    for (int i = 0; i < 5; ++i) out += std::to_string(i + 1) + ". " + kJudgePerspectives[i] + "\n";
    out += "For each perspective write one short judgment line. Then give a single overall score on "
           "a 1-5 scale (fractions allowed) where 5 means the candidate fully captures the "
           "ground-truth implication.\nEnd with exactly one line: 'Overall Score: <number>'.";
    return out;
}

}  // namespace lad::prompts
