#pragma once

#include <stdexcept>
#include <string>

namespace lad {

// Every failure the pipeline can surface carries a kind so callers can
// branch on policy (retry, fallback, drop) without string matching.
enum class ErrorKind {
    invalid_input,
    transport,
    capability,
    empty_response,
    parse,
    cardinality,
    too_short,
    perception,
    search_step,
    summary,
    extraction,
    judge,
    score_parse,
    too_few_raters,
    length_mismatch,
    manifest,
    missing_image,
    missing_traces,
    storage,
    config,
    provider,
    fetch,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_input: return "invalid_input";
        case ErrorKind::transport: return "transport";
        case ErrorKind::capability: return "capability";
        case ErrorKind::empty_response: return "empty_response";
        case ErrorKind::parse: return "parse";
        case ErrorKind::cardinality: return "cardinality";
        case ErrorKind::too_short: return "too_short";
        case ErrorKind::perception: return "perception";
        case ErrorKind::search_step: return "search_step";
        case ErrorKind::summary: return "summary";
        case ErrorKind::extraction: return "extraction";
        case ErrorKind::judge: return "judge";
        case ErrorKind::score_parse: return "score_parse";
        case ErrorKind::too_few_raters: return "too_few_raters";
        case ErrorKind::length_mismatch: return "length_mismatch";
        case ErrorKind::manifest: return "manifest";
        case ErrorKind::missing_image: return "missing_image";
        case ErrorKind::missing_traces: return "missing_traces";
        case ErrorKind::storage: return "storage";
        case ErrorKind::config: return "config";
        case ErrorKind::provider: return "provider";
        case ErrorKind::fetch: return "fetch";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Gateway-level failures.
struct TransportError : Error {
    explicit TransportError(const std::string& m) : Error(ErrorKind::transport, m) {}
};
struct CapabilityError : Error {
    explicit CapabilityError(const std::string& m) : Error(ErrorKind::capability, m) {}
};
struct EmptyResponseError : Error {
    explicit EmptyResponseError(const std::string& m) : Error(ErrorKind::empty_response, m) {}
};
struct InvalidInputError : Error {
    explicit InvalidInputError(const std::string& m) : Error(ErrorKind::invalid_input, m) {}
};

// Stage-level failures.
struct ParseError : Error {
    explicit ParseError(const std::string& m) : Error(ErrorKind::parse, m) {}
};
struct CardinalityError : Error {
    explicit CardinalityError(const std::string& m) : Error(ErrorKind::cardinality, m) {}
};
struct TooShortError : Error {
    explicit TooShortError(const std::string& m) : Error(ErrorKind::too_short, m) {}
};
struct PerceptionError : Error {
    explicit PerceptionError(const std::string& m) : Error(ErrorKind::perception, m) {}
};
struct SearchStepError : Error {
    explicit SearchStepError(const std::string& m) : Error(ErrorKind::search_step, m) {}
};
struct SummaryError : Error {
    explicit SummaryError(const std::string& m) : Error(ErrorKind::summary, m) {}
};
struct ExtractionError : Error {
    explicit ExtractionError(const std::string& m) : Error(ErrorKind::extraction, m) {}
};

// Evaluation failures.
struct JudgeError : Error {
    explicit JudgeError(const std::string& m) : Error(ErrorKind::judge, m) {}
};
struct ScoreParseError : Error {
    explicit ScoreParseError(const std::string& m) : Error(ErrorKind::score_parse, m) {}
};
struct TooFewRatersError : Error {
    explicit TooFewRatersError(const std::string& m) : Error(ErrorKind::too_few_raters, m) {}
};
struct LengthMismatchError : Error {
    explicit LengthMismatchError(const std::string& m) : Error(ErrorKind::length_mismatch, m) {}
};

// IO failures.
struct ManifestError : Error {
    explicit ManifestError(const std::string& m) : Error(ErrorKind::manifest, m) {}
};
struct MissingImageError : Error {
    explicit MissingImageError(const std::string& m) : Error(ErrorKind::missing_image, m) {}
};
struct MissingTracesError : Error {
    explicit MissingTracesError(const std::string& m) : Error(ErrorKind::missing_traces, m) {}
};
struct StorageError : Error {
    explicit StorageError(const std::string& m) : Error(ErrorKind::storage, m) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};

// Retrieval failures.
struct ProviderError : Error {
    explicit ProviderError(const std::string& m) : Error(ErrorKind::provider, m) {}
};
struct FetchError : Error {
    explicit FetchError(const std::string& m) : Error(ErrorKind::fetch, m) {}
};

}  // namespace lad
