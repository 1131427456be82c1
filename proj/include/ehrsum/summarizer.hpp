/**
 * @file summarizer.hpp
 * @brief Evidence-grounded summaries over a clinical context package.
 *
 * Two backends produce the same SummaryDocument shape: a deterministic
 * template renderer, and an adapter for an external generative endpoint whose
 * output is accepted only if validate_grounding finds nothing wrong with it.
 */

#pragma once

#include "ehrsum/normalizer.hpp"

namespace ehrsum::summary {

using ccp::ClinicalContextPackage;
using ccp::EvidenceItem;
using ccp::SectionKey;

enum class StatementKind { Fact, Trend, MissingData };

std::string_view to_string(StatementKind kind);

struct NumericClaim {
    std::string value;  ///< as stated; compared after canonical number formatting
    std::string unit;
    std::string evidence_id;

    friend bool operator==(const NumericClaim&, const NumericClaim&) = default;
};

struct SummaryStatement {
    std::string text;
    SectionKey section{};
    StatementKind kind = StatementKind::Fact;
    std::vector<std::string> evidence_refs;
    std::vector<NumericClaim> numeric_claims;

    friend bool operator==(const SummaryStatement&, const SummaryStatement&) = default;
};

struct SummarySection {
    SectionKey key{};
    std::vector<SummaryStatement> statements;

    friend bool operator==(const SummarySection&, const SummarySection&) = default;
};

struct BackendKind {
    enum class Type { Deterministic, Hosted };

    Type type = Type::Deterministic;
    std::string endpoint;
    std::string model;

    static BackendKind deterministic() { return {}; }
    /// @throws std::invalid_argument for an empty endpoint.
    static BackendKind hosted(std::string endpoint, std::string model);

    friend bool operator==(const BackendKind&, const BackendKind&) = default;
};

enum class ViolationCategory { UnresolvedEvidence, ValueMismatch, RecommendationLanguage, ForeignContent };

std::string_view to_string(ViolationCategory category);

struct GroundingViolation {
    std::size_t statement_index = 0;  ///< position in SummaryDocument::statements() order
    ViolationCategory category{};
    std::string detail;

    friend bool operator==(const GroundingViolation&, const GroundingViolation&) = default;
};

/// Why a hosted result was replaced by the deterministic rendering.
struct FallbackRecord {
    std::string reason;
    std::vector<GroundingViolation> violations;

    friend bool operator==(const FallbackRecord&, const FallbackRecord&) = default;
};

inline constexpr std::string_view kDefaultDisclaimer =
    "Generated from the retrieved record only; it does not replace clinical judgment. "
    "Verify against the source chart before acting.";

struct SummaryDocument {
    std::string patient_header;
    std::vector<SummarySection> sections;  ///< canonical SectionKey order
    std::string disclaimer;
    std::string ccp_fingerprint;
    BackendKind backend;
    Instant generated_at{};
    std::optional<FallbackRecord> fallback;

    /// All statements in document order; indices match GroundingViolation::statement_index.
    std::vector<const SummaryStatement*> statements() const;

    friend bool operator==(const SummaryDocument&, const SummaryDocument&) = default;
};

Json to_json(const SummaryDocument& doc);
/// @throws std::invalid_argument on schema violations.
SummaryDocument summary_from_json(const Json& json);

std::string render_text(const SummaryDocument& doc);
std::string render_markdown(const SummaryDocument& doc);

enum class RenderMode { OmitEmpty, NoticeEmpty };

/// Fact line for one item, e.g. "Hemoglobin A1c: 7.2 %, final — 2024-06-01".
std::string render_fact(const EvidenceItem& item);
std::string missing_notice(SectionKey key);
std::string unavailable_notice(SectionKey key);

SummaryDocument summarize_deterministic(const ClinicalContextPackage& ccp, RenderMode mode,
                                        std::string_view disclaimer = kDefaultDisclaimer);

// -----------------------------------------------------------------------------
// Grounding
// -----------------------------------------------------------------------------

const std::vector<std::string>& default_recommendation_lexicon();

/// The document was not built from this package.
class FingerprintMismatch : public std::runtime_error {
public:
    FingerprintMismatch() : std::runtime_error("summary fingerprint does not match the context package") {}
};

/// Empty iff every statement is supported by, and cites, evidence in `ccp`.
std::vector<GroundingViolation> validate_grounding(
    const SummaryDocument& doc, const ClinicalContextPackage& ccp,
    const std::vector<std::string>& lexicon = default_recommendation_lexicon());

// -----------------------------------------------------------------------------
// Hosted backend
// -----------------------------------------------------------------------------

struct GuardrailPrompt {
    std::vector<std::string> constraints;

    static GuardrailPrompt defaults();
    std::string text() const;
};

/// Unreachable, timed out or malformed backend. Callers fall back to the deterministic backend.
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Request/response exchange with a generative endpoint. Must accept concurrent calls.
class SummaryBackendClient {
public:
    virtual ~SummaryBackendClient() = default;
    /// Request {model, instructions, ccp}; response {sections: [{key, statements: [...]}]}.
    virtual Json complete(const Json& request) = 0;
};

/// POSTs the request as JSON to the configured endpoint.
class HttpSummaryBackend final : public SummaryBackendClient {
public:
    HttpSummaryBackend(std::string endpoint, std::chrono::milliseconds timeout);
    Json complete(const Json& request) override;

private:
    std::string endpoint_;
    std::chrono::milliseconds timeout_;
};

/**
 * Summarizes through a hosted backend and validates the result.
 *
 * Any grounding violation (or a statement breaking the document invariants)
 * replaces the result with summarize_deterministic(ccp, fallback_mode) and
 * records the violations in SummaryDocument::fallback.
 *
 * @throws BackendError when the backend is unreachable or its response does not parse.
 */
SummaryDocument summarize_via_backend(const ClinicalContextPackage& ccp, const BackendKind& backend,
                                      SummaryBackendClient& client,
                                      const GuardrailPrompt& instructions = GuardrailPrompt::defaults(),
                                      RenderMode fallback_mode = RenderMode::NoticeEmpty,
                                      std::string_view disclaimer = kDefaultDisclaimer,
                                      const std::vector<std::string>& lexicon = default_recommendation_lexicon());

// -----------------------------------------------------------------------------
// Follow-up questions
// -----------------------------------------------------------------------------

struct GroundedAnswer {
    std::string text;
    std::vector<std::string> evidence_refs;
    bool refused = false;
    std::optional<std::string> refusal_reason;
};

Json to_json(const GroundedAnswer& answer);

inline constexpr std::string_view kRefusalText =
    "The retrieved record does not contain information to answer this question.";

/// Keyword classes that widen a question term to the names a chart uses.
struct QueryVocabulary {
    /// trigger token -> tokens or code literals it also matches
    std::map<std::string, std::vector<std::string>> expansions;

    static const QueryVocabulary& defaults();
};

GroundedAnswer answer_question(const ClinicalContextPackage& ccp, std::string_view question,
                               const QueryVocabulary& vocabulary = QueryVocabulary::defaults());

}  // namespace ehrsum::summary
