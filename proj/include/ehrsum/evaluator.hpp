/**
 * @file evaluator.hpp
 * @brief Coverage, omission risk and error taxonomy for a (package, summary) pair.
 *
 * The context package is the reference: every check asks whether the summary
 * faithfully reflects what the package holds.
 */

#pragma once

#include "ehrsum/summarizer.hpp"

namespace ehrsum::eval {

using ccp::ClinicalContextPackage;
using ccp::EvidenceItem;
using ccp::SectionKey;
using summary::SummaryDocument;

/// Predicate over EvidenceItems. Empty lists impose no constraint.
struct DomainMatcher {
    SectionKey section{};
    std::vector<std::string> statuses;
    std::vector<std::string> keywords;  ///< lowercase; matched against display tokens and code literals
    bool latest_per_code = false;       ///< only the newest dated item per primary code

    bool matches(const EvidenceItem& item, const ClinicalContextPackage& ccp) const;
};

struct ChecklistDomain {
    std::string label;
    bool safety_critical = false;
    DomainMatcher matcher;
};

struct Checklist {
    std::vector<ChecklistDomain> domains;

    static Checklist defaults();
    static Checklist from_json(const Json& json);
    Json to_json() const;
};

enum class ErrorCategory { Omission, IncorrectValue, IncorrectTemporalContext, HallucinationInference };

std::string_view to_string(ErrorCategory category);

struct EvaluationError {
    ErrorCategory category{};
    std::string ref;  ///< "statement:{index}" or an evidence id
    std::string detail;
};

struct DomainCoverage {
    std::string domain;
    std::optional<double> coverage;  ///< nullopt when the package has no matching evidence
    int matched = 0;
    int cited = 0;
};

struct OmissionFinding {
    std::string domain;
    std::string evidence_id;
};

struct EvaluationReport {
    std::vector<DomainCoverage> coverage;
    std::map<SectionKey, double> section_completeness;  ///< populated sections only
    std::vector<EvaluationError> errors;
    std::vector<OmissionFinding> omission_findings;
    bool overall_pass = true;

    Json to_json() const;
};

std::vector<DomainCoverage> coverage_score(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                                           const Checklist& checklist = Checklist::defaults());

std::vector<OmissionFinding> omission_risk(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                                           const Checklist& checklist = Checklist::defaults());

/// @throws summary::FingerprintMismatch when the summary was built from another package.
std::vector<EvaluationError> categorize_errors(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                                               const Checklist& checklist = Checklist::defaults());

/// All of the above. overall_pass holds iff there is no safety-critical omission and no hallucination.
EvaluationReport evaluate(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                          const Checklist& checklist = Checklist::defaults());

}  // namespace ehrsum::eval
