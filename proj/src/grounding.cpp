/**
 * @file grounding.cpp
 * @brief Statement-level grounding checks against the context package.
 */

#include "ehrsum/summarizer.hpp"
#include "grounding_checks.hpp"

#include <regex>
#include <set>

namespace ehrsum::summary {

namespace {

const std::regex& date_pattern() {
    static const std::regex re(R"(\d{4}-\d{2}-\d{2}(T[0-9:.]+(Z|[+-]\d{2}:\d{2}))?)");
    return re;
}

/// Canonical numbers mentioned in `text`, ignoring ISO dates.
std::set<std::string> numbers_in(const std::string& text) {
    static const std::regex number(R"(\d+(\.\d+)?)");
    const std::string stripped = std::regex_replace(text, date_pattern(), " ");
    std::set<std::string> out;
    for (auto it = std::sregex_iterator(stripped.begin(), stripped.end(), number); it != std::sregex_iterator(); ++it) {
        if (auto c = canonical_number(it->str())) out.insert(*c);
    }
    return out;
}

std::vector<std::string> dates_in(const std::string& text) {
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), date_pattern()); it != std::sregex_iterator(); ++it) {
        out.push_back(it->str().substr(0, 10));
    }
    return out;
}

/// Every string an item contributes to a statement about it.
std::vector<std::string> item_strings(const EvidenceItem& item) {
    std::vector<std::string> out{item.display, std::string(ccp::section_label(item.section)),
                                 std::to_string(item.duplicate_count)};
    if (item.status) out.push_back(*item.status);
    for (const auto& [name, value] : item.attributes) out.push_back(value);
    for (const auto& c : item.codes) {
        out.push_back(c.code);
        out.push_back(c.display);
    }
    return out;
}

bool is_content_token(const std::string& token) {
    static const std::set<std::string> kStop{
        "the", "and", "for", "with", "from", "was", "were", "has", "have", "had", "this", "that", "are",
        "not", "recorded", "times", "time", "on", "of", "in", "at", "patient", "criticality",
        "rising", "falling", "unchanged", "single", "value", "values",
    };
    if (token.size() < 3 || kStop.count(token)) return false;
    for (char c : token) {
        if (std::isalpha(static_cast<unsigned char>(c))) return true;
    }
    return false;
}

void erase_all(std::string& haystack, const std::string& needle) {
    if (needle.empty()) return;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos)) {
        haystack.replace(pos, needle.size(), " ");
    }
}

class Collector {
public:
    explicit Collector(std::vector<GroundingViolation>& out) : out_(out) {}

    void add(std::size_t index, ViolationCategory category, std::string detail) {
        for (auto& v : out_) {
            if (v.statement_index == index && v.category == category) {
                v.detail += "; " + detail;
                return;
            }
        }
        out_.push_back({index, category, std::move(detail)});
    }

private:
    std::vector<GroundingViolation>& out_;
};

}  // namespace

namespace detail {

std::vector<std::string> numeric_issues(const SummaryStatement& s, const ClinicalContextPackage& ccp) {
    std::vector<std::string> issues;
    for (const auto& claim : s.numeric_claims) {
        const auto* item = ccp.find(claim.evidence_id);
        const bool referenced =
            std::find(s.evidence_refs.begin(), s.evidence_refs.end(), claim.evidence_id) != s.evidence_refs.end();
        if (!item) continue;  // reported as unresolved evidence
        if (!referenced) {
            issues.push_back("claim cites " + claim.evidence_id + " which the statement does not reference");
            continue;
        }
        const auto stated = canonical_number(claim.value);
        const auto actual_raw = item->attribute("value");
        const auto actual = actual_raw ? canonical_number(*actual_raw) : std::nullopt;
        if (!stated || !actual || *stated != *actual) {
            issues.push_back("claimed " + claim.value + " but " + claim.evidence_id + " has " +
                             actual_raw.value_or("no value"));
        } else if (!claim.unit.empty() && claim.unit != item->attribute("unit").value_or("")) {
            issues.push_back("claimed unit " + claim.unit + " differs from " + claim.evidence_id);
        }
    }

    std::set<std::string> allowed;
    for (const auto& ref : s.evidence_refs) {
        const auto* item = ccp.find(ref);
        if (!item) return issues;
        for (const auto& text : item_strings(*item)) {
            auto nums = numbers_in(text);
            allowed.insert(nums.begin(), nums.end());
        }
    }
    if (s.kind == StatementKind::MissingData) return issues;
    for (const auto& n : numbers_in(s.text)) {
        if (!allowed.count(n)) issues.push_back("number " + n + " not found in cited evidence");
    }
    return issues;
}

std::vector<std::string> date_issues(const SummaryStatement& s, const ClinicalContextPackage& ccp) {
    std::set<std::string> dates;
    for (const auto& ref : s.evidence_refs) {
        const auto* item = ccp.find(ref);
        if (!item) return {};
        if (item->effective_at) dates.insert(format_date(*item->effective_at));
        for (const auto& [name, value] : item->attributes) {
            for (auto& d : dates_in(value)) dates.insert(d);
        }
    }
    std::vector<std::string> issues;
    for (const auto& d : dates_in(s.text)) {
        if (!dates.count(d)) issues.push_back("date " + d + " not found in cited evidence");
    }
    return issues;
}

}  // namespace detail

const std::vector<std::string>& default_recommendation_lexicon() {
    static const std::vector<std::string> lexicon{
        "recommend", "should start", "should stop", "consider prescribing", "advise", "suggest initiating",
        "needs to be treated with",
    };
    return lexicon;
}

std::vector<GroundingViolation> validate_grounding(const SummaryDocument& doc, const ClinicalContextPackage& ccp,
                                                   const std::vector<std::string>& lexicon) {
    if (doc.ccp_fingerprint != ccp.fingerprint()) throw FingerprintMismatch();

    std::vector<GroundingViolation> violations;
    Collector collect(violations);
    const auto statements = doc.statements();
    const auto& synonyms = QueryVocabulary::defaults().expansions;

    for (std::size_t index = 0; index < statements.size(); ++index) {
        const SummaryStatement& s = *statements[index];
        const bool evidential = s.kind != StatementKind::MissingData;

        // (a) evidence resolution
        std::vector<const EvidenceItem*> cited;
        bool all_resolved = true;
        if (evidential && s.evidence_refs.empty()) {
            collect.add(index, ViolationCategory::UnresolvedEvidence, "statement cites no evidence");
            all_resolved = false;
        }
        if (!evidential && !s.evidence_refs.empty()) {
            collect.add(index, ViolationCategory::UnresolvedEvidence, "missing-data notice carries evidence references");
        }
        for (const auto& ref : s.evidence_refs) {
            if (const auto* item = ccp.find(ref)) {
                cited.push_back(item);
            } else {
                collect.add(index, ViolationCategory::UnresolvedEvidence, "unknown evidence id " + ref);
                all_resolved = false;
            }
        }

        // (b) numeric claims and numbers in the text; stated dates
        for (auto& issue : detail::numeric_issues(s, ccp)) {
            collect.add(index, ViolationCategory::ValueMismatch, std::move(issue));
        }
        if (evidential && all_resolved) {
            for (auto& issue : detail::date_issues(s, ccp)) {
                collect.add(index, ViolationCategory::ValueMismatch, std::move(issue));
            }
        }

        // (c) recommendation language outside quoted source content
        std::string scrubbed = to_lower(s.text);
        for (const auto* item : cited) {
            for (const auto& text : item_strings(*item)) erase_all(scrubbed, to_lower(text));
        }
        for (const auto& phrase : lexicon) {
            if (scrubbed.find(to_lower(phrase)) != std::string::npos) {
                collect.add(index, ViolationCategory::RecommendationLanguage, "contains '" + phrase + "'");
            }
        }

        // (d) content foreign to the cited items, or evidence claimed where the package has none
        const auto state = ccp.section(s.section).state;
        if (evidential && state != ccp::SectionState::Populated) {
            collect.add(index, ViolationCategory::ForeignContent,
                        std::string("evidence statement in ") + std::string(ccp::to_string(state)) + " section");
        }
        if (!evidential && state == ccp::SectionState::Populated) {
            collect.add(index, ViolationCategory::ForeignContent, "missing-data notice for a populated section");
        }
        if (s.kind == StatementKind::Fact && all_resolved && !cited.empty()) {
            std::set<std::string> source_tokens;
            for (const auto* item : cited) {
                for (const auto& text : item_strings(*item)) {
                    for (auto& t : tokenize(text)) source_tokens.insert(std::move(t));
                }
            }
            bool any_content = false;
            bool overlap = false;
            for (const auto& t : tokenize(s.text)) {
                if (!is_content_token(t)) continue;
                any_content = true;
                if (source_tokens.count(t)) overlap = true;
                // accept the usual clinical abbreviations of a cited display
                if (const auto it = synonyms.find(t); it != synonyms.end()) {
                    for (const auto& alt : it->second) overlap = overlap || source_tokens.count(alt) > 0;
                }
                if (overlap) break;
            }
            if (any_content && !overlap) {
                collect.add(index, ViolationCategory::ForeignContent, "text shares no terms with its cited evidence");
            }
        }
    }
    return violations;
}

}  // namespace ehrsum::summary
