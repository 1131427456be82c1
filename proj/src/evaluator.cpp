/**
 * @file evaluator.cpp
 */

#include "ehrsum/evaluator.hpp"

#include "ehrsum/clinical_vocabulary.hpp"
#include "grounding_checks.hpp"

#include <algorithm>
#include <set>

namespace ehrsum::eval {

namespace {

constexpr std::array<std::string_view, 4> kCategoryNames{"Omission", "IncorrectValue", "IncorrectTemporalContext",
                                                         "HallucinationInference"};

std::set<std::string> cited_ids(const SummaryDocument& doc) {
    std::set<std::string> ids;
    for (const auto* s : doc.statements()) ids.insert(s->evidence_refs.begin(), s->evidence_refs.end());
    return ids;
}

template <typename Fn>
void for_each_match(const ClinicalContextPackage& ccp, const ChecklistDomain& domain, Fn&& fn) {
    for (const auto& item : ccp.section(domain.matcher.section).items) {
        if (domain.matcher.matches(item, ccp)) fn(item);
    }
}

ChecklistDomain domain(std::string label, SectionKey section, bool safety, std::vector<std::string> statuses = {},
                       std::vector<std::string> keywords = {}, bool latest = false) {
    return ChecklistDomain{std::move(label), safety, DomainMatcher{section, std::move(statuses), std::move(keywords), latest}};
}

bool same_code(const EvidenceItem& a, const EvidenceItem& b) {
    const auto* ca = a.primary_code();
    const auto* cb = b.primary_code();
    return ca && cb && !ca->code.empty() && ca->system == cb->system && ca->code == cb->code;
}

}  // namespace

std::string_view to_string(ErrorCategory category) {
    return kCategoryNames[static_cast<std::size_t>(category)];
}

bool DomainMatcher::matches(const EvidenceItem& item, const ClinicalContextPackage& ccp) const {
    if (item.section != section) return false;
    if (!statuses.empty() &&
        (!item.status || std::find(statuses.begin(), statuses.end(), to_lower(*item.status)) == statuses.end())) {
        return false;
    }
    if (!keywords.empty()) {
        std::set<std::string> terms;
        for (auto& t : tokenize(item.display)) terms.insert(std::move(t));
        for (const auto& c : item.codes) {
            terms.insert(to_lower(c.code));
            for (auto& t : tokenize(c.display)) terms.insert(std::move(t));
        }
        const bool hit = std::any_of(keywords.begin(), keywords.end(), [&](const std::string& k) { return terms.count(k) > 0; });
        if (!hit) return false;
    }
    if (latest_per_code) {
        if (!item.effective_at) return false;
        for (const auto& other : ccp.section(section).items) {
            if (same_code(item, other) && other.effective_at && *other.effective_at > *item.effective_at) return false;
        }
    }
    return true;
}

Checklist Checklist::defaults() {
    Checklist checklist;
    checklist.domains = {
        domain("demographics", SectionKey::PatientInformation, false),
        domain("active problems", SectionKey::Conditions, false, {"active", "recurrence", "relapse"}),
        domain("major historical problems", SectionKey::Conditions, false, {"inactive", "remission", "resolved"}),
        domain("current medications", SectionKey::Medications, false, {"active", "on-hold"}),
        domain("allergies", SectionKey::AllergiesAndIntolerances, true),
        domain("anticoagulant medications", SectionKey::Medications, true, {"active", "on-hold"},
               default_anticoagulant_terms()),
        domain("key recent laboratory and vital signs", SectionKey::LaboratoryAndVitalSigns, false, {}, {}, true),
        domain("major procedures", SectionKey::Procedures, false),
        domain("encounter context", SectionKey::Encounters, false),
        domain("preventive care", SectionKey::Immunizations, false),
    };
    return checklist;
}

Checklist Checklist::from_json(const Json& json) {
    Checklist checklist;
    for (const auto& d : json.at("domains")) {
        const auto section = ccp::section_from_string(d.at("section").get<std::string>());
        if (!section) throw std::invalid_argument("checklist: unknown section " + d.at("section").dump());
        ChecklistDomain entry;
        entry.label = d.at("label").get<std::string>();
        entry.safety_critical = d.value("safety_critical", false);
        entry.matcher.section = *section;
        entry.matcher.statuses = d.value("statuses", std::vector<std::string>{});
        entry.matcher.keywords = d.value("keywords", std::vector<std::string>{});
        for (auto& k : entry.matcher.keywords) k = to_lower(k);
        entry.matcher.latest_per_code = d.value("latest_per_code", false);
        checklist.domains.push_back(std::move(entry));
    }
    return checklist;
}

Json Checklist::to_json() const {
    Json domains = Json::array();
    for (const auto& d : this->domains) {
        domains.push_back(Json{{"label", d.label},
                               {"section", ccp::to_string(d.matcher.section)},
                               {"safety_critical", d.safety_critical},
                               {"statuses", d.matcher.statuses},
                               {"keywords", d.matcher.keywords},
                               {"latest_per_code", d.matcher.latest_per_code}});
    }
    return Json{{"domains", std::move(domains)}};
}

std::vector<DomainCoverage> coverage_score(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                                           const Checklist& checklist) {
    const auto cited = cited_ids(doc);
    std::vector<DomainCoverage> out;
    for (const auto& d : checklist.domains) {
        DomainCoverage c{d.label, std::nullopt, 0, 0};
        for_each_match(ccp, d, [&](const EvidenceItem& item) {
            ++c.matched;
            if (cited.count(item.evidence_id)) ++c.cited;
        });
        if (c.matched > 0) c.coverage = static_cast<double>(c.cited) / c.matched;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<OmissionFinding> omission_risk(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                                           const Checklist& checklist) {
    const auto cited = cited_ids(doc);
    std::vector<OmissionFinding> out;
    for (const auto& d : checklist.domains) {
        if (!d.safety_critical) continue;
        for_each_match(ccp, d, [&](const EvidenceItem& item) {
            if (!cited.count(item.evidence_id)) out.push_back({d.label, item.evidence_id});
        });
    }
    return out;
}

std::vector<EvaluationError> categorize_errors(const ClinicalContextPackage& ccp, const SummaryDocument& doc,
                                               const Checklist& checklist) {
    std::vector<EvaluationError> errors;
    auto add = [&](ErrorCategory category, std::string ref, std::string detail) {
        for (auto& e : errors) {
            if (e.category == category && e.ref == ref) {
                e.detail += "; " + detail;
                return;
            }
        }
        errors.push_back({category, std::move(ref), std::move(detail)});
    };

    const auto statements = doc.statements();
    for (const auto& v : summary::validate_grounding(doc, ccp)) {
        const std::string ref = "statement:" + std::to_string(v.statement_index);
        switch (v.category) {
            case summary::ViolationCategory::UnresolvedEvidence:
            case summary::ViolationCategory::ForeignContent:
            case summary::ViolationCategory::RecommendationLanguage:
                add(ErrorCategory::HallucinationInference, ref, v.detail);
                break;
            case summary::ViolationCategory::ValueMismatch: {
                const auto& s = *statements[v.statement_index];
                const auto numeric = summary::detail::numeric_issues(s, ccp);
                const auto dates = summary::detail::date_issues(s, ccp);
                if (!numeric.empty()) add(ErrorCategory::IncorrectValue, ref, numeric.front());
                if (!dates.empty()) add(ErrorCategory::IncorrectTemporalContext, ref, dates.front());
                break;
            }
        }
    }

    // Trend statements lead with the newest value for their code.
    for (std::size_t i = 0; i < statements.size(); ++i) {
        const auto& s = *statements[i];
        if (s.kind != summary::StatementKind::Trend || s.evidence_refs.empty()) continue;
        const auto* lead = ccp.find(s.evidence_refs.front());
        if (!lead || !lead->effective_at) continue;
        for (const auto& other : ccp.section(lead->section).items) {
            if (same_code(*lead, other) && other.effective_at && *other.effective_at > *lead->effective_at) {
                add(ErrorCategory::IncorrectTemporalContext, "statement:" + std::to_string(i),
                    "presents " + lead->evidence_id + " as most recent but " + other.evidence_id + " is newer");
                break;
            }
        }
    }

    const auto cited = cited_ids(doc);
    std::set<std::string> reported;
    for (const auto& d : checklist.domains) {
        for_each_match(ccp, d, [&](const EvidenceItem& item) {
            if (!cited.count(item.evidence_id) && reported.insert(item.evidence_id).second) {
                add(ErrorCategory::Omission, item.evidence_id, "not cited; checklist domain '" + d.label + "'");
            }
        });
    }
    return errors;
}

EvaluationReport evaluate(const ClinicalContextPackage& ccp, const SummaryDocument& doc, const Checklist& checklist) {
    EvaluationReport report;
    report.errors = categorize_errors(ccp, doc, checklist);
    report.coverage = coverage_score(ccp, doc, checklist);
    report.omission_findings = omission_risk(ccp, doc, checklist);

    const auto cited = cited_ids(doc);
    for (const auto& section : ccp.sections()) {
        if (section.state != ccp::SectionState::Populated) continue;
        const auto hit = std::count_if(section.items.begin(), section.items.end(),
                                       [&](const EvidenceItem& item) { return cited.count(item.evidence_id) > 0; });
        report.section_completeness[section.key] = static_cast<double>(hit) / section.items.size();
    }

    const bool hallucination = std::any_of(report.errors.begin(), report.errors.end(), [](const EvaluationError& e) {
        return e.category == ErrorCategory::HallucinationInference;
    });
    report.overall_pass = report.omission_findings.empty() && !hallucination;
    return report;
}

Json EvaluationReport::to_json() const {
    Json cov = Json::array();
    for (const auto& c : coverage) {
        cov.push_back(Json{{"domain", c.domain},
                           {"coverage", c.coverage ? Json(*c.coverage) : Json(nullptr)},
                           {"matched", c.matched},
                           {"cited", c.cited}});
    }
    Json completeness = Json::object();
    for (const auto& [key, value] : section_completeness) completeness[std::string(ccp::to_string(key))] = value;
    Json errs = Json::array();
    for (const auto& e : errors) {
        errs.push_back(Json{{"category", to_string(e.category)}, {"ref", e.ref}, {"detail", e.detail}});
    }
    Json omissions = Json::array();
    for (const auto& o : omission_findings) omissions.push_back(Json{{"domain", o.domain}, {"evidence_id", o.evidence_id}});
    return Json{{"coverage", std::move(cov)},
                {"section_completeness", std::move(completeness)},
                {"errors", std::move(errs)},
                {"omission_findings", std::move(omissions)},
                {"overall_pass", overall_pass}};
}

}  // namespace ehrsum::eval
