/**
 * @file summarizer.cpp
 * @brief Deterministic backend, document serialization and rendering.
 */

#include "ehrsum/summarizer.hpp"

#include <sstream>

namespace ehrsum::summary {

namespace {

constexpr std::array<std::string_view, 3> kKindNames{"Fact", "Trend", "MissingData"};
constexpr std::array<std::string_view, 4> kViolationNames{"UnresolvedEvidence", "ValueMismatch",
                                                          "RecommendationLanguage", "ForeignContent"};

std::string lowercase_label(SectionKey key) {
    return to_lower(ccp::section_label(key));
}

std::string trend_direction_word(ccp::TrendDirection direction) {
    switch (direction) {
        case ccp::TrendDirection::Rising: return "rising";
        case ccp::TrendDirection::Falling: return "falling";
        case ccp::TrendDirection::Flat: return "unchanged";
        case ccp::TrendDirection::Single: return "single value";
    }
    return {};
}

std::string with_unit(const std::string& value, const std::string& unit) {
    return unit.empty() ? value : value + " " + unit;
}

SummaryStatement trend_statement(const ccp::TrendEntry& trend) {
    SummaryStatement s;
    s.section = SectionKey::LaboratoryAndVitalSigns;
    s.kind = StatementKind::Trend;
    s.text = trend.display + ": " + with_unit(trend.latest.value, trend.latest.unit) + " on " +
             format_date(trend.latest.at);
    s.evidence_refs.push_back(trend.latest_evidence_id);
    s.numeric_claims.push_back({trend.latest.value, trend.latest.unit, trend.latest_evidence_id});
    if (trend.prior && trend.prior_evidence_id) {
        s.text += " (" + trend_direction_word(trend.direction) + " from " +
                  with_unit(trend.prior->value, trend.prior->unit) + " on " + format_date(trend.prior->at) + ")";
        s.evidence_refs.push_back(*trend.prior_evidence_id);
        s.numeric_claims.push_back({trend.prior->value, trend.prior->unit, *trend.prior_evidence_id});
    } else {
        s.text += " (single value)";
    }
    return s;
}

SummaryStatement fact_statement(const EvidenceItem& item) {
    SummaryStatement s;
    s.section = item.section;
    s.kind = StatementKind::Fact;
    s.text = render_fact(item);
    s.evidence_refs.push_back(item.evidence_id);
    if (const auto value = item.attribute("value"); value && canonical_number(*value)) {
        s.numeric_claims.push_back({*value, item.attribute("unit").value_or(""), item.evidence_id});
    }
    return s;
}

std::string patient_header(const EvidenceItem& patient) {
    std::string header = "Patient: " + patient.display;
    std::vector<std::string> details;
    if (auto gender = patient.attribute("gender")) details.push_back(*gender);
    if (auto born = patient.attribute("birth_date")) details.push_back("born " + *born);
    if (!details.empty()) {
        header += " (";
        for (std::size_t i = 0; i < details.size(); ++i) header += (i ? ", " : "") + details[i];
        header += ")";
    }
    return header;
}

Json backend_json(const BackendKind& backend) {
    if (backend.type == BackendKind::Type::Deterministic) return Json{{"kind", "deterministic"}};
    return Json{{"kind", "hosted"}, {"endpoint", backend.endpoint}, {"model", backend.model}};
}

BackendKind backend_from_json(const Json& json) {
    const auto kind = json.at("kind").get<std::string>();
    if (kind == "deterministic") return BackendKind::deterministic();
    if (kind == "hosted") return BackendKind::hosted(json.at("endpoint").get<std::string>(), json.value("model", ""));
    throw std::invalid_argument("unknown backend kind " + kind);
}

template <std::size_t N>
std::size_t index_of(const std::array<std::string_view, N>& names, const std::string& name, const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == name) return i;
    }
    throw std::invalid_argument(std::string("unknown ") + what + " '" + name + "'");
}

}  // namespace

std::string_view to_string(StatementKind kind) {
    return kKindNames[static_cast<std::size_t>(kind)];
}

std::string_view to_string(ViolationCategory category) {
    return kViolationNames[static_cast<std::size_t>(category)];
}

BackendKind BackendKind::hosted(std::string endpoint, std::string model) {
    if (endpoint.empty()) throw std::invalid_argument("hosted backend requires an endpoint");
    return BackendKind{Type::Hosted, std::move(endpoint), std::move(model)};
}

std::vector<const SummaryStatement*> SummaryDocument::statements() const {
    std::vector<const SummaryStatement*> out;
    for (const auto& section : sections) {
        for (const auto& s : section.statements) out.push_back(&s);
    }
    return out;
}

std::string render_fact(const EvidenceItem& item) {
    std::string text = item.display;
    if (item.section == SectionKey::PatientInformation) {
        if (auto gender = item.attribute("gender")) text += ", " + *gender;
        if (auto born = item.attribute("birth_date")) text += ", born " + *born;
        return text;
    }
    if (auto value = item.attribute("value")) text += ": " + with_unit(*value, item.attribute("unit").value_or(""));
    if (item.status) text += ", " + *item.status;
    if (auto dosage = item.attribute("dosage")) text += ", " + *dosage;
    if (auto criticality = item.attribute("criticality")) text += ", criticality " + *criticality;
    if (auto cls = item.attribute("class")) text += ", " + *cls;
    if (auto relationship = item.attribute("relationship")) text += " (" + *relationship + ")";
    if (item.effective_at) text += " — " + format_date(*item.effective_at);
    if (item.duplicate_count > 1) text += " [recorded " + std::to_string(item.duplicate_count) + " times]";
    return text;
}

std::string missing_notice(SectionKey key) {
    return "No " + lowercase_label(key) + " available";
}

std::string unavailable_notice(SectionKey key) {
    return std::string(ccp::section_label(key)) + " unavailable from source";
}

SummaryDocument summarize_deterministic(const ClinicalContextPackage& ccp, RenderMode mode,
                                        std::string_view disclaimer) {
    SummaryDocument doc;
    doc.patient_header = patient_header(ccp.patient());
    doc.disclaimer = std::string(disclaimer);
    doc.ccp_fingerprint = ccp.fingerprint();
    doc.backend = BackendKind::deterministic();
    doc.generated_at = ccp.built_at();

    for (const auto& section : ccp.sections()) {
        SummarySection out{section.key, {}};
        switch (section.state) {
            case ccp::SectionState::Populated:
                if (section.key == SectionKey::LaboratoryAndVitalSigns) {
                    for (const auto& trend : ccp.trends()) {
                        if (trend.prior) out.statements.push_back(trend_statement(trend));
                    }
                }
                for (const auto& item : section.items) out.statements.push_back(fact_statement(item));
                break;
            case ccp::SectionState::Empty:
                if (mode == RenderMode::NoticeEmpty) {
                    out.statements.push_back({missing_notice(section.key), section.key, StatementKind::MissingData, {}, {}});
                }
                break;
            case ccp::SectionState::Unavailable:
                out.statements.push_back(
                    {unavailable_notice(section.key), section.key, StatementKind::MissingData, {}, {}});
                break;
        }
        if (!out.statements.empty()) doc.sections.push_back(std::move(out));
    }
    return doc;
}

Json to_json(const SummaryDocument& doc) {
    Json sections = Json::array();
    for (const auto& section : doc.sections) {
        Json statements = Json::array();
        for (const auto& s : section.statements) {
            Json claims = Json::array();
            for (const auto& c : s.numeric_claims) {
                claims.push_back(Json{{"value", c.value}, {"unit", c.unit}, {"evidence_id", c.evidence_id}});
            }
            statements.push_back(Json{{"text", s.text},
                                      {"kind", to_string(s.kind)},
                                      {"evidence_refs", s.evidence_refs},
                                      {"numeric_claims", std::move(claims)}});
        }
        sections.push_back(Json{{"key", ccp::to_string(section.key)}, {"statements", std::move(statements)}});
    }
    Json json{
        {"patient_header", doc.patient_header},
        {"sections", std::move(sections)},
        {"disclaimer", doc.disclaimer},
        {"ccp_fingerprint", doc.ccp_fingerprint},
        {"backend", backend_json(doc.backend)},
        {"generated_at", format_instant(doc.generated_at)},
    };
    if (doc.fallback) {
        Json violations = Json::array();
        for (const auto& v : doc.fallback->violations) {
            violations.push_back(
                Json{{"statement_index", v.statement_index}, {"category", to_string(v.category)}, {"detail", v.detail}});
        }
        json["fallback"] = Json{{"reason", doc.fallback->reason}, {"violations", std::move(violations)}};
    }
    return json;
}

SummaryDocument summary_from_json(const Json& json) {
    try {
        SummaryDocument doc;
        doc.patient_header = json.at("patient_header").get<std::string>();
        doc.disclaimer = json.at("disclaimer").get<std::string>();
        doc.ccp_fingerprint = json.at("ccp_fingerprint").get<std::string>();
        doc.backend = backend_from_json(json.at("backend"));
        const auto at = parse_fhir_datetime(json.at("generated_at").get<std::string>());
        if (!at) throw std::invalid_argument("generated_at is not an instant");
        doc.generated_at = *at;

        int previous = -1;
        for (const auto& section_json : json.at("sections")) {
            const auto key = ccp::section_from_string(section_json.at("key").get<std::string>());
            if (!key) throw std::invalid_argument("unknown section key " + section_json.at("key").dump());
            if (static_cast<int>(*key) <= previous) throw std::invalid_argument("sections out of canonical order");
            previous = static_cast<int>(*key);
            SummarySection section{*key, {}};
            for (const auto& s : section_json.at("statements")) {
                SummaryStatement statement;
                statement.text = s.at("text").get<std::string>();
                statement.section = *key;
                statement.kind = static_cast<StatementKind>(index_of(kKindNames, s.at("kind").get<std::string>(), "kind"));
                statement.evidence_refs = s.value("evidence_refs", std::vector<std::string>{});
                for (const auto& c : s.value("numeric_claims", Json::array())) {
                    statement.numeric_claims.push_back(
                        {c.at("value").get<std::string>(), c.value("unit", ""), c.at("evidence_id").get<std::string>()});
                }
                section.statements.push_back(std::move(statement));
            }
            doc.sections.push_back(std::move(section));
        }
        if (const auto fb = json.find("fallback"); fb != json.end()) {
            FallbackRecord record{fb->at("reason").get<std::string>(), {}};
            for (const auto& v : fb->value("violations", Json::array())) {
                record.violations.push_back(
                    {v.at("statement_index").get<std::size_t>(),
                     static_cast<ViolationCategory>(index_of(kViolationNames, v.at("category").get<std::string>(), "category")),
                     v.value("detail", "")});
            }
            doc.fallback = std::move(record);
        }
        return doc;
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("summary document does not match its schema: ") + e.what());
    }
}

std::string render_text(const SummaryDocument& doc) {
    std::ostringstream out;
    out << doc.patient_header << "\n";
    for (const auto& section : doc.sections) {
        out << "\n" << ccp::section_label(section.key) << "\n";
        for (const auto& s : section.statements) out << "- " << s.text << "\n";
    }
    out << "\n" << doc.disclaimer << "\n";
    return out.str();
}

std::string render_markdown(const SummaryDocument& doc) {
    std::ostringstream out;
    out << "# Clinical Summary\n\n**" << doc.patient_header << "**\n";
    for (const auto& section : doc.sections) {
        out << "\n## " << ccp::section_label(section.key) << "\n\n";
        for (const auto& s : section.statements) {
            out << "- " << s.text;
            if (!s.evidence_refs.empty()) {
                out << " (";
                for (std::size_t i = 0; i < s.evidence_refs.size(); ++i) out << (i ? ", " : "") << "`" << s.evidence_refs[i] << "`";
                out << ")";
            }
            out << "\n";
        }
    }
    out << "\n> " << doc.disclaimer << "\n";
    return out.str();
}

}  // namespace ehrsum::summary
