/**
 * @file hosted_backend.cpp
 * @brief Adapter for an external generative summarization endpoint.
 */

#include "ehrsum/summarizer.hpp"

#include <httplib.h>

namespace ehrsum::summary {

namespace {

std::vector<SummaryStatement> parse_statements(const Json& statements, SectionKey key) {
    if (!statements.is_array()) throw BackendError("backend response: statements must be an array");
    std::vector<SummaryStatement> out;
    for (const auto& s : statements) {
        if (!s.is_object() || !s.contains("text") || !s["text"].is_string()) {
            throw BackendError("backend response: statement without text");
        }
        SummaryStatement statement;
        statement.text = s["text"].get<std::string>();
        statement.section = key;
        const auto ids = s.value("evidence_ids", Json::array());
        if (!ids.is_array()) throw BackendError("backend response: evidence_ids must be an array");
        for (const auto& id : ids) {
            if (!id.is_string()) throw BackendError("backend response: evidence id must be a string");
            statement.evidence_refs.push_back(id.get<std::string>());
        }
        const std::string kind = s.value("kind", statement.evidence_refs.empty() ? "MissingData" : "Fact");
        if (kind == "Fact") statement.kind = StatementKind::Fact;
        else if (kind == "Trend") statement.kind = StatementKind::Trend;
        else if (kind == "MissingData") statement.kind = StatementKind::MissingData;
        else throw BackendError("backend response: unknown statement kind " + kind);

        for (const auto& c : s.value("numeric_claims", Json::array())) {
            if (!c.is_object() || !c.contains("value") || !c.contains("evidence_id")) {
                throw BackendError("backend response: malformed numeric claim");
            }
            const Json& v = c["value"];
            std::string value = v.is_number() ? canonical_number(v.get<double>()) : v.is_string() ? v.get<std::string>() : "";
            statement.numeric_claims.push_back({value, c.value("unit", ""), c["evidence_id"].get<std::string>()});
        }
        out.push_back(std::move(statement));
    }
    return out;
}

}  // namespace

GuardrailPrompt GuardrailPrompt::defaults() {
    return GuardrailPrompt{{
        "Summarize the clinical context package for a clinician, using only the section keys it defines.",
        "Be concise. Do not echo the input back and do not add conversational filler.",
        "Leave out any section without supporting evidence; never infer or invent content.",
        "Make no diagnostic or treatment recommendations.",
        "Use only the provided context. For every statement, list the evidence_ids of the items that support it.",
        "Report every number you state as a numeric claim {value, unit, evidence_id}.",
    }};
}

std::string GuardrailPrompt::text() const {
    std::string out;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
        out += std::to_string(i + 1) + ". " + constraints[i] + "\n";
    }
    return out;
}

HttpSummaryBackend::HttpSummaryBackend(std::string endpoint, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

Json HttpSummaryBackend::complete(const Json& request) {
    const auto scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos) throw BackendError("backend endpoint is not a URL");
    const auto path_start = endpoint_.find('/', scheme_end + 3);
    const std::string origin = endpoint_.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

    httplib::Client client(origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), micros.count());
    client.set_read_timeout(secs.count(), micros.count());
    client.set_write_timeout(secs.count(), micros.count());

    auto result = client.Post(path, request.dump(), "application/json");
    if (!result) throw BackendError("backend unreachable: " + httplib::to_string(result.error()));
    if (result->status != 200) throw BackendError("backend returned HTTP " + std::to_string(result->status));
    Json body = Json::parse(result->body, nullptr, false);
    if (body.is_discarded()) throw BackendError("backend response is not JSON");
    return body;
}

SummaryDocument summarize_via_backend(const ClinicalContextPackage& ccp, const BackendKind& backend,
                                      SummaryBackendClient& client, const GuardrailPrompt& instructions,
                                      RenderMode fallback_mode, std::string_view disclaimer,
                                      const std::vector<std::string>& lexicon) {
    if (backend.type != BackendKind::Type::Hosted) throw std::invalid_argument("summarize_via_backend needs a hosted backend");

    const Json request{{"model", backend.model}, {"instructions", instructions.text()}, {"ccp", ccp.to_json()}};
    const Json response = client.complete(request);
    if (!response.is_object() || !response.contains("sections") || !response["sections"].is_array()) {
        throw BackendError("backend response has no sections array");
    }

    // Start from the deterministic header so both backends share one document shape.
    SummaryDocument doc = summarize_deterministic(ccp, fallback_mode, disclaimer);
    doc.sections.clear();
    doc.backend = backend;

    std::map<int, SummarySection> by_key;
    for (const auto& section : response["sections"]) {
        if (!section.is_object()) throw BackendError("backend response: section must be an object");
        const auto key = ccp::section_from_string(section.value("key", ""));
        if (!key) throw BackendError("backend response: unknown section key " + section.value("key", ""));
        auto& slot = by_key[static_cast<int>(*key)];
        slot.key = *key;
        auto statements = parse_statements(section.value("statements", Json::array()), *key);
        std::move(statements.begin(), statements.end(), std::back_inserter(slot.statements));
    }
    for (auto& [key, section] : by_key) {
        if (!section.statements.empty()) doc.sections.push_back(std::move(section));
    }

    auto violations = validate_grounding(doc, ccp, lexicon);
    if (violations.empty()) return doc;

    SummaryDocument fallback = summarize_deterministic(ccp, fallback_mode, disclaimer);
    fallback.fallback = FallbackRecord{"hosted summary failed grounding validation", std::move(violations)};
    return fallback;
}

}  // namespace ehrsum::summary
