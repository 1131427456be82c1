#include "support.hpp"

#include <doctest.h>

using namespace ehrsum;
using namespace ehrsum::test;
using ccp::SectionKey;
using summary::RenderMode;
using summary::StatementKind;
using summary::ViolationCategory;

namespace {

ccp::ClinicalContextPackage hba1c_package() {
    return package_of({patient_resource(), observation("jan", "4548-4", "8.1", "2024-01-10"),
                       observation("jun", "4548-4", "7.2", "2024-06-10")});
}

std::set<ViolationCategory> categories(const std::vector<summary::GroundingViolation>& vs) {
    std::set<ViolationCategory> out;
    for (const auto& v : vs) out.insert(v.category);
    return out;
}

/// Question terms after the same light stemming and keyword widening the answerer applies.
std::set<std::string> query_terms(const std::string& question) {
    std::set<std::string> out;
    const auto& vocab = summary::QueryVocabulary::defaults().expansions;
    for (auto token : tokenize(question)) {
        std::vector<std::string> forms{token};
        if (token.size() > 4 && token.ends_with("ies")) forms.push_back(token.substr(0, token.size() - 3) + "y");
        if (token.size() > 3 && token.ends_with("s")) forms.push_back(token.substr(0, token.size() - 1));
        for (const auto& f : forms) {
            out.insert(f);
            if (const auto it = vocab.find(f); it != vocab.end()) {
                for (const auto& e : it->second) {
                    for (auto t : tokenize(e)) out.insert(t);
                    out.insert(to_lower(e));
                }
            }
        }
    }
    return out;
}

std::set<std::string> item_terms(const ccp::EvidenceItem& item) {
    std::string text = item.display + " " + std::string(ccp::section_label(item.section));
    for (const auto& c : item.codes) text += " " + c.code + " " + c.display;
    for (const auto& [k, v] : item.attributes) text += " " + v;
    std::set<std::string> out;
    for (auto t : tokenize(text)) {
        out.insert(t);
        if (t.size() > 3 && t.ends_with("s")) out.insert(t.substr(0, t.size() - 1));
    }
    for (const auto& c : item.codes) out.insert(to_lower(c.code));
    return out;
}

std::size_t evidence_statement_count(const summary::SummaryDocument& doc) {
    std::size_t n = 0;
    for (const auto* s : doc.statements()) n += s->kind != StatementKind::MissingData;
    return n;
}

/// Document invariants shared by both backends.
void check_document_invariants(const summary::SummaryDocument& doc, const ccp::ClinicalContextPackage& ccp) {
    CHECK(doc.ccp_fingerprint == ccp.fingerprint());
    CHECK_FALSE(doc.disclaimer.empty());
    int last = -1;
    for (const auto& section : doc.sections) {
        CHECK(static_cast<int>(section.key) > last);
        last = static_cast<int>(section.key);
        for (const auto& s : section.statements) {
            CHECK(s.section == section.key);
            if (s.kind == StatementKind::MissingData) {
                CHECK(s.evidence_refs.empty());
                continue;
            }
            CHECK(ccp.section(section.key).state == ccp::SectionState::Populated);
            REQUIRE_FALSE(s.evidence_refs.empty());
            for (const auto& ref : s.evidence_refs) CHECK(ccp.find(ref) != nullptr);
        }
    }
}

}  // namespace

TEST_CASE("empty section notice") {
    const auto ccp = package_of({patient_resource(), observation("o", "4548-4", "7.2", "2024-06-10")});
    const auto doc = summary::summarize_deterministic(ccp, RenderMode::NoticeEmpty);
    bool found = false;
    for (const auto* s : doc.statements()) {
        if (s->section == SectionKey::Immunizations) {
            CHECK(s->text == "No immunizations available");
            CHECK(s->kind == StatementKind::MissingData);
            found = true;
        }
    }
    CHECK(found);
}

TEST_CASE("unavailable section notice differs from an empty one") {
    auto report = all_ok_report();
    for (auto& s : report.statuses) {
        if (s.resource_type == fhir::ResourceType::Immunization) s.state = fhir::FetchState::Unsupported;
    }
    const auto ccp = package_of({patient_resource()}, report);
    const auto doc = summary::summarize_deterministic(ccp, RenderMode::NoticeEmpty);
    for (const auto& section : doc.sections) {
        if (section.key == SectionKey::Immunizations) CHECK(section.statements.front().text == "Immunizations unavailable from source");
        if (section.key == SectionKey::Goals) CHECK(section.statements.front().text == "No goals available");
    }
    const auto omitted = summary::summarize_deterministic(ccp, RenderMode::OmitEmpty);
    REQUIRE(omitted.sections.size() == 2);
    CHECK(omitted.sections[0].key == SectionKey::PatientInformation);
    CHECK(omitted.sections[1].key == SectionKey::Immunizations);
    CHECK(omitted.sections[1].statements.front().text == "Immunizations unavailable from source");
}

TEST_CASE("trend statement cites latest then prior") {
    const auto ccp = hba1c_package();
    const auto doc = summary::summarize_deterministic(ccp, RenderMode::NoticeEmpty);
    const summary::SummaryStatement* trend = nullptr;
    for (const auto* s : doc.statements()) {
        if (s->kind == StatementKind::Trend) trend = s;
    }
    REQUIRE(trend);
    const auto& entry = ccp.trends().front();
    CHECK(trend->evidence_refs == std::vector<std::string>{entry.latest_evidence_id, *entry.prior_evidence_id});
    CHECK(trend->evidence_refs.front() == "Observation/jun");
    CHECK(trend->text == "Hemoglobin A1c: 7.2 % on 2024-06-10 (falling from 8.1 % on 2024-01-10)");
}

TEST_CASE("empty chart with omit_empty keeps only the patient header and demographics") {
    const auto ccp = package_of({patient_resource()});
    const auto doc = summary::summarize_deterministic(ccp, RenderMode::OmitEmpty);
    CHECK(doc.patient_header == "Patient: Ada Lovelace (female, born 1961-04-12)");
    for (const auto& section : doc.sections) CHECK(section.key == SectionKey::PatientInformation);
    CHECK(doc.generated_at == ccp.built_at());
}

TEST_CASE("validate_grounding catches value mismatches and dangling references") {
    const auto ccp = hba1c_package();
    const auto clean = summary::summarize_deterministic(ccp, RenderMode::NoticeEmpty);
    CHECK(summary::validate_grounding(clean, ccp).empty());

    auto doc = clean;
    auto& labs = doc.sections[static_cast<std::size_t>(SectionKey::LaboratoryAndVitalSigns)];
    REQUIRE(labs.key == SectionKey::LaboratoryAndVitalSigns);
    labs.statements.push_back({"HbA1c 9.9%", SectionKey::LaboratoryAndVitalSigns, StatementKind::Fact,
                               {"Observation/jun"}, {{"9.9", "%", "Observation/jun"}}});
    CHECK(categories(summary::validate_grounding(doc, ccp)) == std::set{ViolationCategory::ValueMismatch});

    auto dangling = clean;
    dangling.sections[static_cast<std::size_t>(SectionKey::LaboratoryAndVitalSigns)].statements.push_back(
        {"Chronic kidney disease", SectionKey::LaboratoryAndVitalSigns, StatementKind::Fact, {"Condition/999"}, {}});
    CHECK(categories(summary::validate_grounding(dangling, ccp)).count(ViolationCategory::UnresolvedEvidence) == 1);

    auto advice = clean;
    advice.sections[static_cast<std::size_t>(SectionKey::LaboratoryAndVitalSigns)].statements.push_back(
        {"HbA1c is 7.2 %; recommend starting insulin", SectionKey::LaboratoryAndVitalSigns, StatementKind::Fact,
         {"Observation/jun"}, {{"7.2", "%", "Observation/jun"}}});
    CHECK(categories(summary::validate_grounding(advice, ccp)) == std::set{ViolationCategory::RecommendationLanguage});

    const auto other = package_of({patient_resource("p2")});
    CHECK_THROWS_AS(summary::validate_grounding(clean, other), summary::FingerprintMismatch);
}

TEST_CASE("hosted backend: accepted when grounded, replaced when not") {
    const auto ccp = hba1c_package();
    const auto reference = summary::summarize_deterministic(ccp, RenderMode::NoticeEmpty);
    const auto hosted = summary::BackendKind::hosted("http://llm.test/v1", "stub");

    StubBackend echo([&](const Json&) { return backend_response(reference); });
    const auto accepted = summary::summarize_via_backend(ccp, hosted, echo);
    CHECK(accepted.backend == hosted);
    CHECK_FALSE(accepted.fallback.has_value());
    CHECK(accepted.sections == reference.sections);
    CHECK(echo.last_request()["ccp"] == ccp.to_json());
    CHECK(echo.last_request()["instructions"].get<std::string>().find("recommendations") != std::string::npos);

    StubBackend dangling([&](const Json&) {
        Json r = backend_response(reference);
        r["sections"].push_back(Json{{"key", "Conditions"},
                                     {"statements", Json::array({Json{{"text", "Heart failure"}, {"evidence_ids", {"Condition/999"}}}})}});
        return r;
    });
    const auto replaced = summary::summarize_via_backend(ccp, hosted, dangling);
    REQUIRE(replaced.fallback.has_value());
    CHECK(replaced.backend == summary::BackendKind::deterministic());
    CHECK(categories(replaced.fallback->violations).count(ViolationCategory::UnresolvedEvidence) == 1);
    CHECK(replaced.sections == reference.sections);

    StubBackend advice([&](const Json&) {
        return Json{{"sections", Json::array({Json{{"key", "LaboratoryAndVitalSigns"},
                                                   {"statements", Json::array({Json{{"text", "HbA1c 7.2 %, recommend starting insulin"},
                                                                                    {"evidence_ids", {"Observation/jun"}},
                                                                                    {"numeric_claims", Json::array({Json{{"value", 7.2}, {"unit", "%"}, {"evidence_id", "Observation/jun"}}})}}})}}})}};
    });
    const auto refused = summary::summarize_via_backend(ccp, hosted, advice);
    REQUIRE(refused.fallback.has_value());
    CHECK(categories(refused.fallback->violations) == std::set{ViolationCategory::RecommendationLanguage});

    StubBackend garbage([](const Json&) { return Json{{"oops", true}}; });
    CHECK_THROWS_AS(summary::summarize_via_backend(ccp, hosted, garbage), summary::BackendError);
}

TEST_CASE("pipeline falls back when the hosted backend is unreachable") {
    const auto profile = testkit::VariabilityProfile::named("baseline", 2);
    const auto set = testkit::generate_patient(profile);
    testkit::MockFhirSource source({set}, profile);
    auto config = endpoint(source.base_url());
    config.max_pages = 1000;

    summary::HttpSummaryBackend unreachable("http://127.0.0.1:9/complete", std::chrono::milliseconds(2000));
    PipelineOptions options;
    options.clock = fixed_clock();
    options.backend = summary::BackendKind::hosted("http://127.0.0.1:9/complete", "m");
    options.hosted_client = &unreachable;
    const auto out = run_pipeline(source, config, set.patient_id, options);
    REQUIRE(out.summary.fallback.has_value());
    CHECK(out.summary.backend == summary::BackendKind::deterministic());
    CHECK(summary::validate_grounding(out.summary, out.ccp).empty());
}

TEST_CASE("answer_question") {
    const auto ccp = hba1c_package();
    const auto recent = summary::answer_question(ccp, "What is the most recent HbA1c?");
    CHECK_FALSE(recent.refused);
    CHECK(recent.evidence_refs == std::vector<std::string>{"Observation/jun"});
    CHECK(recent.text.find("7.2") != std::string::npos);

    const auto anticoag = summary::answer_question(ccp, "Is the patient on a current anticoagulant?");
    CHECK(anticoag.refused);
    CHECK(anticoag.evidence_refs.empty());
    CHECK(anticoag.text == summary::kRefusalText);

    const auto empty = package_of({patient_resource()});
    CHECK(summary::answer_question(empty, "latest creatinine").refused);
    CHECK(summary::answer_question(empty, "anything at all").refused);
}

TEST_CASE("answer_question finds anticoagulants through the keyword list") {
    const auto out = run_generated(testkit::VariabilityProfile::named("baseline", 4));
    const auto answer = summary::answer_question(out.ccp, "current anticoagulant");
    REQUIRE_FALSE(answer.refused);
    for (const auto& ref : answer.evidence_refs) {
        const auto* item = out.ccp.find(ref);
        REQUIRE(item);
        CHECK(to_lower(item->display).find("warfarin") != std::string::npos);
    }
}

TEST_CASE("summary JSON round-trip and renderings") {
    const auto out = run_generated(testkit::VariabilityProfile::named("baseline", 1));
    const auto json = summary::to_json(out.summary);
    for (const char* key : {"patient_header", "sections", "disclaimer", "ccp_fingerprint", "backend", "generated_at"}) {
        CHECK(json.contains(key));
    }
    CHECK(summary::summary_from_json(json) == out.summary);
    CHECK_THROWS_AS(summary::summary_from_json(Json{{"sections", 3}}), std::invalid_argument);

    const auto text = summary::render_text(out.summary);
    CHECK(text.rfind(out.summary.patient_header + "\n", 0) == 0);
    std::size_t last = 0;
    for (auto key : ccp::kAllSections) {
        const auto at = text.find("\n" + std::string(ccp::section_label(key)) + "\n");
        REQUIRE(at != std::string::npos);
        CHECK(at >= last);
        last = at;
    }
    CHECK(text.find(out.summary.disclaimer) != std::string::npos);
    const auto md = summary::render_markdown(out.summary);
    CHECK(md.find("## Alerts and Flags") != std::string::npos);
    CHECK(md.find(out.summary.disclaimer) != std::string::npos);
}

TEST_CASE("summarizer properties over generated patients") {
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        CAPTURE(seed);
        const auto out = run_generated(testkit::VariabilityProfile::random(seed));
        CHECK(summary::validate_grounding(out.summary, out.ccp).empty());
        check_document_invariants(out.summary, out.ccp);

        const auto again = summary::summarize_deterministic(out.ccp, RenderMode::NoticeEmpty);
        CHECK(summary::to_json(again).dump() == summary::to_json(out.summary).dump());
        CHECK(summary::render_text(again) == summary::render_text(out.summary));

        // every item appears in exactly one Fact statement
        std::map<std::string, int> cited;
        for (const auto* s : out.summary.statements()) {
            if (s->kind == StatementKind::Fact) ++cited[s->evidence_refs.front()];
        }
        for (const auto& section : out.ccp.sections()) {
            for (const auto& item : section.items) CHECK(cited[item.evidence_id] == 1);
        }

        StubBackend echo([&](const Json&) { return backend_response(out.summary); });
        const auto hosted = summary::summarize_via_backend(out.ccp, summary::BackendKind::hosted("http://x", "m"), echo);
        CHECK_FALSE(hosted.fallback.has_value());
        check_document_invariants(hosted, out.ccp);
        CHECK(evidence_statement_count(hosted) == evidence_statement_count(out.summary));

        for (const char* q : {"most recent hba1c", "current medications", "allergies", "hospital admission", "xyzzy plugh"}) {
            const auto a = summary::answer_question(out.ccp, q);
            if (a.refused) {
                CHECK(a.evidence_refs.empty());
                continue;
            }
            REQUIRE_FALSE(a.evidence_refs.empty());
            const auto terms = query_terms(q);
            for (const auto& ref : a.evidence_refs) {
                const auto* item = out.ccp.find(ref);
                REQUIRE(item);
                const auto mine = item_terms(*item);
                CHECK(std::any_of(terms.begin(), terms.end(), [&](const std::string& t) { return mine.count(t) > 0; }));
            }
        }
    }
}
