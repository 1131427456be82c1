#include "support.hpp"

namespace ehrsum::test {

using fhir::ResourceType;
using summary::StatementKind;

void ScriptedTransport::on(const std::string& url, int status, const std::string& body) {
    std::lock_guard lock(mutex_);
    responses_[url].push_back({status, body});
}

void ScriptedTransport::fail(const std::string& url) {
    std::lock_guard lock(mutex_);
    failing_.insert(url);
}

fhir::HttpResponse ScriptedTransport::get(const fhir::HttpRequest& request) {
    std::lock_guard lock(mutex_);
    requests_.push_back(request.url);
    if (failing_.count(request.url)) throw fhir::TransportError("connection refused");
    auto it = responses_.find(request.url);
    if (it == responses_.end()) return {404, R"({"resourceType":"OperationOutcome"})"};
    auto response = it->second.front();
    if (it->second.size() > 1) it->second.pop_front();
    return response;
}

std::vector<std::string> ScriptedTransport::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

Json search_bundle(const std::vector<Json>& resources, const std::optional<std::string>& next) {
    Json bundle{{"resourceType", "Bundle"}, {"type", "searchset"}, {"entry", Json::array()}};
    for (const auto& r : resources) bundle["entry"].push_back(Json{{"resource", r}});
    if (next) bundle["link"] = Json::array({Json{{"relation", "next"}, {"url", *next}}});
    return bundle;
}

fhir::EndpointConfig endpoint(const std::string& base) {
    fhir::EndpointConfig config;
    config.base_url = base;
    config.retry_backoff_ms = 0;
    return config;
}

Instant reference_instant() { return *parse_fhir_datetime(testkit::kReferenceTime); }

fhir::Clock fixed_clock() {
    return [] { return reference_instant(); };
}

fhir::RawResourceRecord raw(const Json& resource) {
    fhir::RawResourceRecord r;
    r.resource_type = *fhir::resource_type_from_string(resource.at("resourceType").get<std::string>());
    r.source_id = resource.value("id", "");
    r.payload = resource;
    r.source_url = "http://fhir.test/r4/" + resource.at("resourceType").get<std::string>() + "/" + r.source_id;
    r.retrieved_at = reference_instant();
    return r;
}

fhir::RetrievalReport all_ok_report(const std::string& patient_id) {
    fhir::RetrievalReport report;
    report.patient_id = patient_id;
    for (auto type : fhir::kAllResourceTypes) report.statuses.push_back({type, fhir::FetchState::Ok, 0, 1, {}});
    report.started_at = reference_instant();
    report.finished_at = reference_instant();
    return report;
}

Json patient_resource(const std::string& id) {
    return Json{{"resourceType", "Patient"},
                {"id", id},
                {"name", Json::array({Json{{"given", {"Ada"}}, {"family", "Lovelace"}}})},
                {"gender", "female"},
                {"birthDate", "1961-04-12"}};
}

Json observation(const std::string& id, const std::string& code, const std::string& value, const std::string& when,
                 const std::string& display, const std::string& unit) {
    return Json{{"resourceType", "Observation"},
                {"id", id},
                {"status", "final"},
                {"code", {{"coding", Json::array({Json{{"system", "http://loinc.org"}, {"code", code}, {"display", display}}})}}},
                {"effectiveDateTime", when},
                {"valueQuantity", {{"value", std::stod(value)}, {"unit", unit}}}};
}

ccp::ClinicalContextPackage package_of(const std::vector<Json>& resources, const fhir::RetrievalReport& report) {
    std::vector<fhir::RawResourceRecord> records;
    for (const auto& r : resources) records.push_back(raw(r));
    return ccp::build_context_package(records, report);
}

PipelineOutput run_generated(const testkit::VariabilityProfile& profile, summary::RenderMode mode) {
    const auto bundles = testkit::generate_patient(profile);
    return eval::in_process_pipeline(mode)(bundles, profile);
}

Json StubBackend::complete(const Json& request) {
    ++calls_;
    {
        std::lock_guard lock(mutex_);
        last_request_ = request;
    }
    return reply_(request);
}

Json StubBackend::last_request() const {
    std::lock_guard lock(mutex_);
    return last_request_;
}

Json backend_response(const summary::SummaryDocument& doc) {
    Json sections = Json::array();
    for (const auto& section : doc.sections) {
        Json statements = Json::array();
        for (const auto& s : section.statements) {
            Json claims = Json::array();
            for (const auto& c : s.numeric_claims) {
                claims.push_back(Json{{"value", c.value}, {"unit", c.unit}, {"evidence_id", c.evidence_id}});
            }
            statements.push_back(Json{{"text", s.text},
                                      {"kind", summary::to_string(s.kind)},
                                      {"evidence_ids", s.evidence_refs},
                                      {"numeric_claims", claims}});
        }
        sections.push_back(Json{{"key", ccp::to_string(section.key)}, {"statements", statements}});
    }
    return Json{{"sections", sections}};
}

std::vector<ccp::EvidenceItem> generated_items(std::uint64_t seed) {
    const auto set = testkit::generate_patient(testkit::VariabilityProfile::random(seed));
    std::vector<Json> resources;
    for (const auto& [type, list] : set.resources) {
        if (type == ResourceType::Patient || type == ResourceType::Composition) continue;
        for (const auto& r : list) resources.push_back(r);
    }
    std::mt19937_64 rng(seed);
    const std::size_t n = resources.size();
    for (std::size_t k = 0; k < 3 && n > 0; ++k) {
        Json clone = resources[rng() % n];
        clone["id"] = clone["id"].get<std::string>() + "-clone" + std::to_string(k);
        resources.push_back(clone);
    }
    std::vector<ccp::EvidenceItem> out;
    for (const auto& r : resources) out.push_back(ccp::normalize_record(raw(r)));
    return out;
}

namespace {

// Oracle: pairwise comparison of the fields that make two entries the same order or result.
bool same_entry(const ccp::EvidenceItem& a, const ccp::EvidenceItem& b) {
    if (a.codes.empty() || b.codes.empty() || a.codes[0].code.empty()) return false;
    const auto day = [](const ccp::EvidenceItem& i) {
        return i.effective_at ? format_date(*i.effective_at) : std::string("undated");
    };
    return a.section == b.section && a.codes[0].system == b.codes[0].system && a.codes[0].code == b.codes[0].code &&
           day(a) == day(b) && a.status == b.status && a.attribute("value") == b.attribute("value");
}

}  // namespace

SurvivorSet oracle_survivors(const std::vector<ccp::EvidenceItem>& items) {
    SurvivorSet out;
    std::vector<bool> used(items.size(), false);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (used[i]) continue;
        std::vector<std::size_t> group{i};
        for (std::size_t j = i + 1; j < items.size(); ++j) {
            if (!used[j] && same_entry(items[i], items[j])) group.push_back(j);
        }
        std::size_t best = group.front();
        int total = 0;
        for (auto g : group) {
            used[g] = true;
            total += items[g].duplicate_count;
            if (items[g].effective_at && (!items[best].effective_at || *items[g].effective_at > *items[best].effective_at)) {
                best = g;
            }
        }
        out.insert({items[best].evidence_id, total});
    }
    return out;
}

SurvivorSet survivors(const std::vector<ccp::EvidenceItem>& items) {
    SurvivorSet out;
    for (const auto& i : items) out.insert({i.evidence_id, i.duplicate_count});
    return out;
}

std::string_view to_string(MutationKind kind) {
    switch (kind) {
        case MutationKind::ValueChange: return "value change";
        case MutationKind::TemporalSwap: return "temporal swap";
        case MutationKind::SafetyDeletion: return "safety-domain deletion";
        case MutationKind::DanglingCitation: return "dangling citation";
    }
    return "";
}

namespace {

struct Site {
    std::size_t section;
    std::size_t statement;
};

std::vector<Site> sites(const summary::SummaryDocument& doc,
                        const std::function<bool(const summary::SummaryStatement&)>& pick) {
    std::vector<Site> out;
    for (std::size_t s = 0; s < doc.sections.size(); ++s) {
        for (std::size_t i = 0; i < doc.sections[s].statements.size(); ++i) {
            if (pick(doc.sections[s].statements[i])) out.push_back({s, i});
        }
    }
    return out;
}

std::size_t flat_index(const summary::SummaryDocument& doc, Site site) {
    std::size_t n = 0;
    for (std::size_t s = 0; s < site.section; ++s) n += doc.sections[s].statements.size();
    return n + site.statement;
}

void replace_once(std::string& text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    if (at == std::string::npos) throw std::logic_error("mutation anchor '" + from + "' not in '" + text + "'");
    text.replace(at, from.size(), to);
}

std::string with_unit(const std::string& value, const std::string& unit) {
    return unit.empty() ? value : value + " " + unit;
}

}  // namespace

std::optional<Mutation> mutate(const summary::SummaryDocument& clean, const ccp::ClinicalContextPackage& ccp,
                               MutationKind kind, std::mt19937_64& rng) {
    Mutation m{kind, clean, {}, {}};
    auto choose = [&](const std::vector<Site>& candidates) -> std::optional<Site> {
        if (candidates.empty()) return std::nullopt;
        return candidates[std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng)];
    };

    switch (kind) {
        case MutationKind::ValueChange: {
            const auto site = choose(sites(m.doc, [](const summary::SummaryStatement& s) {
                return s.kind == StatementKind::Fact && s.numeric_claims.size() == 1;
            }));
            if (!site) return std::nullopt;
            auto& st = m.doc.sections[site->section].statements[site->statement];
            auto& claim = st.numeric_claims.front();
            const double old_value = *parse_number(claim.value);
            const std::string changed = canonical_number(old_value * 10 + 0.3);
            replace_once(st.text, ": " + claim.value, ": " + changed);
            claim.value = changed;
            m.expected = eval::ErrorCategory::IncorrectValue;
            m.site = "statement:" + std::to_string(flat_index(m.doc, *site));
            return m;
        }
        case MutationKind::TemporalSwap: {
            const auto site = choose(sites(m.doc, [](const summary::SummaryStatement& s) {
                return s.kind == StatementKind::Trend && s.evidence_refs.size() == 2;
            }));
            if (!site) return std::nullopt;
            auto& st = m.doc.sections[site->section].statements[site->statement];
            const auto* latest = ccp.find(st.evidence_refs[0]);
            const auto* prior = ccp.find(st.evidence_refs[1]);
            const std::string a = with_unit(*latest->attribute("value"), latest->attribute("unit").value_or("")) +
                                  " on " + format_date(*latest->effective_at);
            const std::string b = with_unit(*prior->attribute("value"), prior->attribute("unit").value_or("")) +
                                  " on " + format_date(*prior->effective_at);
            replace_once(st.text, a, "\x01");
            replace_once(st.text, b, a);
            replace_once(st.text, "\x01", b);
            std::swap(st.evidence_refs[0], st.evidence_refs[1]);
            if (st.numeric_claims.size() == 2) std::swap(st.numeric_claims[0], st.numeric_claims[1]);
            m.expected = eval::ErrorCategory::IncorrectTemporalContext;
            m.site = "statement:" + std::to_string(flat_index(m.doc, *site));
            return m;
        }
        case MutationKind::SafetyDeletion: {
            const auto site = choose(sites(m.doc, [](const summary::SummaryStatement& s) {
                return s.kind == StatementKind::Fact && s.section == ccp::SectionKey::AllergiesAndIntolerances;
            }));
            if (!site) return std::nullopt;
            auto& statements = m.doc.sections[site->section].statements;
            m.site = statements[site->statement].evidence_refs.front();
            statements.erase(statements.begin() + static_cast<std::ptrdiff_t>(site->statement));
            m.expected = eval::ErrorCategory::Omission;
            return m;
        }
        case MutationKind::DanglingCitation: {
            std::vector<std::size_t> populated;
            for (std::size_t s = 0; s < m.doc.sections.size(); ++s) {
                const auto key = m.doc.sections[s].key;
                if (key != ccp::SectionKey::PatientInformation &&
                    ccp.section(key).state == ccp::SectionState::Populated) {
                    populated.push_back(s);
                }
            }
            if (populated.empty()) return std::nullopt;
            const auto s = populated[std::uniform_int_distribution<std::size_t>(0, populated.size() - 1)(rng)];
            auto& statements = m.doc.sections[s].statements;
            const std::string fabricated = "Condition/fabricated-" + std::to_string(rng() % 100000);
            statements.push_back({"Chronic kidney disease stage 3, active", m.doc.sections[s].key, StatementKind::Fact,
                                  {fabricated}, {}});
            m.expected = eval::ErrorCategory::HallucinationInference;
            m.site = "statement:" + std::to_string(flat_index(m.doc, {s, statements.size() - 1}));
            return m;
        }
    }
    return std::nullopt;
}

}  // namespace ehrsum::test
