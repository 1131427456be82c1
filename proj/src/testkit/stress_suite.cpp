/**
 * @file stress_suite.cpp
 */

#include "ehrsum/stress_suite.hpp"

#include <future>
#include <iomanip>
#include <sstream>

namespace ehrsum::eval {

namespace {

using summary::StatementKind;
using testkit::VariabilityProfile;

class Case {
public:
    explicit Case(std::string name) { result_.name = std::move(name); }

    void expect(bool ok, std::string failure) {
        if (!ok) result_.failures.push_back(std::move(failure));
    }
    Json& facts() { return result_.facts; }
    StressCaseResult finish() {
        result_.passed = result_.failures.empty();
        return std::move(result_);
    }

private:
    StressCaseResult result_;
};

/// Assertions every case shares: grounded output, nothing invented, absent sections handled.
void common_checks(Case& c, const PipelineOutput& out) {
    const auto violations = summary::validate_grounding(out.summary, out.ccp);
    c.expect(violations.empty(), std::to_string(violations.size()) + " grounding violations");

    const auto errors = categorize_errors(out.ccp, out.summary);
    const auto invented = std::count_if(errors.begin(), errors.end(), [](const EvaluationError& e) {
        return e.category == ErrorCategory::HallucinationInference;
    });
    c.facts()["invented_content"] = invented;
    c.expect(invented == 0, std::to_string(invented) + " invented statements");

    for (const auto& section : out.summary.sections) {
        const auto state = out.ccp.section(section.key).state;
        for (const auto& s : section.statements) {
            c.expect(state == ccp::SectionState::Populated || s.kind == StatementKind::MissingData,
                     "evidence statement in non-populated section " + std::string(ccp::to_string(section.key)));
        }
    }
}

const summary::SummarySection* find_section(const summary::SummaryDocument& doc, ccp::SectionKey key) {
    for (const auto& s : doc.sections) {
        if (s.key == key) return &s;
    }
    return nullptr;
}

template <typename Body>
StressCaseResult run_case(std::string name, const PipelineHandle& pipeline, const VariabilityProfile& profile, Body body) {
    Case c(std::move(name));
    try {
        const auto bundles = testkit::generate_patient(profile);
        const auto out = pipeline(bundles, profile);
        common_checks(c, out);
        body(c, bundles, out);
    } catch (const std::exception& e) {
        c.expect(false, std::string("pipeline crashed: ") + e.what());
    }
    return c.finish();
}

StressCaseResult missing_resources(const PipelineHandle& pipeline, std::uint64_t seed) {
    const auto profile = VariabilityProfile::named("missing-resources", seed);
    return run_case(std::string(kStressCaseNames[0]), pipeline, profile, [&](Case& c, const auto&, const PipelineOutput& out) {
        int notices = 0;
        for (const auto& section : out.ccp.sections()) {
            if (section.state == ccp::SectionState::Populated) continue;
            const auto* rendered = find_section(out.summary, section.key);
            const bool noticed = rendered && rendered->statements.size() == 1 &&
                                 rendered->statements.front().kind == StatementKind::MissingData;
            c.expect(noticed, "no missing-data notice for " + std::string(ccp::to_string(section.key)));
            if (noticed) ++notices;
            if (noticed && section.state == ccp::SectionState::Unavailable) {
                c.expect(rendered->statements.front().text == summary::unavailable_notice(section.key),
                         "unavailable section not reported as unavailable: " + std::string(ccp::to_string(section.key)));
            }
        }
        for (auto key : {ccp::SectionKey::Immunizations, ccp::SectionKey::Devices, ccp::SectionKey::Encounters}) {
            c.expect(out.ccp.section(key).state == ccp::SectionState::Unavailable,
                     std::string(ccp::to_string(key)) + " should be Unavailable");
        }
        c.facts()["missing_data_notices"] = notices;
    });
}

StressCaseResult conflicting_observations(const PipelineHandle& pipeline, std::uint64_t seed) {
    const auto profile = VariabilityProfile::named("conflicting-observations", seed);
    return run_case(std::string(kStressCaseNames[1]), pipeline, profile,
                    [&](Case& c, const testkit::SyntheticBundleSet& bundles, const PipelineOutput& out) {
        const auto ids = bundles.manifest["seeded"]["conflicting"]["ids"].get<std::vector<std::string>>();
        c.facts()["conflicting_ids"] = ids;
        std::set<std::string> values;
        for (const auto& id : ids) {
            const auto* item = out.ccp.find(id);
            c.expect(item != nullptr, id + " missing from the context package");
            if (item) values.insert(item->attribute("value").value_or(""));
            int citing = 0;
            for (const auto* s : out.summary.statements()) {
                if (s->kind == StatementKind::Fact && s->evidence_refs.size() == 1 && s->evidence_refs.front() == id) ++citing;
            }
            c.expect(citing == 1, id + " cited by " + std::to_string(citing) + " fact statements, expected 1");
        }
        c.expect(values.size() == ids.size(), "conflicting values were merged");
    });
}

StressCaseResult duplicate_orders(const PipelineHandle& pipeline, std::uint64_t seed) {
    const auto profile = VariabilityProfile::named("duplicate-orders", seed);
    return run_case(std::string(kStressCaseNames[2]), pipeline, profile,
                    [&](Case& c, const testkit::SyntheticBundleSet& bundles, const PipelineOutput& out) {
        const auto& seeded = bundles.manifest["seeded"]["duplicate_orders"];
        const std::string code = seeded["code"];
        const int count = seeded["count"];
        int statements = 0;
        for (const auto* s : out.summary.statements()) {
            if (s->section != ccp::SectionKey::Medications || s->kind != StatementKind::Fact) continue;
            const auto* item = out.ccp.find(s->evidence_refs.front());
            if (!item || !item->primary_code() || item->primary_code()->code != code) continue;
            ++statements;
            c.expect(item->duplicate_count == count, "duplicate_count " + std::to_string(item->duplicate_count) +
                                                         " != seeded " + std::to_string(count));
            c.expect(s->text.find("recorded " + std::to_string(count) + " times") != std::string::npos,
                     "duplicate count not surfaced in: " + s->text);
        }
        c.facts()["statements_for_code"] = statements;
        c.expect(statements == 1, std::to_string(statements) + " statements for the duplicated order, expected 1");
    });
}

StressCaseResult longitudinal(const PipelineHandle& pipeline, std::uint64_t seed) {
    const auto profile = VariabilityProfile::named("longitudinal", seed);
    return run_case(std::string(kStressCaseNames[3]), pipeline, profile,
                    [&](Case& c, const testkit::SyntheticBundleSet& bundles, const PipelineOutput& out) {
        const auto& seeded = bundles.manifest["seeded"]["lab_history"];
        const std::string code = seeded["code"];
        const auto& truth = bundles.manifest["lab_max"][code];
        const ccp::TrendEntry* trend = nullptr;
        for (const auto& t : out.ccp.trends()) {
            if (t.code.code == code) trend = &t;
        }
        c.expect(trend != nullptr, "no trend for " + code);
        if (!trend) return;
        c.facts()["latest"] = trend->latest.value;
        c.facts()["manifest_max"] = truth["values"];
        c.expect(format_instant(trend->latest.at) == truth["at"].get<std::string>(), "trend latest is not the max date");
        c.expect(truth["values"].size() == 1 && trend->latest.value == truth["values"][0].get<std::string>(),
                 "trend latest value differs from the manifest");
        std::size_t lab_items = 0;
        for (const auto& item : out.ccp.section(ccp::SectionKey::LaboratoryAndVitalSigns).items) {
            if (item.primary_code() && item.primary_code()->code == code) ++lab_items;
        }
        c.facts()["history_items"] = lab_items;
        c.expect(lab_items == static_cast<std::size_t>(seeded["length"].get<int>()), "lab history truncated");
        bool cited = false;
        for (const auto* s : out.summary.statements()) {
            if (s->kind == StatementKind::Trend && !s->evidence_refs.empty() &&
                s->evidence_refs.front() == trend->latest_evidence_id) {
                cited = true;
            }
        }
        c.expect(cited, "no trend statement leads with the newest value");
    });
}

}  // namespace

PipelineHandle in_process_pipeline(summary::RenderMode mode) {
    return [mode](const testkit::SyntheticBundleSet& bundles, const VariabilityProfile& profile) {
        testkit::MockFhirSource source({bundles}, profile);
        fhir::EndpointConfig config;
        config.base_url = source.base_url();
        config.max_pages = 1000;
        config.retry_backoff_ms = 0;
        PipelineOptions options;
        options.mode = mode;
        const Instant fixed = *parse_fhir_datetime(testkit::kReferenceTime);
        options.clock = [fixed] { return fixed; };
        return run_pipeline(source, config, bundles.patient_id, options);
    };
}

bool StressSuiteReport::all_passed() const {
    return std::all_of(cases.begin(), cases.end(), [](const StressCaseResult& c) { return c.passed; });
}

Json StressSuiteReport::to_json() const {
    Json out = Json::array();
    for (const auto& c : cases) {
        out.push_back(Json{{"name", c.name}, {"passed", c.passed}, {"failures", c.failures}, {"facts", c.facts}});
    }
    return Json{{"cases", std::move(out)}, {"all_passed", all_passed()}};
}

std::string StressSuiteReport::table() const {
    std::ostringstream out;
    out << std::left << std::setw(36) << "case" << "result\n";
    for (const auto& c : cases) {
        out << std::left << std::setw(36) << c.name << (c.passed ? "PASS" : "FAIL") << "\n";
        for (const auto& f : c.failures) out << "    " << f << "\n";
    }
    return out.str();
}

StressSuiteReport run_stress_suite(const PipelineHandle& pipeline, std::uint64_t seed) {
    std::vector<std::future<StressCaseResult>> pending;
    pending.push_back(std::async(std::launch::async, missing_resources, std::cref(pipeline), seed));
    pending.push_back(std::async(std::launch::async, conflicting_observations, std::cref(pipeline), seed));
    pending.push_back(std::async(std::launch::async, duplicate_orders, std::cref(pipeline), seed));
    pending.push_back(std::async(std::launch::async, longitudinal, std::cref(pipeline), seed));
    StressSuiteReport report;
    for (auto& f : pending) report.cases.push_back(f.get());
    return report;
}

}  // namespace ehrsum::eval
