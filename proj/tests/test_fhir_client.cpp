#include "support.hpp"

#include <doctest.h>

#include <filesystem>

using namespace ehrsum;
using namespace ehrsum::test;
using fhir::FetchState;
using fhir::ResourceType;

namespace {

const std::string kBase = "http://fhir.test/r4";

Json condition(const std::string& id) {
    return Json{{"resourceType", "Condition"},
                {"id", id},
                {"code", {{"text", "Condition " + id}}},
                {"clinicalStatus", {{"coding", Json::array({Json{{"code", "active"}}})}}}};
}

testkit::SyntheticBundleSet conditions_only(int n) {
    testkit::SyntheticBundleSet set;
    set.patient_id = "p1";
    set.resources[ResourceType::Patient] = {patient_resource("p1")};
    for (int i = 0; i < n; ++i) set.resources[ResourceType::Condition].push_back(condition("c" + std::to_string(i)));
    set.manifest = testkit::derive_manifest_facts(set);
    return set;
}

testkit::VariabilityProfile quiet_profile() {
    testkit::VariabilityProfile p;
    p.populated_types = {ResourceType::Patient, ResourceType::Condition};
    return p;
}

}  // namespace

TEST_CASE("two-page Condition search yields every entry") {
    ScriptedTransport t;
    const auto first = kBase + "/Condition?patient=p1&_count=100";
    const auto second = kBase + "/Condition?patient=p1&_count=100&page=2";
    t.on(first, 200, search_bundle({condition("a"), condition("b"), condition("c")}, second));
    t.on(second, 200, search_bundle({condition("d"), condition("e")}));

    const auto result = fhir::fetch_resource_type(t, endpoint(kBase), "p1", ResourceType::Condition, fixed_clock());
    CHECK(result.records.size() == 5);
    CHECK(result.status.state == FetchState::Ok);
    CHECK(result.status.record_count == 5);
    CHECK(result.status.pages_fetched == 2);
    CHECK(result.records.front().source_url == kBase + "/Condition/a");
    CHECK(result.records.back().payload["id"] == "e");
}

TEST_CASE("empty searchset is Ok with zero records") {
    ScriptedTransport t;
    t.on(kBase + "/Immunization?patient=p1&_count=100", 200, search_bundle({}));
    const auto result = fhir::fetch_resource_type(t, endpoint(kBase), "p1", ResourceType::Immunization);
    CHECK(result.records.empty());
    CHECK(result.status.state == FetchState::Ok);
    CHECK(result.status.pages_fetched == 1);
}

TEST_CASE("HTTP 400 on a Device search is Unsupported and retrieval continues") {
    ScriptedTransport t;
    t.on(kBase + "/Patient/p1", 200, patient_resource("p1"));
    t.on(kBase + "/Device?patient=p1&_count=100", 400, Json{{"resourceType", "OperationOutcome"}});
    t.on(kBase + "/Condition?patient=p1&_count=100", 200, search_bundle({condition("a")}));

    const auto result = fhir::retrieve_patient_context(t, endpoint(kBase), "p1");
    CHECK(result.report.status_of(ResourceType::Device).state == FetchState::Unsupported);
    CHECK(result.report.status_of(ResourceType::Condition).state == FetchState::Ok);
    CHECK(result.report.status_of(ResourceType::Condition).record_count == 1);
}

TEST_CASE("server exposing only Patient and Condition") {
    ScriptedTransport t;
    t.on(kBase + "/Patient/p1", 200, patient_resource("p1"));
    t.on(kBase + "/Condition?patient=p1&_count=100", 200, search_bundle({condition("a")}));
    const auto result = fhir::retrieve_patient_context(t, endpoint(kBase), "p1");
    REQUIRE(result.report.statuses.size() == 17);
    int degraded = 0;
    for (const auto& s : result.report.statuses) {
        if (s.resource_type == ResourceType::Patient || s.resource_type == ResourceType::Condition) {
            CHECK(s.state == FetchState::Ok);
        } else if (s.state == FetchState::Absent || s.state == FetchState::Unsupported) {
            ++degraded;
        }
    }
    CHECK(degraded == 15);
    CHECK(result.records.size() == 2);
}

TEST_CASE("unreachable server means the patient is unavailable") {
    SUBCASE("scripted refusal") {
        ScriptedTransport t;
        t.fail(kBase + "/Patient/p1");
        try {
            fhir::retrieve_patient_context(t, endpoint(kBase), "p1");
            FAIL("expected PatientUnavailable");
        } catch (const fhir::PatientUnavailable& e) {
            CHECK(e.report().statuses.size() == 17);
            CHECK(e.report().status_of(ResourceType::Patient).state == FetchState::Error);
        }
    }
    SUBCASE("closed local port") {
        fhir::NetworkTransport t;
        auto config = endpoint("http://127.0.0.1:9");
        config.timeout_ms = 2000;
        CHECK_THROWS_AS(fhir::retrieve_patient_context(t, config, "p1"), fhir::PatientUnavailable);
    }
}

TEST_CASE("transient 5xx is retried once, persistent 5xx is an Error") {
    ScriptedTransport t;
    const auto url = kBase + "/Goal?patient=p1&_count=100";
    t.on(url, 503, std::string("busy"));
    t.on(url, 200, search_bundle({Json{{"resourceType", "Goal"}, {"id", "g1"}}}));
    auto ok = fhir::fetch_resource_type(t, endpoint(kBase), "p1", ResourceType::Goal);
    CHECK(ok.status.state == FetchState::Ok);
    CHECK(ok.records.size() == 1);

    ScriptedTransport down;
    down.on(url, 500, std::string("down"));
    auto err = fhir::fetch_resource_type(down, endpoint(kBase), "p1", ResourceType::Goal);
    CHECK(err.status.state == FetchState::Error);
    CHECK(down.requests().size() == 2);
}

TEST_CASE("entries without an id are skipped and noted") {
    ScriptedTransport t;
    t.on(kBase + "/Condition?patient=p1&_count=100", 200,
         search_bundle({condition("a"), Json{{"resourceType", "Condition"}}, condition("b")}));
    const auto result = fhir::fetch_resource_type(t, endpoint(kBase), "p1", ResourceType::Condition);
    CHECK(result.records.size() == 2);
    REQUIRE(result.status.detail);
    CHECK(result.status.detail->find("1 entries skipped") != std::string::npos);
}

TEST_CASE("bearer token is forwarded") {
    testkit::MockFhirSource source({conditions_only(1)}, quiet_profile());
    auto config = endpoint(source.base_url());
    config.auth_token = "s3cret";
    fhir::retrieve_patient_context(source, config, "p1");
    CHECK(source.last_authorization() == "Bearer s3cret");
}

TEST_CASE("pagination completeness, including truncation at max_pages") {
    for (int pages : {1, 2, 3, 7}) {
        for (int n : {2 * pages - 1, 2 * pages}) {
            CAPTURE(pages);
            CAPTURE(n);
            const auto set = conditions_only(n);
            testkit::MockFhirSource source({set}, quiet_profile());
            const auto r = fhir::fetch_resource_type(source, endpoint(source.base_url()), "p1", ResourceType::Condition);
            CHECK(r.status.record_count == set.manifest["counts"]["Condition"].get<int>());
            CHECK(r.status.pages_fetched == pages);

            auto capped = endpoint(source.base_url());
            capped.max_pages = 2;
            const auto t = fhir::fetch_resource_type(source, capped, "p1", ResourceType::Condition);
            CHECK(t.status.pages_fetched == std::min(pages, 2));
            CHECK(t.status.record_count == std::min(n, 4));
            CHECK(t.status.detail.has_value() == (pages > 2));
        }
    }
}

TEST_CASE("baseline patient: one status per type, populated types Ok") {
    const auto profile = testkit::VariabilityProfile::named("baseline", 3);
    const auto set = testkit::generate_patient(profile);
    testkit::MockFhirSource source({set}, profile);
    auto config = endpoint(source.base_url());
    config.max_pages = 1000;
    const auto result = fhir::retrieve_patient_context(source, config, set.patient_id);
    REQUIRE(result.report.statuses.size() == 17);
    for (std::size_t i = 0; i < 17; ++i) {
        const auto& s = result.report.statuses[i];
        CHECK(s.resource_type == fhir::kAllResourceTypes[i]);
        CHECK(s.state == FetchState::Ok);
        CHECK(s.record_count == set.manifest["counts"][std::string(fhir::to_string(s.resource_type))].get<int>());
        if (profile.populated_types.count(s.resource_type)) CHECK(s.record_count >= 1);
    }
}

TEST_CASE("failure isolation over random failing subsets") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 20; ++round) {
        auto profile = testkit::VariabilityProfile::named("baseline", 100 + round);
        for (auto type : fhir::kAllResourceTypes) {
            if (type != ResourceType::Patient && rng() % 3 == 0) profile.failing_searches.insert(type);
        }
        profile.flaky_5xx_rate = 0.2;
        const auto set = testkit::generate_patient(profile);
        testkit::MockFhirSource source({set}, profile);
        auto config = endpoint(source.base_url());
        config.max_pages = 1000;
        const auto result = fhir::retrieve_patient_context(source, config, set.patient_id);
        REQUIRE(result.report.statuses.size() == 17);
        for (const auto& s : result.report.statuses) {
            CAPTURE(fhir::to_string(s.resource_type));
            if (profile.failing_searches.count(s.resource_type)) {
                CHECK(s.state == FetchState::Error);
            } else {
                CHECK(s.state == FetchState::Ok);
                CHECK(s.record_count == set.manifest["counts"][std::string(fhir::to_string(s.resource_type))].get<int>());
            }
        }
    }
}

TEST_CASE("retrieval over loopback HTTP matches the in-process source") {
    const auto profile = testkit::VariabilityProfile::named("baseline", 5);
    const auto set = testkit::generate_patient(profile);
    testkit::MockFhirSource direct({set}, profile);
    auto config = endpoint(direct.base_url());
    config.max_pages = 1000;
    const auto expected = fhir::retrieve_patient_context(direct, config, set.patient_id, fixed_clock());

    testkit::MockFhirSource served({set}, profile);
    testkit::LoopbackFhirServer server(served);
    fhir::NetworkTransport network;
    auto http_config = endpoint(server.base_url());
    http_config.max_pages = 1000;
    const auto actual = fhir::retrieve_patient_context(network, http_config, set.patient_id, fixed_clock());

    REQUIRE(actual.records.size() == expected.records.size());
    for (std::size_t i = 0; i < actual.records.size(); ++i) {
        CHECK(actual.records[i].payload == expected.records[i].payload);
    }
    CHECK(fhir::to_json(actual.report)["statuses"] == fhir::to_json(expected.report)["statuses"]);
}

TEST_CASE("retrieval writes nothing to disk") {
    const auto sandbox = std::filesystem::temp_directory_path() / "ehrsum-retrieval-sandbox";
    std::filesystem::remove_all(sandbox);
    std::filesystem::create_directories(sandbox);
    const auto previous = std::filesystem::current_path();
    std::filesystem::current_path(sandbox);
    {
        const auto profile = testkit::VariabilityProfile::named("baseline", 9);
        const auto set = testkit::generate_patient(profile);
        testkit::MockFhirSource source({set}, profile);
        testkit::LoopbackFhirServer server(source);
        fhir::NetworkTransport network;
        auto config = endpoint(server.base_url());
        config.max_pages = 1000;
        fhir::retrieve_patient_context(network, config, set.patient_id);
    }
    std::filesystem::current_path(previous);
    CHECK(std::filesystem::is_empty(sandbox));
    std::filesystem::remove_all(sandbox);
}

TEST_CASE("retrieval report JSON round-trip") {
    const auto report = all_ok_report("p9");
    const auto back = fhir::retrieval_report_from_json(fhir::to_json(report));
    CHECK(fhir::to_json(back) == fhir::to_json(report));
}
