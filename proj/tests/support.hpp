// Shared fixtures for the test binaries.

#pragma once

#include "ehrsum/evaluator.hpp"
#include "ehrsum/stress_suite.hpp"
#include "ehrsum/testkit.hpp"

#include <deque>
#include <random>

namespace ehrsum::test {

/// Serves fixed responses by URL; unknown URLs get 404. Queued responses are consumed in order,
/// the last one repeating.
class ScriptedTransport final : public fhir::HttpTransport {
public:
    void on(const std::string& url, int status, const std::string& body);
    void on(const std::string& url, int status, const Json& body) { on(url, status, body.dump()); }
    void fail(const std::string& url);  ///< throws TransportError for this URL

    fhir::HttpResponse get(const fhir::HttpRequest& request) override;
    std::vector<std::string> requests() const;

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::deque<fhir::HttpResponse>> responses_;
    std::set<std::string> failing_;
    std::vector<std::string> requests_;
};

Json search_bundle(const std::vector<Json>& resources, const std::optional<std::string>& next = std::nullopt);

fhir::EndpointConfig endpoint(const std::string& base = "http://fhir.test/r4");

Instant reference_instant();
fhir::Clock fixed_clock();

fhir::RawResourceRecord raw(const Json& resource);
fhir::RetrievalReport all_ok_report(const std::string& patient_id = "p1");
Json patient_resource(const std::string& id = "p1");

/// HbA1c-style lab observation.
Json observation(const std::string& id, const std::string& code, const std::string& value, const std::string& when,
                 const std::string& display = "Hemoglobin A1c", const std::string& unit = "%");

ccp::ClinicalContextPackage package_of(const std::vector<Json>& resources,
                                       const fhir::RetrievalReport& report = all_ok_report());

/// Full retrieve -> package -> deterministic summary for a generated patient.
PipelineOutput run_generated(const testkit::VariabilityProfile& profile,
                             summary::RenderMode mode = summary::RenderMode::NoticeEmpty);

/// Hosted-backend double answering with a fixed function of the request.
class StubBackend final : public summary::SummaryBackendClient {
public:
    explicit StubBackend(std::function<Json(const Json&)> reply) : reply_(std::move(reply)) {}
    Json complete(const Json& request) override;
    int calls() const { return calls_.load(); }
    Json last_request() const;

private:
    std::function<Json(const Json&)> reply_;
    std::atomic<int> calls_{0};
    mutable std::mutex mutex_;
    Json last_request_;
};

/// What a well-behaved backend returns for `doc`.
Json backend_response(const summary::SummaryDocument& doc);

// -----------------------------------------------------------------------------
// Dedup oracle
// -----------------------------------------------------------------------------

/// Every generated resource except Patient and Composition, normalized, plus a few verbatim clones.
std::vector<ccp::EvidenceItem> generated_items(std::uint64_t seed);

using SurvivorSet = std::multiset<std::pair<std::string, int>>;

/// (evidence_id, duplicate_count) of every surviving item, by pairwise field comparison.
SurvivorSet oracle_survivors(const std::vector<ccp::EvidenceItem>& items);
SurvivorSet survivors(const std::vector<ccp::EvidenceItem>& items);

// -----------------------------------------------------------------------------
// Seeded mutation corpus
// -----------------------------------------------------------------------------

enum class MutationKind { ValueChange, TemporalSwap, SafetyDeletion, DanglingCitation };

inline constexpr std::array<MutationKind, 4> kMutationKinds{MutationKind::ValueChange, MutationKind::TemporalSwap,
                                                           MutationKind::SafetyDeletion,
                                                           MutationKind::DanglingCitation};

std::string_view to_string(MutationKind kind);

struct Mutation {
    MutationKind kind{};
    summary::SummaryDocument doc;
    eval::ErrorCategory expected{};
    std::string site;  ///< the EvaluationError::ref the evaluator should report
};

/// One single-site mutation of a clean document, or nullopt when the document has no eligible site.
std::optional<Mutation> mutate(const summary::SummaryDocument& clean, const ccp::ClinicalContextPackage& ccp,
                               MutationKind kind, std::mt19937_64& rng);

}  // namespace ehrsum::test
