/**
 * @file fhir_client.hpp
 * @brief Targeted FHIR R4 retrieval for one patient with per-type failure isolation.
 *
 * Patient is read directly (GET {base}/Patient/{id}); every other type is a
 * patient-scoped search (GET {base}/{Type}?patient={id}&_count=100) whose
 * Bundle pages are followed through link[relation="next"]. HTTP failures never
 * escape fetch_resource_type: they are classified into ResourceTypeStatus.
 */

#pragma once

#include "ehrsum/common.hpp"

#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>

namespace ehrsum::fhir {

enum class ResourceType {
    Patient,
    Consent,
    Condition,
    Observation,
    MedicationRequest,
    Procedure,
    Encounter,
    FamilyMemberHistory,
    DiagnosticReport,
    Immunization,
    AllergyIntolerance,
    CarePlan,
    ImagingStudy,
    Goal,
    Composition,
    Flag,
    Device,
};

inline constexpr std::array<ResourceType, 17> kAllResourceTypes{
    ResourceType::Patient,           ResourceType::Consent,          ResourceType::Condition,
    ResourceType::Observation,       ResourceType::MedicationRequest, ResourceType::Procedure,
    ResourceType::Encounter,         ResourceType::FamilyMemberHistory, ResourceType::DiagnosticReport,
    ResourceType::Immunization,      ResourceType::AllergyIntolerance, ResourceType::CarePlan,
    ResourceType::ImagingStudy,      ResourceType::Goal,             ResourceType::Composition,
    ResourceType::Flag,              ResourceType::Device,
};

/// Exact FHIR type name.
std::string_view to_string(ResourceType type);
std::optional<ResourceType> resource_type_from_string(std::string_view name);

struct EndpointConfig {
    std::string base_url;
    std::optional<std::string> auth_token;
    int timeout_ms = 10000;
    int max_pages = 50;
    int parallelism = 4;
    /// Delay before the single retry of a 5xx or timeout; doubles per attempt.
    int retry_backoff_ms = 200;

    /// Throws std::invalid_argument when an invariant does not hold.
    void validate() const;
};

struct RawResourceRecord {
    ResourceType resource_type{};
    std::string source_id;
    Json payload;
    std::string source_url;
    Instant retrieved_at{};
};

enum class FetchState { Ok, Absent, Unsupported, Error };

std::string_view to_string(FetchState state);
std::optional<FetchState> fetch_state_from_string(std::string_view name);

struct ResourceTypeStatus {
    ResourceType resource_type{};
    FetchState state = FetchState::Ok;
    int record_count = 0;
    int pages_fetched = 0;
    std::optional<std::string> detail;
};

struct RetrievalReport {
    std::string patient_id;
    std::vector<ResourceTypeStatus> statuses;  ///< one per ResourceType, in kAllResourceTypes order
    Instant started_at{};
    Instant finished_at{};

    const ResourceTypeStatus& status_of(ResourceType type) const;
};

Json to_json(const ResourceTypeStatus& status);
Json to_json(const RetrievalReport& report);
RetrievalReport retrieval_report_from_json(const Json& json);

// -----------------------------------------------------------------------------
// Transport
// -----------------------------------------------------------------------------

struct HttpRequest {
    std::string url;
    std::vector<std::pair<std::string, std::string>> headers;
    std::chrono::milliseconds timeout{10000};
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// Connection refused, DNS failure or timeout; HTTP error statuses are responses, not exceptions.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// GET-only transport. Implementations must accept concurrent calls.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse get(const HttpRequest& request) = 0;
};

/// Network transport over cpp-httplib (http and https).
class NetworkTransport final : public HttpTransport {
public:
    HttpResponse get(const HttpRequest& request) override;
};

// -----------------------------------------------------------------------------
// Retrieval
// -----------------------------------------------------------------------------

using Clock = std::function<Instant()>;

/// Wall-clock UTC, truncated to milliseconds.
Instant system_now();

struct FetchResult {
    std::vector<RawResourceRecord> records;
    ResourceTypeStatus status;
};

struct RetrievalResult {
    std::vector<RawResourceRecord> records;
    RetrievalReport report;
};

/// The Patient anchor could not be read; carries everything gathered so far.
class PatientUnavailable : public std::runtime_error {
public:
    explicit PatientUnavailable(RetrievalReport report);
    const RetrievalReport& report() const noexcept { return report_; }

private:
    RetrievalReport report_;
};

/// Percent-encodes a query or path component.
std::string url_encode(std::string_view text);

FetchResult fetch_resource_type(HttpTransport& transport, const EndpointConfig& config,
                                const std::string& patient_id, ResourceType type,
                                const Clock& clock = system_now);

/**
 * Fetches all 17 types (Patient first, the rest with up to config.parallelism
 * in flight) and merges results in ResourceType order.
 *
 * @throws PatientUnavailable when the Patient read does not succeed.
 */
RetrievalResult retrieve_patient_context(HttpTransport& transport, const EndpointConfig& config,
                                         const std::string& patient_id, const Clock& clock = system_now);

}  // namespace ehrsum::fhir
