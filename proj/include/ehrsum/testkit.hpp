/**
 * @file testkit.hpp
 * @brief Synthetic vendor-variant patients and an in-process FHIR source that serves them.
 */

#pragma once

#include "ehrsum/fhir_client.hpp"

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>

namespace ehrsum::testkit {

using fhir::ResourceType;

struct VariabilityProfile {
    std::uint64_t seed = 1;
    std::set<ResourceType> populated_types;
    int duplicate_order_count = 0;
    bool conflicting_obs = false;
    int lab_history_length = 3;
    std::set<ResourceType> unsupported_searches;  ///< answered with HTTP 400
    double flaky_5xx_rate = 0.0;                  ///< first attempt of a URL fails with this probability
    std::set<ResourceType> failing_searches;      ///< answered with HTTP 500 on every attempt
    std::set<ResourceType> absent_types;          ///< answered with HTTP 404

    /// @throws std::invalid_argument when an invariant does not hold.
    void validate() const;

    /// "baseline", "missing-resources", "conflicting-observations", "duplicate-orders",
    /// "longitudinal" or "random".
    static VariabilityProfile named(std::string_view name, std::uint64_t seed);
    /// Random populated and unsupported subsets, drawn from `seed`.
    static VariabilityProfile random(std::uint64_t seed);
    static std::vector<std::string> names();

    Json to_json() const;
    static VariabilityProfile from_json(const Json& json);
};

struct SyntheticBundleSet {
    std::string patient_id;
    std::map<ResourceType, std::vector<Json>> resources;
    /// Ground truth: counts per type, newest lab value per code, seeded duplicates and conflicts.
    Json manifest;

    std::size_t count(ResourceType type) const;
};

inline constexpr std::string_view kReferenceTime = "2024-06-30T12:00:00Z";

/// Deterministic in the profile. Throws std::logic_error if the manifest fails its self-check.
SyntheticBundleSet generate_patient(const VariabilityProfile& profile);

/// Counts and newest-lab facts recomputed from the emitted resources.
Json derive_manifest_facts(const SyntheticBundleSet& bundles);

/**
 * In-process FHIR server double.
 *
 * Direct Patient reads, patient-scoped searches paged at `page_size`, HTTP 400
 * for unsupported searches, 404 for absent types, 500 for failing searches and
 * seeded transient 5xx. Request handling is thread-safe.
 */
class MockFhirSource final : public fhir::HttpTransport {
public:
    MockFhirSource(std::vector<SyntheticBundleSet> bundles, VariabilityProfile profile,
                   std::string base_url = "mock://fhir", int page_size = 2);

    fhir::HttpResponse get(const fhir::HttpRequest& request) override;
    /// Same as get() for a URL relative to the server root ("/Condition?patient=p1").
    fhir::HttpResponse handle_target(std::string_view target,
                                     std::vector<std::pair<std::string, std::string>> headers = {});

    const std::string& base_url() const noexcept { return base_url_; }
    void set_base_url(std::string base_url);
    int request_count() const noexcept { return requests_.load(); }
    int injected_errors() const noexcept { return injected_.load(); }
    /// Authorization header of the most recent request, if any.
    std::optional<std::string> last_authorization() const;

private:
    fhir::HttpResponse serve(const std::string& url);

    std::vector<SyntheticBundleSet> bundles_;
    VariabilityProfile profile_;
    std::string base_url_;
    int page_size_;
    std::atomic<int> requests_{0};
    std::atomic<int> injected_{0};
    mutable std::mutex mutex_;
    std::map<std::string, int> attempts_;
    std::optional<std::string> last_authorization_;
};

/// Serves a MockFhirSource over loopback HTTP for the lifetime of the object.
class LoopbackFhirServer {
public:
    explicit LoopbackFhirServer(MockFhirSource& source);
    ~LoopbackFhirServer();
    LoopbackFhirServer(const LoopbackFhirServer&) = delete;
    LoopbackFhirServer& operator=(const LoopbackFhirServer&) = delete;

    std::string base_url() const;
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

/// Writes {dir}/{patient_id}/{Type}.json (a collection Bundle; Patient as the bare resource) and manifest.json.
void write_fixtures(const SyntheticBundleSet& bundles, const std::filesystem::path& dir);

/// @throws std::runtime_error when {dir}/{patient_id} is missing or unreadable.
SyntheticBundleSet read_fixtures(const std::filesystem::path& dir, const std::string& patient_id);

}  // namespace ehrsum::testkit
