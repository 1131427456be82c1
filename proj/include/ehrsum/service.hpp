/**
 * @file service.hpp
 * @brief HTTP front end: summarize, ask, stored summaries, audit and health.
 *
 * Requests are handled by Service::handle(), which is transport-free so it
 * can be driven directly from tests. HttpServer binds it to a socket.
 */

#pragma once

#include "ehrsum/pipeline.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>

namespace ehrsum::service {

enum class RetentionMode { Stateless, SummaryOnly };
enum class Role { Clinician, Administrator };

std::string_view to_string(RetentionMode mode);
std::string_view to_string(Role role);

struct ApiKey {
    std::string label;  ///< appears in audit events as the actor
    Role role = Role::Clinician;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ServiceConfig {
    fhir::EndpointConfig fhir;
    RetentionMode retention = RetentionMode::Stateless;
    std::filesystem::path store_path;  ///< required in SummaryOnly mode
    int rate_per_minute = 100;
    std::filesystem::path audit_path;  ///< empty keeps audit events in memory only
    std::string audit_salt;
    summary::BackendKind backend = summary::BackendKind::deterministic();
    std::string disclaimer = std::string(summary::kDefaultDisclaimer);
    std::map<std::string, ApiKey> api_keys;  ///< secret -> key
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;

    /// @throws ConfigError
    void validate() const;

    /**
     * Parses "key = value" lines. "[section]" headers prefix the keys that
     * follow, '#' starts a comment and values may be quoted. API keys are
     * given as `api_keys.<label> = <role>:<secret>`.
     *
     * @throws ConfigError on unknown keys or malformed values.
     */
    static ServiceConfig parse(std::string_view text);
    static ServiceConfig load(const std::filesystem::path& path);

    /// Applies EHRSUM_FHIR_TOKEN style overrides for every scalar key.
    void apply_environment(const std::function<std::optional<std::string>(const std::string&)>& lookup);
    void apply_environment();

    /// Sets a single dotted key.
    void set(const std::string& key, const std::string& value);
};

enum class AuditAction { Summarize, Ask, FetchSummary };
enum class AuditOutcome { Ok, Denied, Error };

std::string_view to_string(AuditAction action);
std::string_view to_string(AuditOutcome outcome);

struct AuditEvent {
    std::string event_id;
    Instant at;
    std::string actor;
    AuditAction action{};
    std::string patient_ref_hash;  ///< empty when the request named no patient
    AuditOutcome outcome{};
};

Json to_json(const AuditEvent& event);

/// Every key an audit event may carry.
inline constexpr std::array<std::string_view, 6> kAuditEventKeys{"event_id", "at",               "actor",
                                                                 "action",   "patient_ref_hash", "outcome"};

/// Every key a persisted summary record carries.
inline constexpr std::array<std::string_view, 5> kRetainedRecordKeys{"summary", "patient_ref_hash", "timestamps",
                                                                     "backend", "artifact_id"};

/// Per-key token bucket: capacity and refill both equal the per-minute budget.
class RateLimiter {
public:
    RateLimiter(int per_minute, fhir::Clock clock);

    bool try_acquire(const std::string& key);

private:
    struct Bucket {
        double tokens;
        Instant refreshed;
    };

    int per_minute_;
    fhir::Clock clock_;
    std::mutex mutex_;
    std::map<std::string, Bucket> buckets_;
};

struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> headers;  ///< lowercase names
    std::string body;
};

struct Response {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
    std::map<std::string, std::string> headers;
};

/// Hook used when the configured backend is hosted; defaults to HttpSummaryBackend.
using BackendFactory = std::function<std::unique_ptr<summary::SummaryBackendClient>(const summary::BackendKind&)>;

class Service {
public:
    /// A null transport means NetworkTransport against config.fhir.base_url.
    explicit Service(ServiceConfig config, std::shared_ptr<fhir::HttpTransport> transport = nullptr,
                     fhir::Clock clock = fhir::system_now, BackendFactory backends = nullptr);

    Response handle(const Request& request);

    std::vector<AuditEvent> audit_events() const;
    const ServiceConfig& config() const noexcept { return config_; }
    std::string patient_ref_hash(std::string_view patient_id) const;

private:
    struct Caller {
        std::string actor;
        std::optional<Role> role;
    };

    Response summarize(const Request& request, const Caller& caller);
    Response ask(const Request& request, const Caller& caller);
    Response fetch_summary(const std::string& id, const Caller& caller);
    Response list_audit(const Caller& caller);

    Caller identify(const Request& request) const;
    std::optional<Response> gate(const Caller& caller, AuditAction action, const std::string& patient_hash, bool admin_only);
    void record(const Caller& caller, AuditAction action, const std::string& patient_hash, AuditOutcome outcome);
    Response internal_error(const std::exception& e);
    std::string new_id(std::string_view prefix);

    ServiceConfig config_;
    std::shared_ptr<fhir::HttpTransport> transport_;
    fhir::Clock clock_;
    BackendFactory backends_;
    RateLimiter limiter_;
    mutable std::mutex audit_mutex_;
    std::vector<AuditEvent> audit_;
    std::mutex id_mutex_;
    std::uint64_t id_counter_ = 0;
    std::string id_seed_;
};

/// Short human-readable body for non-200 responses.
Response error_response(int status, std::string_view message);

/// Serves a Service over HTTP until stop() is called.
class HttpServer {
public:
    explicit HttpServer(Service& service);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ehrsum::service
