/**
 * @file service.cpp
 */

#include "ehrsum/service.hpp"

#include <httplib.h>

#include <fstream>
#include <iostream>
#include <random>
#include <regex>

namespace ehrsum::service {

namespace {

constexpr std::string_view kPatientUnavailable = "Patient record unavailable from source";

std::optional<Json> parse_body(const std::string& body) {
    auto json = Json::parse(body, nullptr, false);
    if (json.is_discarded() || !json.is_object()) return std::nullopt;
    return json;
}

std::optional<std::string> string_field(const std::optional<Json>& body, const char* key) {
    if (!body) return std::nullopt;
    const auto it = body->find(key);
    if (it == body->end() || !it->is_string() || it->get<std::string>().empty()) return std::nullopt;
    return it->get<std::string>();
}

std::string backend_name(const summary::BackendKind& backend) {
    return backend.type == summary::BackendKind::Type::Hosted ? "hosted" : "deterministic";
}

bool valid_artifact_id(const std::string& id) {
    static const std::regex pattern("[A-Za-z0-9-]{1,64}");
    return std::regex_match(id, pattern);
}

}  // namespace

std::string_view to_string(AuditAction action) {
    switch (action) {
        case AuditAction::Summarize: return "Summarize";
        case AuditAction::Ask: return "Ask";
        case AuditAction::FetchSummary: return "FetchSummary";
    }
    return "";
}

std::string_view to_string(AuditOutcome outcome) {
    switch (outcome) {
        case AuditOutcome::Ok: return "Ok";
        case AuditOutcome::Denied: return "Denied";
        case AuditOutcome::Error: return "Error";
    }
    return "";
}

Json to_json(const AuditEvent& event) {
    return Json{{"event_id", event.event_id},
                {"at", format_instant(event.at)},
                {"actor", event.actor},
                {"action", to_string(event.action)},
                {"patient_ref_hash", event.patient_ref_hash},
                {"outcome", to_string(event.outcome)}};
}

Response error_response(int status, std::string_view message) {
    Response r;
    r.status = status;
    r.body = Json{{"error", message}}.dump();
    return r;
}

// -----------------------------------------------------------------------------
// RateLimiter
// -----------------------------------------------------------------------------

RateLimiter::RateLimiter(int per_minute, fhir::Clock clock) : per_minute_(per_minute), clock_(std::move(clock)) {}

bool RateLimiter::try_acquire(const std::string& key) {
    const auto now = clock_();
    std::lock_guard lock(mutex_);
    auto [it, inserted] = buckets_.try_emplace(key, Bucket{static_cast<double>(per_minute_), now});
    auto& bucket = it->second;
    if (!inserted && now > bucket.refreshed) {
        const double elapsed = std::chrono::duration<double>(now - bucket.refreshed).count();
        bucket.tokens = std::min<double>(per_minute_, bucket.tokens + elapsed * per_minute_ / 60.0);
        bucket.refreshed = now;
    }
    if (bucket.tokens < 1.0) return false;
    bucket.tokens -= 1.0;
    return true;
}

// -----------------------------------------------------------------------------
// Service
// -----------------------------------------------------------------------------

Service::Service(ServiceConfig config, std::shared_ptr<fhir::HttpTransport> transport, fhir::Clock clock,
                 BackendFactory backends)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : std::make_shared<fhir::NetworkTransport>()),
      clock_(std::move(clock)),
      backends_(std::move(backends)),
      limiter_(config_.rate_per_minute, clock_) {
    config_.validate();
    if (!backends_) {
        backends_ = [timeout = config_.fhir.timeout_ms](const summary::BackendKind& kind) {
            return std::make_unique<summary::HttpSummaryBackend>(kind.endpoint, std::chrono::milliseconds(timeout));
        };
    }
    std::random_device rd;
    id_seed_ = std::to_string(rd()) + "-" + std::to_string(rd());
    if (config_.retention == RetentionMode::SummaryOnly) std::filesystem::create_directories(config_.store_path);
}

std::string Service::patient_ref_hash(std::string_view patient_id) const {
    return sha256_hex(config_.audit_salt + ":" + std::string(patient_id));
}

std::string Service::new_id(std::string_view prefix) {
    std::uint64_t n;
    {
        std::lock_guard lock(id_mutex_);
        n = ++id_counter_;
    }
    return std::string(prefix) + "-" + sha256_hex(id_seed_ + "/" + std::to_string(n)).substr(0, 20);
}

std::vector<AuditEvent> Service::audit_events() const {
    std::lock_guard lock(audit_mutex_);
    return audit_;
}

Service::Caller Service::identify(const Request& request) const {
    const auto it = request.headers.find("authorization");
    if (it == request.headers.end()) return {"anonymous", std::nullopt};
    constexpr std::string_view bearer = "Bearer ";
    if (it->second.rfind(bearer, 0) != 0) return {"anonymous", std::nullopt};
    const auto key = config_.api_keys.find(it->second.substr(bearer.size()));
    if (key == config_.api_keys.end()) return {"unknown-key", std::nullopt};
    return {key->second.label, key->second.role};
}

void Service::record(const Caller& caller, AuditAction action, const std::string& patient_hash, AuditOutcome outcome) {
    AuditEvent event{new_id("evt"), clock_(), caller.actor, action, patient_hash, outcome};
    std::lock_guard lock(audit_mutex_);
    if (!config_.audit_path.empty()) {
        std::ofstream out(config_.audit_path, std::ios::app);
        out << to_json(event).dump() << "\n";
    }
    audit_.push_back(std::move(event));
}

std::optional<Response> Service::gate(const Caller& caller, AuditAction action, const std::string& patient_hash,
                                      bool admin_only) {
    std::optional<Response> denied;
    if (!caller.role) {
        denied = error_response(401, "A valid API key is required");
    } else if (admin_only && *caller.role != Role::Administrator) {
        denied = error_response(403, "This operation requires the administrator role");
    } else if (!limiter_.try_acquire(caller.actor)) {
        denied = error_response(429, "Request rate limit reached; try again shortly");
    }
    if (denied && !admin_only) record(caller, action, patient_hash, AuditOutcome::Denied);
    return denied;
}

Response Service::internal_error(const std::exception& e) {
    const auto ref = new_id("ref");
    std::cerr << "ehrsum: internal error " << ref << ": " << e.what() << "\n";
    return error_response(500, "Internal error (reference " + ref + ")");
}

Response Service::handle(const Request& request) {
    std::string path = request.path;
    if (const auto q = path.find('?'); q != std::string::npos) path.resize(q);
    const auto caller = identify(request);

    try {
        if (request.method == "GET" && path == "/health") {
            Response r;
            r.body = Json{{"status", "ok"}, {"version", EHRSUM_VERSION}}.dump();
            return r;
        }
        if (request.method == "POST" && path == "/summarize") return summarize(request, caller);
        if (request.method == "POST" && path == "/ask") return ask(request, caller);
        if (request.method == "GET" && path.rfind("/summary/", 0) == 0) return fetch_summary(path.substr(9), caller);
        if (request.method == "GET" && path == "/audit") return list_audit(caller);
    } catch (const std::exception& e) {
        return internal_error(e);
    }
    return error_response(404, "Not found");
}

Response Service::summarize(const Request& request, const Caller& caller) {
    const auto body = parse_body(request.body);
    const auto patient_id = string_field(body, "patient_id");
    const auto hash = patient_id ? patient_ref_hash(*patient_id) : std::string();
    if (auto denied = gate(caller, AuditAction::Summarize, hash, false)) return *denied;

    auto fail = [&](Response r) {
        record(caller, AuditAction::Summarize, hash, AuditOutcome::Error);
        return r;
    };
    if (!patient_id) return fail(error_response(400, "Request body must be JSON with a patient_id"));

    PipelineOptions options;
    options.clock = clock_;
    options.disclaimer = config_.disclaimer;
    options.backend = config_.backend;
    if (const auto requested = string_field(body, "backend")) {
        if (*requested == "deterministic") {
            options.backend = summary::BackendKind::deterministic();
        } else if (*requested == "hosted") {
            if (config_.backend.type != summary::BackendKind::Type::Hosted) {
                return fail(error_response(400, "No hosted summarization backend is configured"));
            }
        } else {
            return fail(error_response(400, "backend must be deterministic or hosted"));
        }
    }
    if (const auto mode = string_field(body, "render_mode")) {
        if (*mode == "omit-empty") options.mode = summary::RenderMode::OmitEmpty;
        else if (*mode == "notice-empty") options.mode = summary::RenderMode::NoticeEmpty;
        else return fail(error_response(400, "render_mode must be omit-empty or notice-empty"));
    }

    std::unique_ptr<summary::SummaryBackendClient> hosted;
    if (options.backend.type == summary::BackendKind::Type::Hosted) {
        hosted = backends_(options.backend);
        options.hosted_client = hosted.get();
    }

    Response response;
    try {
        // The package and raw records die with this scope.
        const auto out = run_pipeline(*transport_, config_.fhir, *patient_id, options);
        response.body = summary::to_json(out.summary).dump();
        if (config_.retention == RetentionMode::SummaryOnly) {
            const auto artifact_id = new_id("sum");
            const Json record{{"summary", summary::to_json(out.summary)},
                              {"patient_ref_hash", hash},
                              {"timestamps",
                               {{"generated_at", format_instant(out.summary.generated_at)},
                                {"stored_at", format_instant(clock_())}}},
                              {"backend", backend_name(out.summary.backend)},
                              {"artifact_id", artifact_id}};
            const auto target = config_.store_path / (artifact_id + ".json");
            const auto partial = config_.store_path / (artifact_id + ".json.partial");
            {
                std::ofstream file(partial, std::ios::binary);
                file << record.dump();
                if (!file) throw std::runtime_error("cannot write " + partial.string());
            }
            std::filesystem::rename(partial, target);
            response.headers["X-Artifact-Id"] = artifact_id;
        }
    } catch (const fhir::PatientUnavailable&) {
        return fail(error_response(502, kPatientUnavailable));
    } catch (const std::exception& e) {
        return fail(internal_error(e));
    }
    record(caller, AuditAction::Summarize, hash, AuditOutcome::Ok);
    return response;
}

Response Service::ask(const Request& request, const Caller& caller) {
    const auto body = parse_body(request.body);
    const auto patient_id = string_field(body, "patient_id");
    const auto hash = patient_id ? patient_ref_hash(*patient_id) : std::string();
    if (auto denied = gate(caller, AuditAction::Ask, hash, false)) return *denied;

    auto fail = [&](Response r) {
        record(caller, AuditAction::Ask, hash, AuditOutcome::Error);
        return r;
    };
    const auto question = string_field(body, "question");
    if (!patient_id || !question) return fail(error_response(400, "Request body must be JSON with patient_id and question"));

    Response response;
    try {
        const auto ccp = build_package(*transport_, config_.fhir, *patient_id, clock_);
        const auto answer = summary::answer_question(ccp, *question);
        Json json = summary::to_json(answer);
        json["disclaimer"] = config_.disclaimer;
        Json evidence = Json::array();
        for (const auto& id : answer.evidence_refs) {
            const auto* item = ccp.find(id);
            evidence.push_back(Json{{"evidence_id", id}, {"source_url", item ? item->source_url : std::string()}});
        }
        json["evidence"] = std::move(evidence);
        response.body = json.dump();
    } catch (const fhir::PatientUnavailable&) {
        return fail(error_response(502, kPatientUnavailable));
    } catch (const std::exception& e) {
        return fail(internal_error(e));
    }
    record(caller, AuditAction::Ask, hash, AuditOutcome::Ok);
    return response;
}

Response Service::fetch_summary(const std::string& id, const Caller& caller) {
    if (auto denied = gate(caller, AuditAction::FetchSummary, "", false)) return *denied;
    const auto target = config_.store_path / (id + ".json");
    if (config_.retention != RetentionMode::SummaryOnly || !valid_artifact_id(id) || !std::filesystem::exists(target)) {
        record(caller, AuditAction::FetchSummary, "", AuditOutcome::Error);
        return error_response(404, "No stored summary with that id");
    }
    std::ifstream in(target, std::ios::binary);
    const auto record_json = Json::parse(in, nullptr, false);
    if (record_json.is_discarded() || !record_json.contains("summary")) {
        record(caller, AuditAction::FetchSummary, "", AuditOutcome::Error);
        return error_response(500, "Stored summary is unreadable");
    }
    record(caller, AuditAction::FetchSummary, record_json.value("patient_ref_hash", ""), AuditOutcome::Ok);
    Response response;
    response.body = record_json["summary"].dump();
    return response;
}

Response Service::list_audit(const Caller& caller) {
    if (auto denied = gate(caller, AuditAction::FetchSummary, "", true)) return *denied;
    Json events = Json::array();
    for (const auto& e : audit_events()) events.push_back(to_json(e));
    Response response;
    response.body = Json{{"events", std::move(events)}}.dump();
    return response;
}

// -----------------------------------------------------------------------------
// HttpServer
// -----------------------------------------------------------------------------

struct HttpServer::Impl {
    explicit Impl(Service& s) : service(s) {}
    Service& service;
    httplib::Server server;
};

HttpServer::HttpServer(Service& service) : impl_(std::make_unique<Impl>(service)) {
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        Request request;
        request.method = req.method;
        request.path = req.path;
        request.body = req.body;
        for (const auto& [name, value] : req.headers) request.headers.emplace(to_lower(name), value);
        const auto response = impl_->service.handle(request);
        res.status = response.status;
        for (const auto& [name, value] : response.headers) res.set_header(name, value);
        res.set_content(response.body, response.content_type);
    };
    impl_->server.Get(".*", handler);
    impl_->server.Post(".*", handler);
    impl_->server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        res.status = 500;
        res.set_content(Json{{"error", "Internal error"}}.dump(), "application/json");
    });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound <= 0) throw std::runtime_error("cannot bind " + host);
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_) impl_->server.stop();
}

}  // namespace ehrsum::service
