/**
 * @file fhir_client.cpp
 */

#include "ehrsum/fhir_client.hpp"

#include <algorithm>
#include <atomic>
#include <regex>
#include <thread>

namespace ehrsum::fhir {

namespace {

constexpr std::array<std::string_view, 17> kTypeNames{
    "Patient",      "Consent",          "Condition",    "Observation", "MedicationRequest", "Procedure",
    "Encounter",    "FamilyMemberHistory", "DiagnosticReport", "Immunization", "AllergyIntolerance",
    "CarePlan",     "ImagingStudy",     "Goal",         "Composition", "Flag",              "Device",
};

constexpr std::array<std::string_view, 4> kStateNames{"Ok", "Absent", "Unsupported", "Error"};

struct Attempt {
    std::optional<HttpResponse> response;
    std::string failure;  // set when response is empty
};

Attempt get_with_retry(HttpTransport& transport, const HttpRequest& request, const EndpointConfig& config) {
    Attempt attempt;
    for (int i = 0; i < 2; ++i) {
        if (i > 0 && config.retry_backoff_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(config.retry_backoff_ms << (i - 1)));
        }
        try {
            attempt.response = transport.get(request);
            attempt.failure.clear();
            if (attempt.response->status < 500) return attempt;
        } catch (const TransportError& e) {
            attempt.response.reset();
            attempt.failure = e.what();
        }
    }
    return attempt;
}

std::string trim_base(std::string base) {
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base;
}

std::optional<std::string> next_link(const Json& bundle) {
    const auto links = bundle.find("link");
    if (links == bundle.end() || !links->is_array()) return std::nullopt;
    for (const auto& link : *links) {
        if (link.value("relation", "") == "next" && link.contains("url") && link["url"].is_string()) {
            return link["url"].get<std::string>();
        }
    }
    return std::nullopt;
}

}  // namespace

std::string_view to_string(ResourceType type) {
    return kTypeNames[static_cast<std::size_t>(type)];
}

std::optional<ResourceType> resource_type_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
        if (kTypeNames[i] == name) return static_cast<ResourceType>(i);
    }
    return std::nullopt;
}

std::string_view to_string(FetchState state) {
    return kStateNames[static_cast<std::size_t>(state)];
}

std::optional<FetchState> fetch_state_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kStateNames.size(); ++i) {
        if (kStateNames[i] == name) return static_cast<FetchState>(i);
    }
    return std::nullopt;
}

void EndpointConfig::validate() const {
    static const std::regex kUrl(R"(^[A-Za-z][A-Za-z0-9+.\-]*://[^/\s]+(/\S*)?$)");
    if (base_url.empty() || !std::regex_match(base_url, kUrl)) {
        throw std::invalid_argument("base_url is not a URL: '" + base_url + "'");
    }
    if (timeout_ms < 1) throw std::invalid_argument("timeout_ms must be positive");
    if (max_pages < 1) throw std::invalid_argument("max_pages must be at least 1");
    if (parallelism < 1) throw std::invalid_argument("parallelism must be at least 1");
    if (retry_backoff_ms < 0) throw std::invalid_argument("retry_backoff_ms must not be negative");
}

const ResourceTypeStatus& RetrievalReport::status_of(ResourceType type) const {
    for (const auto& status : statuses) {
        if (status.resource_type == type) return status;
    }
    throw std::out_of_range("retrieval report has no status for " + std::string(to_string(type)));
}

Json to_json(const ResourceTypeStatus& status) {
    Json json{
        {"resource_type", to_string(status.resource_type)},
        {"state", to_string(status.state)},
        {"record_count", status.record_count},
        {"pages_fetched", status.pages_fetched},
    };
    if (status.detail) json["detail"] = *status.detail;
    return json;
}

Json to_json(const RetrievalReport& report) {
    Json statuses = Json::array();
    for (const auto& status : report.statuses) statuses.push_back(to_json(status));
    return Json{
        {"patient_id", report.patient_id},
        {"statuses", std::move(statuses)},
        {"started_at", format_instant(report.started_at)},
        {"finished_at", format_instant(report.finished_at)},
    };
}

RetrievalReport retrieval_report_from_json(const Json& json) {
    RetrievalReport report;
    report.patient_id = json.at("patient_id").get<std::string>();
    for (const auto& entry : json.at("statuses")) {
        ResourceTypeStatus status;
        const auto type = resource_type_from_string(entry.at("resource_type").get<std::string>());
        const auto state = fetch_state_from_string(entry.at("state").get<std::string>());
        if (!type || !state) throw std::invalid_argument("unknown resource type or state in retrieval report");
        status.resource_type = *type;
        status.state = *state;
        status.record_count = entry.at("record_count").get<int>();
        status.pages_fetched = entry.at("pages_fetched").get<int>();
        if (entry.contains("detail")) status.detail = entry["detail"].get<std::string>();
        report.statuses.push_back(std::move(status));
    }
    const auto started = parse_fhir_datetime(json.at("started_at").get<std::string>());
    const auto finished = parse_fhir_datetime(json.at("finished_at").get<std::string>());
    if (!started || !finished) throw std::invalid_argument("bad timestamp in retrieval report");
    report.started_at = *started;
    report.finished_at = *finished;
    return report;
}

PatientUnavailable::PatientUnavailable(RetrievalReport report)
    : std::runtime_error("Patient record unavailable from source"), report_(std::move(report)) {}

Instant system_now() {
    return std::chrono::floor<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

std::string url_encode(std::string_view text) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0x0f]);
        }
    }
    return out;
}

FetchResult fetch_resource_type(HttpTransport& transport, const EndpointConfig& config,
                                const std::string& patient_id, ResourceType type, const Clock& clock) {
    if (patient_id.empty()) throw std::invalid_argument("patient_id must not be empty");

    FetchResult result;
    auto& status = result.status;
    status.resource_type = type;

    const std::string base = trim_base(config.base_url);
    const std::string type_name(to_string(type));
    const bool direct_read = type == ResourceType::Patient;

    HttpRequest request;
    request.timeout = std::chrono::milliseconds(config.timeout_ms);
    request.headers.emplace_back("Accept", "application/fhir+json");
    if (config.auth_token) request.headers.emplace_back("Authorization", "Bearer " + *config.auth_token);
    request.url = direct_read ? base + "/Patient/" + url_encode(patient_id)
                              : base + "/" + type_name + "?patient=" + url_encode(patient_id) + "&_count=100";

    int skipped = 0;
    std::optional<std::string> next = request.url;
    auto fail = [&](FetchState state, std::string detail) {
        status.state = state;
        status.detail = std::move(detail);
        next.reset();
    };

    while (next && status.pages_fetched < config.max_pages) {
        request.url = *next;
        next.reset();
        const Attempt attempt = get_with_retry(transport, request, config);
        if (!attempt.response) {
            fail(FetchState::Error, "request failed after retry: " + attempt.failure);
            break;
        }
        const HttpResponse& response = *attempt.response;
        if (response.status == 404 && status.pages_fetched == 0) {
            fail(FetchState::Absent, "HTTP 404");
            break;
        }
        if (response.status >= 400 && response.status < 500 && !direct_read && status.pages_fetched == 0) {
            fail(FetchState::Unsupported, "HTTP " + std::to_string(response.status) + " on patient-scoped search");
            break;
        }
        if (response.status < 200 || response.status >= 300) {
            fail(FetchState::Error, "HTTP " + std::to_string(response.status));
            break;
        }

        Json body = Json::parse(response.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            fail(FetchState::Error, "response body is not a JSON object");
            break;
        }
        ++status.pages_fetched;
        const Instant now = clock();

        auto accept = [&](Json resource, std::string source_url) {
            if (!resource.is_object() || resource.value("resourceType", "") != type_name) return;
            const auto id = resource.find("id");
            if (id == resource.end() || !id->is_string() || id->get<std::string>().empty()) {
                ++skipped;
                return;
            }
            RawResourceRecord record;
            record.resource_type = type;
            record.source_id = id->get<std::string>();
            record.source_url = source_url.empty() ? base + "/" + type_name + "/" + record.source_id : source_url;
            record.retrieved_at = now;
            record.payload = std::move(resource);
            result.records.push_back(std::move(record));
        };

        if (direct_read) {
            accept(std::move(body), base + "/Patient/" + url_encode(patient_id));
            break;
        }
        if (body.value("resourceType", "") != "Bundle") {
            fail(FetchState::Error, "search response is not a Bundle");
            break;
        }
        if (const auto entries = body.find("entry"); entries != body.end() && entries->is_array()) {
            for (auto& entry : *entries) {
                if (!entry.is_object() || !entry.contains("resource")) continue;
                std::string full_url = entry.value("fullUrl", "");
                accept(std::move(entry["resource"]), std::move(full_url));
            }
        }
        next = next_link(body);
    }

    status.record_count = static_cast<int>(result.records.size());
    if (status.state == FetchState::Ok) {
        if (direct_read && result.records.empty()) {
            status.state = FetchState::Error;
            status.detail = "Patient read returned no usable resource";
        } else if (next) {
            status.detail = "truncated after " + std::to_string(status.pages_fetched) + " pages";
        }
    }
    if (skipped > 0) {
        const std::string note = std::to_string(skipped) + " entries skipped (missing id)";
        status.detail = status.detail ? *status.detail + "; " + note : note;
    }
    return result;
}

RetrievalResult retrieve_patient_context(HttpTransport& transport, const EndpointConfig& config,
                                         const std::string& patient_id, const Clock& clock) {
    config.validate();
    if (patient_id.empty()) throw std::invalid_argument("patient_id must not be empty");

    RetrievalResult result;
    result.report.patient_id = patient_id;
    result.report.started_at = clock();

    std::vector<FetchResult> fetched(kAllResourceTypes.size());
    fetched[0] = fetch_resource_type(transport, config, patient_id, ResourceType::Patient, clock);

    if (fetched[0].status.state != FetchState::Ok) {
        for (std::size_t i = 1; i < kAllResourceTypes.size(); ++i) {
            fetched[i].status.resource_type = kAllResourceTypes[i];
            fetched[i].status.state = FetchState::Error;
            fetched[i].status.detail = "not requested: patient anchor unavailable";
        }
        for (auto& f : fetched) result.report.statuses.push_back(std::move(f.status));
        result.report.finished_at = std::max(clock(), result.report.started_at);
        throw PatientUnavailable(std::move(result.report));
    }

    std::atomic<std::size_t> cursor{1};
    auto worker = [&] {
        for (std::size_t i = cursor++; i < kAllResourceTypes.size(); i = cursor++) {
            try {
                fetched[i] = fetch_resource_type(transport, config, patient_id, kAllResourceTypes[i], clock);
            } catch (const std::exception& e) {
                fetched[i] = FetchResult{};
                fetched[i].status.resource_type = kAllResourceTypes[i];
                fetched[i].status.state = FetchState::Error;
                fetched[i].status.detail = e.what();
            }
        }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(config.parallelism),
                                               kAllResourceTypes.size() - 1);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }

    for (auto& f : fetched) {
        std::move(f.records.begin(), f.records.end(), std::back_inserter(result.records));
        result.report.statuses.push_back(std::move(f.status));
    }
    result.report.finished_at = std::max(clock(), result.report.started_at);
    return result;
}

}  // namespace ehrsum::fhir
