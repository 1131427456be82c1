/**
 * @file mock_source.cpp
 * @brief In-process and loopback FHIR server doubles.
 */

#include "ehrsum/testkit.hpp"

#include <httplib.h>

#include <thread>

namespace ehrsum::testkit {

namespace {

fhir::HttpResponse json_response(int status, const Json& body) {
    return fhir::HttpResponse{status, body.dump()};
}

fhir::HttpResponse outcome(int status, std::string_view code, const std::string& text) {
    return json_response(status, Json{{"resourceType", "OperationOutcome"},
                                      {"issue", Json::array({Json{{"severity", "error"},
                                                                  {"code", code},
                                                                  {"diagnostics", text}}})}});
}

std::string url_decode(std::string_view text) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '%' && i + 2 < text.size()) {
            out.push_back(static_cast<char>(std::stoi(std::string(text.substr(i + 1, 2)), nullptr, 16)));
            i += 2;
        } else if (text[i] == '+') {
            out.push_back(' ');
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

std::map<std::string, std::string> parse_query(std::string_view query) {
    std::map<std::string, std::string> params;
    while (!query.empty()) {
        const auto amp = query.find('&');
        const auto pair = query.substr(0, amp);
        const auto eq = pair.find('=');
        if (eq != std::string_view::npos) params[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
        if (amp == std::string_view::npos) break;
        query.remove_prefix(amp + 1);
    }
    return params;
}

/// FNV-1a over (seed, url, attempt) mapped to [0, 1).
double unit_hash(std::uint64_t seed, std::string_view url) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&](unsigned char byte) {
        h ^= byte;
        h *= 1099511628211ULL;
    };
    for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
    for (char c : url) mix(static_cast<unsigned char>(c));
    return static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53);
}

}  // namespace

MockFhirSource::MockFhirSource(std::vector<SyntheticBundleSet> bundles, VariabilityProfile profile,
                               std::string base_url, int page_size)
    : bundles_(std::move(bundles)), profile_(std::move(profile)), base_url_(std::move(base_url)),
      page_size_(page_size) {
    if (page_size_ < 1) throw std::invalid_argument("page_size must be positive");
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

void MockFhirSource::set_base_url(std::string base_url) {
    std::lock_guard lock(mutex_);
    while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
    base_url_ = std::move(base_url);
}

std::optional<std::string> MockFhirSource::last_authorization() const {
    std::lock_guard lock(mutex_);
    return last_authorization_;
}

fhir::HttpResponse MockFhirSource::get(const fhir::HttpRequest& request) {
    {
        std::lock_guard lock(mutex_);
        last_authorization_.reset();
        for (const auto& [name, value] : request.headers) {
            if (name == "Authorization") last_authorization_ = value;
        }
    }
    return serve(request.url);
}

fhir::HttpResponse MockFhirSource::handle_target(std::string_view target,
                                                 std::vector<std::pair<std::string, std::string>> headers) {
    std::string base;
    {
        std::lock_guard lock(mutex_);
        base = base_url_;
    }
    return get(fhir::HttpRequest{base + std::string(target), std::move(headers)});
}

fhir::HttpResponse MockFhirSource::serve(const std::string& url) {
    ++requests_;
    std::string base;
    {
        std::lock_guard lock(mutex_);
        base = base_url_;
    }
    if (url.rfind(base, 0) != 0) return outcome(404, "not-found", "unknown server");
    std::string_view rest(url);
    rest.remove_prefix(base.size());
    if (rest.empty() || rest.front() != '/') return outcome(404, "not-found", "no resource path");
    rest.remove_prefix(1);

    const auto qpos = rest.find('?');
    const std::string path(rest.substr(0, qpos));
    const auto params = qpos == std::string_view::npos ? std::map<std::string, std::string>{}
                                                       : parse_query(rest.substr(qpos + 1));

    if (profile_.flaky_5xx_rate > 0) {
        std::lock_guard lock(mutex_);
        const int attempt = attempts_[url]++;
        if (attempt == 0 && unit_hash(profile_.seed, url) < profile_.flaky_5xx_rate) {
            ++injected_;
            return outcome(503, "transient", "injected transient failure");
        }
    }

    const auto slash = path.find('/');
    const auto type = fhir::resource_type_from_string(path.substr(0, slash));
    if (!type) return outcome(404, "not-supported", "unknown resource type " + path);

    if (slash != std::string::npos) {
        if (*type != ResourceType::Patient) return outcome(400, "not-supported", "only Patient reads are served");
        const std::string id = url_decode(path.substr(slash + 1));
        for (const auto& b : bundles_) {
            if (b.patient_id == id && b.count(ResourceType::Patient) > 0) {
                return json_response(200, b.resources.at(ResourceType::Patient).front());
            }
        }
        return outcome(404, "not-found", "Patient/" + id + " not found");
    }

    if (profile_.absent_types.count(*type)) return outcome(404, "not-found", "resource type not available");
    if (profile_.unsupported_searches.count(*type)) {
        return outcome(400, "not-supported", "patient search not supported for " + path);
    }
    if (profile_.failing_searches.count(*type)) return outcome(500, "exception", "internal server error");
    const auto patient = params.find("patient");
    if (patient == params.end() || patient->second.empty()) return outcome(400, "required", "patient parameter required");

    static const std::vector<Json> kNone;
    const std::vector<Json>* resources = &kNone;
    for (const auto& b : bundles_) {
        if (b.patient_id == patient->second) {
            if (const auto it = b.resources.find(*type); it != b.resources.end()) resources = &it->second;
        }
    }

    int page = 1;
    if (const auto p = params.find("_page"); p != params.end()) page = std::max(1, std::stoi(p->second));
    const int total = static_cast<int>(resources->size());
    const int pages = std::max(1, (total + page_size_ - 1) / page_size_);
    const std::string self_url = base + "/" + path + "?patient=" + fhir::url_encode(patient->second) + "&_count=100";

    Json bundle{{"resourceType", "Bundle"}, {"type", "searchset"}, {"total", total}};
    Json links = Json::array({Json{{"relation", "self"}, {"url", self_url + "&_page=" + std::to_string(page)}}});
    if (page < pages) links.push_back(Json{{"relation", "next"}, {"url", self_url + "&_page=" + std::to_string(page + 1)}});
    bundle["link"] = std::move(links);
    Json entries = Json::array();
    for (int i = (page - 1) * page_size_; i < std::min(total, page * page_size_); ++i) {
        const Json& r = (*resources)[static_cast<std::size_t>(i)];
        entries.push_back(Json{{"fullUrl", base + "/" + path + "/" + r.value("id", "")},
                               {"resource", r},
                               {"search", Json{{"mode", "match"}}}});
    }
    if (!entries.empty()) bundle["entry"] = std::move(entries);
    return json_response(200, bundle);
}

struct LoopbackFhirServer::Impl {
    httplib::Server server;
    std::thread thread;
};

LoopbackFhirServer::LoopbackFhirServer(MockFhirSource& source) : impl_(std::make_unique<Impl>()) {
    impl_->server.Get(".*", [&source](const httplib::Request& req, httplib::Response& res) {
        std::vector<std::pair<std::string, std::string>> headers;
        if (req.has_header("Authorization")) headers.emplace_back("Authorization", req.get_header_value("Authorization"));
        const auto response = source.handle_target(req.target, std::move(headers));
        res.status = response.status;
        res.set_content(response.body, "application/fhir+json");
    });
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
    if (port_ <= 0) throw std::runtime_error("could not bind a loopback port");
    source.set_base_url(base_url());
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

LoopbackFhirServer::~LoopbackFhirServer() {
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

std::string LoopbackFhirServer::base_url() const {
    return "http://127.0.0.1:" + std::to_string(port_);
}

}  // namespace ehrsum::testkit
