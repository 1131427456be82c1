/**
 * @file network_transport.cpp
 * @brief cpp-httplib backed HttpTransport.
 */

#include "ehrsum/fhir_client.hpp"

#include <httplib.h>

namespace ehrsum::fhir {

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string target;  // /path?query
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw TransportError("not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpResponse NetworkTransport::get(const HttpRequest& request) {
    const auto [origin, target] = split_url(request.url);
    httplib::Client client(origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    for (const auto& [name, value] : request.headers) headers.emplace(name, value);
    auto result = client.Get(target, headers);
    if (!result) throw TransportError(httplib::to_string(result.error()));
    return HttpResponse{result->status, result->body};
}

}  // namespace ehrsum::fhir
