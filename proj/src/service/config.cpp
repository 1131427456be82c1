/**
 * @file config.cpp
 */

#include "ehrsum/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ehrsum::service {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string unquote(std::string value) {
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front()) {
        return value.substr(1, value.size() - 2);
    }
    // strip a trailing comment only from unquoted values
    const auto hash = value.find(" #");
    if (hash != std::string::npos) value = trim(value.substr(0, hash));
    return value;
}

int to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int n = std::stoi(value, &used);
        if (used == value.size()) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(key + ": expected an integer, got '" + value + "'");
}

const std::vector<std::string>& scalar_keys() {
    static const std::vector<std::string> keys{
        "fhir.base_url",       "fhir.token",        "fhir.timeout_ms",   "fhir.max_pages", "fhir.parallelism",
        "retention.mode",      "retention.store_path", "rate_limit.per_minute", "audit.path", "audit.salt",
        "backend.kind",        "backend.url",       "backend.model",     "qa.disclaimer_text", "listen.host",
        "listen.port"};
    return keys;
}

std::string env_name(const std::string& key) {
    std::string name = "EHRSUM_";
    for (char c : key) name += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return name;
}

}  // namespace

std::string_view to_string(RetentionMode mode) {
    return mode == RetentionMode::Stateless ? "stateless" : "summary-only";
}

std::string_view to_string(Role role) {
    return role == Role::Clinician ? "clinician" : "administrator";
}

void ServiceConfig::set(const std::string& key, const std::string& value) {
    if (key == "fhir.base_url") {
        fhir.base_url = value;
    } else if (key == "fhir.token") {
        if (value.empty()) fhir.auth_token.reset();
        else fhir.auth_token = value;
    } else if (key == "fhir.timeout_ms") {
        fhir.timeout_ms = to_int(key, value);
    } else if (key == "fhir.max_pages") {
        fhir.max_pages = to_int(key, value);
    } else if (key == "fhir.parallelism") {
        fhir.parallelism = to_int(key, value);
    } else if (key == "retention.mode") {
        const auto v = to_lower(value);
        if (v == "stateless") retention = RetentionMode::Stateless;
        else if (v == "summary-only" || v == "summary_only" || v == "summaryonly") retention = RetentionMode::SummaryOnly;
        else throw ConfigError("retention.mode: expected stateless or summary-only, got '" + value + "'");
    } else if (key == "retention.store_path") {
        store_path = value;
    } else if (key == "rate_limit.per_minute") {
        rate_per_minute = to_int(key, value);
    } else if (key == "audit.path") {
        audit_path = value;
    } else if (key == "audit.salt") {
        audit_salt = value;
    } else if (key == "backend.kind") {
        const auto v = to_lower(value);
        if (v == "deterministic") backend.type = summary::BackendKind::Type::Deterministic;
        else if (v == "hosted") backend.type = summary::BackendKind::Type::Hosted;
        else throw ConfigError("backend.kind: expected deterministic or hosted, got '" + value + "'");
    } else if (key == "backend.url") {
        backend.endpoint = value;
    } else if (key == "backend.model") {
        backend.model = value;
    } else if (key == "qa.disclaimer_text") {
        disclaimer = value;
    } else if (key == "listen.host") {
        listen_host = value;
    } else if (key == "listen.port") {
        listen_port = to_int(key, value);
    } else if (key.rfind("api_keys.", 0) == 0) {
        const auto label = key.substr(9);
        const auto colon = value.find(':');
        if (label.empty() || colon == std::string::npos || colon + 1 == value.size()) {
            throw ConfigError(key + ": expected <role>:<secret>");
        }
        const auto role = to_lower(value.substr(0, colon));
        ApiKey api{label, Role::Clinician};
        if (role == "administrator" || role == "admin") api.role = Role::Administrator;
        else if (role != "clinician") throw ConfigError(key + ": unknown role '" + role + "'");
        api_keys[value.substr(colon + 1)] = api;
    } else {
        throw ConfigError("unknown configuration key '" + key + "'");
    }
}

ServiceConfig ServiceConfig::parse(std::string_view text) {
    ServiceConfig config;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto sep = line.find_first_of("=:");
        if (sep == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        auto key = trim(std::string_view(line).substr(0, sep));
        if (!section.empty()) key = section + "." + key;
        config.set(key, unquote(trim(std::string_view(line).substr(sep + 1))));
    }
    return config;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read configuration file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str());
}

void ServiceConfig::apply_environment(const std::function<std::optional<std::string>(const std::string&)>& lookup) {
    for (const auto& key : scalar_keys()) {
        if (auto value = lookup(env_name(key))) set(key, *value);
    }
}

void ServiceConfig::apply_environment() {
    apply_environment([](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) return std::string(v);
        return std::nullopt;
    });
}

void ServiceConfig::validate() const {
    try {
        fhir.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("fhir: ") + e.what());
    }
    if (retention == RetentionMode::SummaryOnly && store_path.empty()) {
        throw ConfigError("retention.store_path is required in summary-only mode");
    }
    if (rate_per_minute <= 0) throw ConfigError("rate_limit.per_minute must be positive");
    if (audit_salt.empty()) throw ConfigError("audit.salt must be set");
    if (backend.type == summary::BackendKind::Type::Hosted && backend.endpoint.empty()) {
        throw ConfigError("backend.url is required for the hosted backend");
    }
    if (listen_port < 0 || listen_port > 65535) throw ConfigError("listen.port out of range");
}

}  // namespace ehrsum::service
