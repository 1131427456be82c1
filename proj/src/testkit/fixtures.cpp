/**
 * @file fixtures.cpp
 * @brief On-disk fixture layout: {dir}/{patient_id}/{Type}.json plus manifest.json.
 */

#include "ehrsum/testkit.hpp"

#include <fstream>

namespace ehrsum::testkit {

namespace {

void write_json(const std::filesystem::path& path, const Json& json) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << json.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    Json json = Json::parse(in, nullptr, false);
    if (json.is_discarded()) throw std::runtime_error(path.string() + " is not valid JSON");
    return json;
}

}  // namespace

void write_fixtures(const SyntheticBundleSet& bundles, const std::filesystem::path& dir) {
    const auto root = dir / bundles.patient_id;
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw std::runtime_error("cannot create " + root.string() + ": " + ec.message());

    for (const auto& [type, resources] : bundles.resources) {
        const auto path = root / (std::string(fhir::to_string(type)) + ".json");
        if (type == ResourceType::Patient) {
            write_json(path, resources.front());
            continue;
        }
        Json entries = Json::array();
        for (const auto& r : resources) entries.push_back(Json{{"resource", r}});
        write_json(path, Json{{"resourceType", "Bundle"}, {"type", "collection"}, {"entry", std::move(entries)}});
    }
    write_json(root / "manifest.json", bundles.manifest);
}

SyntheticBundleSet read_fixtures(const std::filesystem::path& dir, const std::string& patient_id) {
    const auto root = dir / patient_id;
    if (!std::filesystem::is_directory(root)) throw std::runtime_error("no fixtures for patient at " + root.string());

    SyntheticBundleSet bundles;
    bundles.patient_id = patient_id;
    for (auto type : fhir::kAllResourceTypes) {
        const auto path = root / (std::string(fhir::to_string(type)) + ".json");
        if (!std::filesystem::exists(path)) continue;
        Json json = read_json(path);
        if (type == ResourceType::Patient) {
            bundles.resources[type].push_back(std::move(json));
            continue;
        }
        for (auto& entry : json.value("entry", Json::array())) {
            if (entry.contains("resource")) bundles.resources[type].push_back(std::move(entry["resource"]));
        }
    }
    if (std::filesystem::exists(root / "manifest.json")) bundles.manifest = read_json(root / "manifest.json");
    return bundles;
}

}  // namespace ehrsum::testkit
