/**
 * @file normalizer.cpp
 */

#include "ehrsum/normalizer.hpp"

#include <algorithm>
#include <set>
#include <tuple>

namespace ehrsum::ccp {

namespace {

constexpr std::array<std::string_view, 16> kSectionNames{
    "PatientInformation", "AlertsAndFlags",    "AllergiesAndIntolerances", "Conditions",
    "Medications",        "LaboratoryAndVitalSigns", "Procedures",         "Encounters",
    "DiagnosticReports",  "ImagingStudies",    "Immunizations",            "FamilyHistory",
    "CarePlans",          "Goals",             "Devices",                  "Consent",
};

constexpr std::array<std::string_view, 16> kSectionLabels{
    "Patient Information", "Alerts and Flags",  "Allergies and Intolerances", "Conditions",
    "Medications",         "Laboratory and Vital Signs", "Procedures",        "Encounters",
    "Diagnostic Reports",  "Imaging Studies",   "Immunizations",              "Family History",
    "Care Plans",          "Goals",             "Devices",                    "Consent",
};

constexpr std::array<std::string_view, 3> kStateNames{"Populated", "Empty", "Unavailable"};
constexpr std::array<std::string_view, 4> kDirectionNames{"Rising", "Falling", "Flat", "Single"};

using Path = std::vector<std::string_view>;

const Json* walk(const Json& root, const Path& path) {
    const Json* node = &root;
    for (std::string_view step : path) {
        if (node->is_array()) {
            if (node->empty()) return nullptr;
            node = &node->front();
        }
        if (!node->is_object()) return nullptr;
        const auto it = node->find(std::string(step));
        if (it == node->end()) return nullptr;
        node = &*it;
    }
    if (node->is_array()) {
        if (node->empty()) return nullptr;
        node = &node->front();
    }
    return node;
}

std::optional<std::string> string_at(const Json& root, const Path& path) {
    const Json* node = walk(root, path);
    if (node && node->is_string() && !node->get<std::string>().empty()) return node->get<std::string>();
    return std::nullopt;
}

std::vector<Path> timestamp_paths(ResourceType type) {
    switch (type) {
        case ResourceType::Observation: return {{"effectiveDateTime"}, {"effectivePeriod", "start"}, {"issued"}};
        case ResourceType::Condition: return {{"onsetDateTime"}, {"recordedDate"}};
        case ResourceType::MedicationRequest: return {{"authoredOn"}};
        case ResourceType::Encounter: return {{"period", "start"}};
        case ResourceType::Procedure: return {{"performedDateTime"}, {"performedPeriod", "start"}};
        case ResourceType::DiagnosticReport: return {{"effectiveDateTime"}, {"issued"}};
        case ResourceType::Immunization: return {{"occurrenceDateTime"}};
        case ResourceType::AllergyIntolerance: return {{"onsetDateTime"}, {"recordedDate"}};
        case ResourceType::FamilyMemberHistory: return {{"date"}};
        case ResourceType::CarePlan: return {{"period", "start"}, {"created"}};
        case ResourceType::ImagingStudy: return {{"started"}};
        case ResourceType::Goal: return {{"startDate"}, {"statusDate"}};
        case ResourceType::Flag: return {{"period", "start"}};
        case ResourceType::Consent: return {{"dateTime"}};
        case ResourceType::Composition: return {{"date"}};
        case ResourceType::Patient:
        case ResourceType::Device: return {};
    }
    return {};
}

/// The CodeableConcept that names the record.
Path concept_path(ResourceType type) {
    switch (type) {
        case ResourceType::MedicationRequest: return {"medicationCodeableConcept"};
        case ResourceType::Encounter: return {"type"};
        case ResourceType::FamilyMemberHistory: return {"condition", "code"};
        case ResourceType::Immunization: return {"vaccineCode"};
        case ResourceType::CarePlan: return {"category"};
        case ResourceType::ImagingStudy: return {"procedureCode"};
        case ResourceType::Goal: return {"description"};
        case ResourceType::Device: return {"type"};
        case ResourceType::Consent: return {"category"};
        default: return {"code"};
    }
}

/// Free-text fields consulted after the code_concept, before the floor.
std::vector<Path> text_fallbacks(ResourceType type) {
    switch (type) {
        case ResourceType::MedicationRequest: return {{"medicationReference", "display"}};
        case ResourceType::CarePlan: return {{"title"}};
        case ResourceType::ImagingStudy: return {{"description"}};
        case ResourceType::Device: return {{"deviceName", "name"}};
        case ResourceType::FamilyMemberHistory: return {{"relationship", "text"}};
        default: return {};
    }
}

std::optional<std::string> status_of(const Json& payload, ResourceType type) {
    switch (type) {
        case ResourceType::Condition:
        case ResourceType::AllergyIntolerance: return string_at(payload, {"clinicalStatus", "coding", "code"});
        case ResourceType::Goal: return string_at(payload, {"lifecycleStatus"});
        case ResourceType::Patient: return std::nullopt;
        default: return string_at(payload, {"status"});
    }
}

std::vector<Coding> codings_of(const Json* code_concept) {
    std::vector<Coding> codes;
    if (!code_concept || !code_concept->is_object()) return codes;
    const auto it = code_concept->find("coding");
    if (it == code_concept->end() || !it->is_array()) return codes;
    for (const auto& c : *it) {
        if (!c.is_object()) continue;
        Coding coding{c.value("system", ""), c.value("code", ""), c.value("display", "")};
        if (coding.code.empty() && coding.display.empty()) continue;
        codes.push_back(std::move(coding));
    }
    return codes;
}

std::string concept_label(const Json& code_concept) {
    for (const auto& c : codings_of(&code_concept)) {
        if (!c.display.empty()) return c.display;
    }
    if (code_concept.contains("text") && code_concept["text"].is_string()) return code_concept["text"].get<std::string>();
    const auto codes = codings_of(&code_concept);
    return codes.empty() ? std::string{} : codes.front().code;
}

std::string patient_name(const Json& payload) {
    const Json* name = walk(payload, {"name"});
    if (!name || !name->is_object()) return {};
    if (name->contains("text") && (*name)["text"].is_string()) return (*name)["text"].get<std::string>();
    std::string out;
    if (const auto given = name->find("given"); given != name->end() && given->is_array()) {
        for (const auto& g : *given) {
            if (!g.is_string()) continue;
            if (!out.empty()) out += ' ';
            out += g.get<std::string>();
        }
    }
    if (const auto family = string_at(*name, {"family"})) {
        if (!out.empty()) out += ' ';
        out += *family;
    }
    return out;
}

void put(std::map<std::string, std::string>& attrs, const std::string& key, std::optional<std::string> value) {
    if (value && !value->empty()) attrs[key] = std::move(*value);
}

std::optional<std::string> instant_at(const Json& payload, const Path& path) {
    const auto raw = string_at(payload, path);
    if (!raw) return std::nullopt;
    const auto parsed = parse_fhir_datetime(*raw);
    return parsed ? std::optional<std::string>(format_instant(*parsed)) : raw;
}

void extract_observation_value(const Json& payload, std::map<std::string, std::string>& attrs) {
    if (const auto q = payload.find("valueQuantity"); q != payload.end() && q->is_object()) {
        if (const auto v = q->find("value"); v != q->end()) {
            if (v->is_number()) attrs["value"] = canonical_number(v->get<double>());
            else if (v->is_string()) put(attrs, "value", canonical_number(v->get<std::string>()));
        }
        put(attrs, "unit", string_at(*q, {"unit"}));
        if (!attrs.count("unit")) put(attrs, "unit", string_at(*q, {"code"}));
        return;
    }
    if (const auto v = payload.find("valueInteger"); v != payload.end() && v->is_number()) {
        attrs["value"] = canonical_number(v->get<double>());
    } else if (const auto s = string_at(payload, {"valueString"})) {
        attrs["value"] = *s;
    } else if (const auto b = payload.find("valueBoolean"); b != payload.end() && b->is_boolean()) {
        attrs["value"] = b->get<bool>() ? "true" : "false";
    } else if (const auto cc = payload.find("valueCodeableConcept"); cc != payload.end() && cc->is_object()) {
        put(attrs, "value", concept_label(*cc));
    }
}

std::map<std::string, std::string> extract_attributes(const Json& payload, ResourceType type) {
    std::map<std::string, std::string> attrs;
    switch (type) {
        case ResourceType::Patient:
            put(attrs, "gender", string_at(payload, {"gender"}));
            put(attrs, "birth_date", string_at(payload, {"birthDate"}));
            break;
        case ResourceType::Observation: {
            extract_observation_value(payload, attrs);
            std::vector<std::string> categories;
            if (const auto cats = payload.find("category"); cats != payload.end() && cats->is_array()) {
                for (const auto& cat : *cats) {
                    for (const auto& c : codings_of(&cat)) categories.push_back(c.code);
                }
            }
            if (!categories.empty()) {
                std::string joined;
                for (const auto& c : categories) joined += (joined.empty() ? "" : ",") + c;
                attrs["category"] = joined;
            }
            break;
        }
        case ResourceType::MedicationRequest:
            put(attrs, "dosage", string_at(payload, {"dosageInstruction", "text"}));
            put(attrs, "intent", string_at(payload, {"intent"}));
            break;
        case ResourceType::AllergyIntolerance:
            put(attrs, "criticality", string_at(payload, {"criticality"}));
            break;
        case ResourceType::Flag:
            put(attrs, "code", string_at(payload, {"code", "coding", "code"}));
            put(attrs, "period_start", instant_at(payload, {"period", "start"}));
            put(attrs, "period_end", instant_at(payload, {"period", "end"}));
            break;
        case ResourceType::Encounter: {
            put(attrs, "class", string_at(payload, {"class", "display"}));
            if (!attrs.count("class")) put(attrs, "class", string_at(payload, {"class", "code"}));
            put(attrs, "period_start", instant_at(payload, {"period", "start"}));
            put(attrs, "period_end", instant_at(payload, {"period", "end"}));
            break;
        }
        case ResourceType::FamilyMemberHistory: {
            if (const Json* rel = walk(payload, {"relationship"}); rel && rel->is_object()) {
                put(attrs, "relationship", concept_label(*rel));
            }
            break;
        }
        default: break;
    }
    return attrs;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (const auto& p : parts) {
        if (!out.empty()) out += sep;
        out += p;
    }
    return out;
}

std::vector<std::string> split_ids(const std::string& joined) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= joined.size()) {
        const auto end = joined.find(',', start);
        const auto piece = joined.substr(start, end == std::string::npos ? std::string::npos : end - start);
        if (!piece.empty()) out.push_back(piece);
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

Json coding_json(const Coding& c) {
    return Json{{"system", c.system}, {"code", c.code}, {"display", c.display}};
}

Coding coding_from_json(const Json& j) {
    return Coding{j.value("system", ""), j.value("code", ""), j.value("display", "")};
}

Json point_json(const TrendPoint& p) {
    return Json{{"at", format_instant(p.at)}, {"value", p.value}, {"unit", p.unit}};
}

Instant required_instant(const Json& j) {
    const auto at = parse_fhir_datetime(j.get<std::string>());
    if (!at) throw std::invalid_argument("bad instant: " + j.get<std::string>());
    return *at;
}

TrendPoint point_from_json(const Json& j) {
    return TrendPoint{required_instant(j.at("at")), j.at("value").get<std::string>(), j.value("unit", "")};
}

}  // namespace

std::string_view to_string(SectionKey key) {
    return kSectionNames[static_cast<std::size_t>(key)];
}

std::optional<SectionKey> section_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kSectionNames.size(); ++i) {
        if (kSectionNames[i] == name) return static_cast<SectionKey>(i);
    }
    return std::nullopt;
}

std::string_view section_label(SectionKey key) {
    return kSectionLabels[static_cast<std::size_t>(key)];
}

std::string_view to_string(SectionState state) {
    return kStateNames[static_cast<std::size_t>(state)];
}

std::string_view to_string(TrendDirection direction) {
    return kDirectionNames[static_cast<std::size_t>(direction)];
}

std::optional<SectionKey> section_for(ResourceType type) {
    switch (type) {
        case ResourceType::Patient: return SectionKey::PatientInformation;
        case ResourceType::Consent: return SectionKey::Consent;
        case ResourceType::Condition: return SectionKey::Conditions;
        case ResourceType::Observation: return SectionKey::LaboratoryAndVitalSigns;
        case ResourceType::MedicationRequest: return SectionKey::Medications;
        case ResourceType::Procedure: return SectionKey::Procedures;
        case ResourceType::Encounter: return SectionKey::Encounters;
        case ResourceType::FamilyMemberHistory: return SectionKey::FamilyHistory;
        case ResourceType::DiagnosticReport: return SectionKey::DiagnosticReports;
        case ResourceType::Immunization: return SectionKey::Immunizations;
        case ResourceType::AllergyIntolerance: return SectionKey::AllergiesAndIntolerances;
        case ResourceType::CarePlan: return SectionKey::CarePlans;
        case ResourceType::ImagingStudy: return SectionKey::ImagingStudies;
        case ResourceType::Goal: return SectionKey::Goals;
        case ResourceType::Composition: return std::nullopt;
        case ResourceType::Flag: return SectionKey::AlertsAndFlags;
        case ResourceType::Device: return SectionKey::Devices;
    }
    return std::nullopt;
}

std::vector<ResourceType> types_for(SectionKey key) {
    std::vector<ResourceType> out;
    for (auto type : fhir::kAllResourceTypes) {
        if (section_for(type) == key) out.push_back(type);
    }
    return out;
}

std::string_view EvidenceItem::resource_type_name() const {
    const std::string_view id = evidence_id;
    return id.substr(0, id.find('/'));
}

std::optional<std::string> EvidenceItem::attribute(const std::string& name) const {
    const auto it = attributes.find(name);
    if (it == attributes.end()) return std::nullopt;
    return it->second;
}

std::optional<Instant> extract_timestamp(const RawResourceRecord& record, std::vector<std::string>* warnings) {
    for (const auto& path : timestamp_paths(record.resource_type)) {
        const auto raw = string_at(record.payload, path);
        if (!raw) continue;
        if (auto parsed = parse_fhir_datetime(*raw)) return parsed;
        if (warnings) {
            std::string field;
            for (auto step : path) field += (field.empty() ? "" : ".") + std::string(step);
            warnings->push_back(std::string(fhir::to_string(record.resource_type)) + "/" + record.source_id +
                                ": unparseable " + field + " '" + *raw + "'");
        }
    }
    return std::nullopt;
}

EvidenceItem normalize_record(const RawResourceRecord& record, std::vector<std::string>* warnings) {
    const auto section = section_for(record.resource_type);
    if (!section) throw std::invalid_argument("Composition records are metadata, not evidence");

    const std::string type_name(fhir::to_string(record.resource_type));
    const Json& payload = record.payload;
    if (!payload.is_object() || payload.value("resourceType", "") != type_name) {
        throw InvalidRecord(type_name + " record has a missing or mismatched resourceType");
    }
    const auto id = string_at(payload, {"id"});
    if (!id) throw InvalidRecord(type_name + " record has no id");

    EvidenceItem item;
    item.evidence_id = type_name + "/" + *id;
    item.section = *section;
    item.source_url = record.source_url;
    item.effective_at = extract_timestamp(record, warnings);
    item.status = status_of(payload, record.resource_type);
    item.attributes = extract_attributes(payload, record.resource_type);

    if (record.resource_type == ResourceType::Patient) {
        item.display = patient_name(payload);
    } else {
        const Json* code_concept = walk(payload, concept_path(record.resource_type));
        if (code_concept && code_concept->is_object()) {
            item.codes = codings_of(code_concept);
            item.display = concept_label(*code_concept);
        }
        for (const auto& path : text_fallbacks(record.resource_type)) {
            if (!item.display.empty()) break;
            if (auto text = string_at(payload, path)) item.display = *text;
        }
    }
    if (item.display.empty()) item.display = "Unlabeled " + type_name;
    return item;
}

void sort_items(std::vector<EvidenceItem>& items) {
    std::stable_sort(items.begin(), items.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
        if (a.effective_at && b.effective_at) return *a.effective_at > *b.effective_at;
        return a.effective_at.has_value() && !b.effective_at.has_value();
    });
}

std::vector<EvidenceItem> deduplicate(const std::vector<EvidenceItem>& items) {
    using Key = std::tuple<int, std::string, std::string, std::optional<Instant>, std::optional<std::string>,
                           std::optional<std::string>>;
    std::map<Key, std::size_t> group_of;
    std::vector<std::vector<std::size_t>> groups;

    struct Slot {
        bool grouped;
        std::size_t index;
    };
    std::vector<Slot> slots;

    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        const Coding* code = item.primary_code();
        if (!code || code->code.empty()) {
            slots.push_back({false, i});
            continue;
        }
        Key key{static_cast<int>(item.section),
                code->system,
                code->code,
                item.effective_at ? std::optional<Instant>(floor_to_day(*item.effective_at)) : std::nullopt,
                item.status,
                item.attribute("value")};
        const auto [it, inserted] = group_of.try_emplace(key, groups.size());
        if (inserted) {
            groups.emplace_back();
            slots.push_back({true, it->second});
        }
        groups[it->second].push_back(i);
    }

    std::vector<EvidenceItem> out;
    out.reserve(slots.size());
    for (const auto& slot : slots) {
        if (!slot.grouped) {
            out.push_back(items[slot.index]);
            continue;
        }
        const auto& members = groups[slot.index];
        std::size_t survivor = members.front();
        for (std::size_t m : members) {
            const auto& cand = items[m].effective_at;
            const auto& best = items[survivor].effective_at;
            if (cand && (!best || *cand > *best)) survivor = m;
        }
        EvidenceItem merged = items[survivor];
        if (members.size() > 1) {
            int total = 0;
            std::vector<std::string> collapsed;
            for (std::size_t m : members) {
                total += items[m].duplicate_count;
                if (m != survivor) collapsed.push_back(items[m].evidence_id);
                if (const auto prior = items[m].attribute("collapsed_ids")) {
                    for (auto& id : split_ids(*prior)) collapsed.push_back(std::move(id));
                }
            }
            merged.duplicate_count = total;
            merged.attributes["collapsed_ids"] = join(collapsed, ",");
        }
        out.push_back(std::move(merged));
    }
    return out;
}

std::vector<TrendEntry> compute_trends(const std::vector<EvidenceItem>& lab_items) {
    struct Point {
        const EvidenceItem* item;
        Instant at;
        double value;
    };
    std::vector<std::string> code_order;
    std::map<std::string, std::vector<Point>> by_code;
    for (const auto& item : lab_items) {
        const Coding* code = item.primary_code();
        const auto raw = item.attribute("value");
        const auto value = raw ? parse_number(*raw) : std::nullopt;
        if (!code || code->code.empty() || !item.effective_at || !value) continue;
        const std::string key = code->system + "|" + code->code;
        auto& points = by_code[key];
        if (points.empty()) code_order.push_back(key);
        points.push_back({&item, *item.effective_at, *value});
    }

    std::vector<TrendEntry> trends;
    for (const auto& key : code_order) {
        const auto& points = by_code[key];
        const Point* latest = &points.front();
        for (const auto& p : points) {
            if (p.at > latest->at) latest = &p;
        }
        const Point* prior = nullptr;
        for (const auto& p : points) {
            if (p.at < latest->at && (!prior || p.at > prior->at)) prior = &p;
        }

        TrendEntry trend;
        trend.code = *latest->item->primary_code();
        trend.display = latest->item->display;
        trend.latest = {latest->at, canonical_number(latest->value), latest->item->attribute("unit").value_or("")};
        trend.latest_evidence_id = latest->item->evidence_id;
        if (prior) {
            trend.prior = TrendPoint{prior->at, canonical_number(prior->value),
                                     prior->item->attribute("unit").value_or("")};
            trend.prior_evidence_id = prior->item->evidence_id;
            const double diff = latest->value - prior->value;
            const double scale = std::max(std::abs(latest->value), std::abs(prior->value));
            if (std::abs(diff) <= kFlatTolerance * scale) trend.direction = TrendDirection::Flat;
            else trend.direction = diff > 0 ? TrendDirection::Rising : TrendDirection::Falling;
        }
        trends.push_back(std::move(trend));
    }
    return trends;
}

ClinicalContextPackage build_context_package(const std::vector<RawResourceRecord>& records,
                                             const RetrievalReport& report) {
    ClinicalContextPackage ccp;
    ccp.report_ = report;
    ccp.built_at_ = report.finished_at;

    std::array<std::vector<EvidenceItem>, 16> buckets;
    std::set<std::string> used_ids;
    bool have_anchor = false;

    for (const auto& record : records) {
        if (record.resource_type == ResourceType::Composition) {
            Json meta{{"id", record.source_id}};
            if (auto title = string_at(record.payload, {"title"})) meta["title"] = *title;
            if (auto at = extract_timestamp(record, &ccp.warnings_)) meta["date"] = format_instant(*at);
            Json titles = Json::array();
            if (const auto secs = record.payload.find("section"); secs != record.payload.end() && secs->is_array()) {
                for (const auto& s : *secs) {
                    if (s.is_object() && s.contains("title") && s["title"].is_string()) titles.push_back(s["title"]);
                }
            }
            meta["section_titles"] = std::move(titles);
            ccp.composition_.push_back(std::move(meta));
            continue;
        }

        EvidenceItem item;
        try {
            item = normalize_record(record, &ccp.warnings_);
        } catch (const InvalidRecord& e) {
            ccp.warnings_.push_back(std::string("skipped record: ") + e.what());
            ++ccp.skipped_records_;
            continue;
        }
        if (item.section == SectionKey::PatientInformation) {
            if (have_anchor) {
                ccp.warnings_.push_back("skipped additional Patient record " + item.evidence_id);
                ++ccp.skipped_records_;
                continue;
            }
            have_anchor = true;
        }
        if (!used_ids.insert(item.evidence_id).second) {
            int n = 2;
            while (!used_ids.insert(item.evidence_id + "#" + std::to_string(n)).second) ++n;
            item.evidence_id += "#" + std::to_string(n);
        }
        buckets[static_cast<std::size_t>(item.section)].push_back(std::move(item));
    }
    if (!have_anchor) throw MissingAnchor();

    ccp.patient_ = buckets[0].front();
    for (auto key : kAllSections) {
        auto& items = buckets[static_cast<std::size_t>(key)];
        sort_items(items);
        Section section;
        section.key = key;
        section.items = deduplicate(items);
        if (!section.items.empty()) {
            section.state = SectionState::Populated;
        } else {
            bool any_status = false;
            bool all_failed = true;
            for (auto type : types_for(key)) {
                for (const auto& s : report.statuses) {
                    if (s.resource_type != type) continue;
                    any_status = true;
                    if (s.state != fhir::FetchState::Unsupported && s.state != fhir::FetchState::Error) {
                        all_failed = false;
                    }
                }
            }
            section.state = any_status && all_failed ? SectionState::Unavailable : SectionState::Empty;
        }
        ccp.sections_.push_back(std::move(section));
    }
    ccp.trends_ = compute_trends(ccp.sections_[static_cast<std::size_t>(SectionKey::LaboratoryAndVitalSigns)].items);
    ccp.index();
    return ccp;
}

void ClinicalContextPackage::index() {
    by_id_.clear();
    for (std::size_t s = 0; s < sections_.size(); ++s) {
        for (std::size_t i = 0; i < sections_[s].items.size(); ++i) {
            if (!by_id_.emplace(sections_[s].items[i].evidence_id, std::make_pair(s, i)).second) {
                throw std::invalid_argument("duplicate evidence id " + sections_[s].items[i].evidence_id);
            }
        }
    }
}

const EvidenceItem* ClinicalContextPackage::find(std::string_view evidence_id) const {
    const auto it = by_id_.find(evidence_id);
    if (it == by_id_.end()) return nullptr;
    return &sections_[it->second.first].items[it->second.second];
}

std::size_t ClinicalContextPackage::item_count() const {
    return by_id_.size();
}

Json to_json(const EvidenceItem& item) {
    Json codes = Json::array();
    for (const auto& c : item.codes) codes.push_back(coding_json(c));
    Json json{
        {"evidence_id", item.evidence_id},
        {"section", to_string(item.section)},
        {"display", item.display},
        {"codes", std::move(codes)},
        {"attributes", item.attributes},
        {"duplicate_count", item.duplicate_count},
        {"source_url", item.source_url},
    };
    if (item.effective_at) json["effective_at"] = format_instant(*item.effective_at);
    if (item.status) json["status"] = *item.status;
    return json;
}

EvidenceItem evidence_item_from_json(const Json& json) {
    EvidenceItem item;
    item.evidence_id = json.at("evidence_id").get<std::string>();
    const auto section = section_from_string(json.at("section").get<std::string>());
    if (!section) throw std::invalid_argument("unknown section " + json.at("section").dump());
    item.section = *section;
    item.display = json.at("display").get<std::string>();
    for (const auto& c : json.value("codes", Json::array())) item.codes.push_back(coding_from_json(c));
    if (json.contains("effective_at")) item.effective_at = required_instant(json["effective_at"]);
    if (json.contains("status")) item.status = json["status"].get<std::string>();
    item.attributes = json.value("attributes", Json::object()).get<std::map<std::string, std::string>>();
    item.duplicate_count = json.value("duplicate_count", 1);
    item.source_url = json.value("source_url", "");
    if (item.evidence_id.empty() || item.duplicate_count < 1 || item.display.empty()) {
        throw std::invalid_argument("evidence item violates its invariants: " + item.evidence_id);
    }
    return item;
}

Json to_json(const TrendEntry& trend) {
    Json json{
        {"code", coding_json(trend.code)},
        {"display", trend.display},
        {"latest", point_json(trend.latest)},
        {"direction", to_string(trend.direction)},
        {"latest_evidence_id", trend.latest_evidence_id},
    };
    if (trend.prior) json["prior"] = point_json(*trend.prior);
    if (trend.prior_evidence_id) json["prior_evidence_id"] = *trend.prior_evidence_id;
    return json;
}

Json ClinicalContextPackage::to_json() const {
    Json sections = Json::array();
    for (const auto& section : sections_) {
        Json items = Json::array();
        for (const auto& item : section.items) items.push_back(ccp::to_json(item));
        sections.push_back(
            Json{{"key", to_string(section.key)}, {"state", to_string(section.state)}, {"items", std::move(items)}});
    }
    Json trends = Json::array();
    for (const auto& t : trends_) trends.push_back(ccp::to_json(t));
    return Json{
        {"schema_version", kSchemaVersion},
        {"patient", ccp::to_json(patient_)},
        {"sections", std::move(sections)},
        {"trends", std::move(trends)},
        {"retrieval_report", fhir::to_json(report_)},
        {"built_at", format_instant(built_at_)},
        {"warnings", warnings_},
        {"metadata", Json{{"skipped_records", skipped_records_}, {"composition", composition_}}},
    };
}

ClinicalContextPackage ClinicalContextPackage::from_json(const Json& json) {
    if (json.value("schema_version", "") != kSchemaVersion) {
        throw std::invalid_argument("unsupported context package schema_version");
    }
    ClinicalContextPackage ccp;
    ccp.patient_ = evidence_item_from_json(json.at("patient"));
    const auto& sections = json.at("sections");
    if (!sections.is_array() || sections.size() != kAllSections.size()) {
        throw std::invalid_argument("context package must contain all 16 sections");
    }
    for (std::size_t i = 0; i < kAllSections.size(); ++i) {
        const auto& s = sections[i];
        Section section;
        section.key = kAllSections[i];
        if (s.at("key").get<std::string>() != to_string(section.key)) {
            throw std::invalid_argument("sections out of canonical order");
        }
        const auto state = s.at("state").get<std::string>();
        if (state == "Populated") section.state = SectionState::Populated;
        else if (state == "Empty") section.state = SectionState::Empty;
        else if (state == "Unavailable") section.state = SectionState::Unavailable;
        else throw std::invalid_argument("unknown section state " + state);
        for (const auto& item : s.at("items")) section.items.push_back(evidence_item_from_json(item));
        if ((section.state == SectionState::Populated) != !section.items.empty()) {
            throw std::invalid_argument("section state disagrees with its items");
        }
        ccp.sections_.push_back(std::move(section));
    }
    for (const auto& t : json.at("trends")) {
        TrendEntry trend;
        trend.code = coding_from_json(t.at("code"));
        trend.display = t.value("display", "");
        trend.latest = point_from_json(t.at("latest"));
        if (t.contains("prior")) trend.prior = point_from_json(t["prior"]);
        const auto direction = t.at("direction").get<std::string>();
        for (std::size_t d = 0; d < kDirectionNames.size(); ++d) {
            if (kDirectionNames[d] == direction) trend.direction = static_cast<TrendDirection>(d);
        }
        trend.latest_evidence_id = t.at("latest_evidence_id").get<std::string>();
        if (t.contains("prior_evidence_id")) trend.prior_evidence_id = t["prior_evidence_id"].get<std::string>();
        ccp.trends_.push_back(std::move(trend));
    }
    ccp.report_ = fhir::retrieval_report_from_json(json.at("retrieval_report"));
    ccp.built_at_ = required_instant(json.at("built_at"));
    ccp.warnings_ = json.value("warnings", std::vector<std::string>{});
    if (const auto meta = json.find("metadata"); meta != json.end()) {
        ccp.skipped_records_ = meta->value("skipped_records", 0);
        ccp.composition_ = meta->value("composition", Json::array());
    }
    ccp.index();
    return ccp;
}

std::string ClinicalContextPackage::fingerprint() const {
    return sha256_hex(to_json().dump());
}

}  // namespace ehrsum::ccp
