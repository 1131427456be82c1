/**
 * @file generator.cpp
 * @brief Seeded synthetic FHIR R4 patients drawn from small fixed vocabularies.
 */

#include "ehrsum/testkit.hpp"

#include <random>

namespace ehrsum::testkit {

namespace {

using fhir::kAllResourceTypes;
using namespace std::chrono_literals;

constexpr std::string_view kSnomed = "http://snomed.info/sct";
constexpr std::string_view kLoinc = "http://loinc.org";
constexpr std::string_view kRxNorm = "http://www.nlm.nih.gov/research/umls/rxnorm";
constexpr std::string_view kCvx = "http://hl7.org/fhir/sid/cvx";
constexpr std::string_view kObsCategory = "http://terminology.hl7.org/CodeSystem/observation-category";
constexpr std::string_view kActCode = "http://terminology.hl7.org/CodeSystem/v3-ActCode";

constexpr std::string_view kHbA1c = "4548-4";
constexpr std::string_view kCreatinine = "2160-0";
constexpr std::string_view kSystolic = "8480-6";
constexpr std::string_view kDuplicateRx = "197361";

Json concept_of(std::string_view system, std::string_view code, std::string_view display) {
    return Json{{"coding", Json::array({Json{{"system", system}, {"code", code}, {"display", display}}})},
                {"text", display}};
}

Json reference(const std::string& patient_id) {
    return Json{{"reference", "Patient/" + patient_id}};
}

class Builder {
public:
    Builder(const VariabilityProfile& profile, std::string patient_id)
        : profile_(profile), rng_(profile.seed * 0x9E3779B97F4A7C15ULL + 17), patient_id_(std::move(patient_id)) {
        reference_ = *parse_fhir_datetime(kReferenceTime);
    }

    SyntheticBundleSet build();

private:
    bool populated(ResourceType t) const { return profile_.populated_types.count(t) > 0; }
    std::uint64_t roll(std::uint64_t n) { return rng_() % n; }
    std::string at(std::chrono::days back, std::chrono::minutes offset = 0min) const {
        return format_instant(reference_ - back + offset);
    }
    Json base(ResourceType type, std::string id) {
        Json r{{"resourceType", fhir::to_string(type)}, {"id", std::move(id)}};
        if (type != ResourceType::Patient) {
            r[type == ResourceType::Device ? "patient" : "subject"] = reference(patient_id_);
            if (type == ResourceType::AllergyIntolerance || type == ResourceType::Immunization ||
                type == ResourceType::FamilyMemberHistory || type == ResourceType::Consent) {
                r.erase("subject");
                r["patient"] = reference(patient_id_);
            }
        }
        return r;
    }
    void emit(ResourceType type, Json resource) { out_.resources[type].push_back(std::move(resource)); }
    std::string value_string() { return canonical_number((55 + static_cast<double>(roll(40))) / 10.0); }

    void patient();
    void observations();
    void medications();
    void simple_types();

    const VariabilityProfile& profile_;
    std::mt19937_64 rng_;
    std::string patient_id_;
    Instant reference_{};
    SyntheticBundleSet out_;
    Json lab_max_ = Json::object();
    Json seeded_ = Json::object();
};

void Builder::patient() {
    static const std::array<std::pair<std::string_view, std::string_view>, 4> kNames{
        {{"Maria", "Alvarez"}, {"James", "Okafor"}, {"Ana", "Lindqvist"}, {"Samuel", "Tanaka"}}};
    const auto& [given, family] = kNames[roll(kNames.size())];
    Json p = base(ResourceType::Patient, patient_id_);
    p["name"] = Json::array({Json{{"given", Json::array({given})}, {"family", family}}});
    p["gender"] = roll(2) ? "female" : "male";
    p["birthDate"] = std::to_string(1940 + roll(50)) + "-0" + std::to_string(1 + roll(9)) + "-1" + std::to_string(roll(10));
    emit(ResourceType::Patient, std::move(p));
}

void Builder::observations() {
    int n = 0;
    auto observation = [&](std::string_view code, std::string_view display, std::string_view category,
                           const std::string& when, Json value, std::string_view unit) {
        Json o = base(ResourceType::Observation, "obs-" + std::to_string(++n));
        o["status"] = "final";
        o["category"] = Json::array({concept_of(kObsCategory, category, category)});
        o["code"] = concept_of(kLoinc, code, display);
        o["effectiveDateTime"] = when;
        o["issued"] = format_instant(*parse_fhir_datetime(when) + 2h);
        if (value.is_number()) o["valueQuantity"] = Json{{"value", value}, {"unit", unit}};
        else o["valueCodeableConcept"] = value;
        emit(ResourceType::Observation, std::move(o));
    };
    auto note_max = [&](std::string_view code, const std::string& when, const std::string& value) {
        auto& slot = lab_max_[std::string(code)];
        if (slot.is_null() || slot["at"].get<std::string>() < when) {
            slot = Json{{"at", when}, {"values", Json::array({value})}};
        } else if (slot["at"].get<std::string>() == when) {
            slot["values"].push_back(value);
        }
    };

    // HbA1c history, oldest first, one value per 30 days ending 3 days before the reference.
    std::string last;
    for (int i = 0; i < profile_.lab_history_length; ++i) {
        const auto when = at(std::chrono::days(3 + 30 * (profile_.lab_history_length - 1 - i)));
        last = value_string();
        observation(kHbA1c, "Hemoglobin A1c/Hemoglobin.total in Blood", "laboratory", when, std::stod(last), "%");
        note_max(kHbA1c, when, last);
    }
    if (profile_.lab_history_length > 0) {
        seeded_["lab_history"] = Json{{"code", kHbA1c}, {"length", profile_.lab_history_length}, {"last_emitted", last}};
    }

    const auto creat_when = at(std::chrono::days(40));
    observation(kCreatinine, "Creatinine [Mass/volume] in Serum or Plasma", "laboratory", creat_when, 0.9, "mg/dL");
    note_max(kCreatinine, creat_when, "0.9");

    for (int i = 0; i < 2; ++i) {
        const auto when = at(std::chrono::days(10 + 60 * i));
        const int sbp = 118 + static_cast<int>(roll(30));
        observation(kSystolic, "Systolic blood pressure", "vital-signs", when, sbp, "mm[Hg]");
        note_max(kSystolic, when, std::to_string(sbp));
    }
    observation("72166-2", "Tobacco smoking status", "social-history", at(std::chrono::days(200)),
                concept_of(kSnomed, "266919005", "Never smoked tobacco"), "");

    if (profile_.conflicting_obs) {
        const auto when = at(std::chrono::days(5));
        Json ids = Json::array();
        for (double v : {1.1, 1.4}) {
            observation(kCreatinine, "Creatinine [Mass/volume] in Serum or Plasma", "laboratory", when, v, "mg/dL");
            ids.push_back("Observation/" + out_.resources[ResourceType::Observation].back()["id"].get<std::string>());
            note_max(kCreatinine, when, canonical_number(v));
        }
        seeded_["conflicting"] = Json{{"code", kCreatinine}, {"at", when}, {"ids", ids}};
    }
}

void Builder::medications() {
    int n = 0;
    auto order = [&](std::string_view code, std::string_view display, const std::string& when, std::string_view dosage,
                     std::string_view status) {
        Json m = base(ResourceType::MedicationRequest, "med-" + std::to_string(++n));
        m["status"] = status;
        m["intent"] = "order";
        m["medicationCodeableConcept"] = concept_of(kRxNorm, code, display);
        m["authoredOn"] = when;
        m["dosageInstruction"] = Json::array({Json{{"text", dosage}}});
        emit(ResourceType::MedicationRequest, std::move(m));
    };
    order("860975", "24 HR metformin hydrochloride 500 MG Extended Release Oral Tablet", at(std::chrono::days(120)),
          "take one tablet twice daily", "active");
    order("314076", "lisinopril 10 MG Oral Tablet", at(std::chrono::days(300)), "take one tablet daily", "active");
    order("855332", "warfarin sodium 5 MG Oral Tablet", at(std::chrono::days(60)), "take one tablet daily", "active");
    if (roll(2)) order("312961", "simvastatin 20 MG Oral Tablet", at(std::chrono::days(900)), "one tablet at night", "stopped");

    for (int i = 0; i < profile_.duplicate_order_count; ++i) {
        order(kDuplicateRx, "amlodipine 5 MG Oral Tablet", at(std::chrono::days(20), std::chrono::minutes(7 * i)),
              "take one tablet daily", "active");
    }
    if (profile_.duplicate_order_count > 0) {
        seeded_["duplicate_orders"] = Json{{"code", kDuplicateRx},
                                           {"count", profile_.duplicate_order_count},
                                           {"day", at(std::chrono::days(20)).substr(0, 10)}};
    }
}

void Builder::simple_types() {
    if (populated(ResourceType::Consent)) {
        Json c = base(ResourceType::Consent, "consent-1");
        c["status"] = "active";
        c["scope"] = concept_of("http://terminology.hl7.org/CodeSystem/consentscope", "patient-privacy", "Privacy Consent");
        c["category"] = Json::array({concept_of(kLoinc, "59284-0", "Patient Consent")});
        c["dateTime"] = at(std::chrono::days(700));
        emit(ResourceType::Consent, std::move(c));
    }
    if (populated(ResourceType::Condition)) {
        struct Spec { std::string_view code, display, status; std::string onset; };
        const std::vector<Spec> specs{
            {"44054006", "Type 2 diabetes mellitus", "active", at(std::chrono::days(3400)).substr(0, 10)},
            {"38341003", "Hypertensive disorder, systemic arterial", "active", "2012"},
            {"22298006", "Myocardial infarction", "inactive", "2019-06"},
            {"195967001", "Asthma", "resolved", ""},
        };
        const std::size_t count = 2 + roll(3);
        for (std::size_t i = 0; i < count; ++i) {
            Json c = base(ResourceType::Condition, "cond-" + std::to_string(i + 1));
            c["clinicalStatus"] = concept_of("http://terminology.hl7.org/CodeSystem/condition-clinical", specs[i].status,
                                             specs[i].status);
            c["code"] = concept_of(kSnomed, specs[i].code, specs[i].display);
            if (!specs[i].onset.empty()) c["onsetDateTime"] = specs[i].onset;
            else c["recordedDate"] = at(std::chrono::days(5000));
            emit(ResourceType::Condition, std::move(c));
        }
    }
    if (populated(ResourceType::Observation)) observations();
    if (populated(ResourceType::MedicationRequest)) medications();
    if (populated(ResourceType::Procedure)) {
        Json p = base(ResourceType::Procedure, "proc-1");
        p["status"] = "completed";
        p["code"] = concept_of(kSnomed, "80146002", "Appendectomy");
        p["performedDateTime"] = at(std::chrono::days(4000));
        emit(ResourceType::Procedure, std::move(p));
        if (roll(2)) {
            Json q = base(ResourceType::Procedure, "proc-2");
            q["status"] = "completed";
            q["code"] = concept_of(kSnomed, "232717009", "Coronary artery bypass grafting");
            q["performedPeriod"] = Json{{"start", at(std::chrono::days(1800))}, {"end", at(std::chrono::days(1799))}};
            emit(ResourceType::Procedure, std::move(q));
        }
    }
    if (populated(ResourceType::Encounter)) {
        Json e = base(ResourceType::Encounter, "enc-1");
        e["status"] = "finished";
        e["class"] = Json{{"system", kActCode}, {"code", "AMB"}, {"display", "ambulatory"}};
        e["type"] = Json::array({concept_of(kSnomed, "185349003", "Encounter for check up")});
        e["period"] = Json{{"start", at(std::chrono::days(3))}, {"end", at(std::chrono::days(3), 40min)}};
        emit(ResourceType::Encounter, std::move(e));
        Json h = base(ResourceType::Encounter, "enc-2");
        h["status"] = "finished";
        h["class"] = Json{{"system", kActCode}, {"code", "IMP"}, {"display", "inpatient encounter"}};
        h["type"] = Json::array({concept_of(kSnomed, "32485007", "Hospital admission")});
        h["period"] = Json{{"start", at(std::chrono::days(230))}, {"end", at(std::chrono::days(226))}};
        emit(ResourceType::Encounter, std::move(h));
    }
    if (populated(ResourceType::FamilyMemberHistory)) {
        Json f = base(ResourceType::FamilyMemberHistory, "fmh-1");
        f["status"] = "completed";
        f["relationship"] = concept_of("http://terminology.hl7.org/CodeSystem/v3-RoleCode", "FTH", "father");
        f["condition"] = Json::array({Json{{"code", concept_of(kSnomed, "22298006", "Myocardial infarction")}}});
        f["date"] = at(std::chrono::days(365)).substr(0, 10);
        emit(ResourceType::FamilyMemberHistory, std::move(f));
    }
    if (populated(ResourceType::DiagnosticReport)) {
        Json d = base(ResourceType::DiagnosticReport, "dr-1");
        d["status"] = "final";
        d["code"] = concept_of(kLoinc, "58410-2", "CBC panel - Blood by Automated count");
        d["effectiveDateTime"] = at(std::chrono::days(3));
        d["issued"] = at(std::chrono::days(2));
        emit(ResourceType::DiagnosticReport, std::move(d));
    }
    if (populated(ResourceType::Immunization)) {
        Json i = base(ResourceType::Immunization, "imm-1");
        i["status"] = "completed";
        i["vaccineCode"] = concept_of(kCvx, "140", "Influenza, seasonal, injectable, preservative free");
        i["occurrenceDateTime"] = at(std::chrono::days(260));
        emit(ResourceType::Immunization, std::move(i));
        Json j = base(ResourceType::Immunization, "imm-2");
        j["status"] = "completed";
        j["vaccineCode"] = concept_of(kCvx, "208", "SARS-COV-2 (COVID-19) vaccine, mRNA");
        j["occurrenceDateTime"] = at(std::chrono::days(280));
        emit(ResourceType::Immunization, std::move(j));
    }
    if (populated(ResourceType::AllergyIntolerance)) {
        Json a = base(ResourceType::AllergyIntolerance, "alg-1");
        a["clinicalStatus"] =
            concept_of("http://terminology.hl7.org/CodeSystem/allergyintolerance-clinical", "active", "Active");
        a["criticality"] = "high";
        a["code"] = concept_of(kSnomed, "91936005", "Allergy to penicillin");
        a["recordedDate"] = at(std::chrono::days(2500));
        emit(ResourceType::AllergyIntolerance, std::move(a));
        if (roll(2)) {
            Json b = base(ResourceType::AllergyIntolerance, "alg-2");
            b["clinicalStatus"] =
                concept_of("http://terminology.hl7.org/CodeSystem/allergyintolerance-clinical", "active", "Active");
            b["criticality"] = "low";
            b["code"] = concept_of(kSnomed, "300913006", "Shellfish allergy");
            emit(ResourceType::AllergyIntolerance, std::move(b));
        }
    }
    if (populated(ResourceType::CarePlan)) {
        Json c = base(ResourceType::CarePlan, "cp-1");
        c["status"] = "active";
        c["intent"] = "plan";
        c["title"] = "Diabetes care plan";
        c["category"] = Json::array({concept_of(kSnomed, "698360004", "Diabetes self management plan")});
        c["period"] = Json{{"start", at(std::chrono::days(400))}};
        emit(ResourceType::CarePlan, std::move(c));
    }
    if (populated(ResourceType::ImagingStudy)) {
        Json s = base(ResourceType::ImagingStudy, "img-1");
        s["status"] = "available";
        s["procedureCode"] = Json::array({concept_of(kSnomed, "399208008", "Plain chest X-ray")});
        s["started"] = at(std::chrono::days(230));
        emit(ResourceType::ImagingStudy, std::move(s));
    }
    if (populated(ResourceType::Goal)) {
        Json g = base(ResourceType::Goal, "goal-1");
        g["lifecycleStatus"] = "active";
        g["description"] = Json{{"text", "Hemoglobin A1c below target"}};
        g["startDate"] = at(std::chrono::days(400)).substr(0, 10);
        emit(ResourceType::Goal, std::move(g));
    }
    if (populated(ResourceType::Composition)) {
        Json c = base(ResourceType::Composition, "comp-1");
        c["status"] = "final";
        c["type"] = concept_of(kLoinc, "60591-5", "Patient summary Document");
        c["title"] = "Patient Summary";
        c["date"] = at(std::chrono::days(1));
        c["section"] = Json::array({Json{{"title", "Problems"}}, Json{{"title", "Medications"}}});
        emit(ResourceType::Composition, std::move(c));
    }
    if (populated(ResourceType::Flag)) {
        Json f = base(ResourceType::Flag, "flag-1");
        f["status"] = "active";
        f["code"] = concept_of(kSnomed, "129839007", "At risk for falls");
        f["period"] = Json{{"start", at(std::chrono::days(90))}};
        emit(ResourceType::Flag, std::move(f));
    }
    if (populated(ResourceType::Device)) {
        Json d = base(ResourceType::Device, "dev-1");
        d["status"] = "active";
        d["type"] = concept_of(kSnomed, "14106009", "Cardiac pacemaker");
        emit(ResourceType::Device, std::move(d));
    }
}

SyntheticBundleSet Builder::build() {
    out_.patient_id = patient_id_;
    patient();
    simple_types();

    Json counts = Json::object();
    for (auto type : kAllResourceTypes) counts[std::string(fhir::to_string(type))] = out_.count(type);
    out_.manifest = Json{
        {"patient_id", patient_id_},
        {"reference_time", kReferenceTime},
        {"profile", profile_.to_json()},
        {"counts", counts},
        {"lab_max", lab_max_},
        {"seeded", seeded_},
    };

    const Json derived = derive_manifest_facts(out_);
    if (derived["counts"] != counts || derived["lab_max"] != lab_max_) {
        throw std::logic_error("generated manifest disagrees with emitted resources");
    }
    return std::move(out_);
}

std::set<ResourceType> all_but_patient() {
    std::set<ResourceType> out(kAllResourceTypes.begin() + 1, kAllResourceTypes.end());
    return out;
}

std::set<ResourceType> types_from_json(const Json& json) {
    std::set<ResourceType> out;
    for (const auto& name : json) {
        const auto type = fhir::resource_type_from_string(name.get<std::string>());
        if (!type) throw std::invalid_argument("unknown resource type " + name.dump());
        out.insert(*type);
    }
    return out;
}

Json types_to_json(const std::set<ResourceType>& types) {
    Json out = Json::array();
    for (auto t : types) out.push_back(fhir::to_string(t));
    return out;
}

}  // namespace

std::size_t SyntheticBundleSet::count(ResourceType type) const {
    const auto it = resources.find(type);
    return it == resources.end() ? 0 : it->second.size();
}

void VariabilityProfile::validate() const {
    if (!populated_types.count(ResourceType::Patient)) throw std::invalid_argument("profile must populate Patient");
    if (!(flaky_5xx_rate >= 0.0 && flaky_5xx_rate < 1.0)) throw std::invalid_argument("flaky_5xx_rate must be in [0,1)");
    if (duplicate_order_count < 0 || lab_history_length < 0) throw std::invalid_argument("counts must be non-negative");
}

std::vector<std::string> VariabilityProfile::names() {
    return {"baseline", "missing-resources", "conflicting-observations", "duplicate-orders", "longitudinal", "random"};
}

VariabilityProfile VariabilityProfile::named(std::string_view name, std::uint64_t seed) {
    VariabilityProfile p;
    p.seed = seed;
    p.populated_types = {kAllResourceTypes.begin(), kAllResourceTypes.end()};
    if (name == "baseline") return p;
    if (name == "missing-resources") {
        p.populated_types = {ResourceType::Patient, ResourceType::Condition, ResourceType::Observation,
                             ResourceType::AllergyIntolerance};
        p.unsupported_searches = {ResourceType::Device, ResourceType::Immunization};
        p.failing_searches = {ResourceType::Encounter};
        p.absent_types = {ResourceType::Consent};
        return p;
    }
    if (name == "conflicting-observations") {
        p.conflicting_obs = true;
        return p;
    }
    if (name == "duplicate-orders") {
        p.duplicate_order_count = 3;
        return p;
    }
    if (name == "longitudinal") {
        p.lab_history_length = 200;
        return p;
    }
    if (name == "random") return random(seed);
    throw std::invalid_argument("unknown profile '" + std::string(name) + "'");
}

VariabilityProfile VariabilityProfile::random(std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
    VariabilityProfile p;
    p.seed = seed;
    p.populated_types = {ResourceType::Patient};
    for (auto type : all_but_patient()) {
        if (rng() % 10 < 6) p.populated_types.insert(type);
        if (rng() % 100 < 15) p.unsupported_searches.insert(type);
    }
    p.duplicate_order_count = static_cast<int>(rng() % 4);
    p.conflicting_obs = rng() % 2 == 0;
    p.lab_history_length = static_cast<int>(rng() % 7);
    p.flaky_5xx_rate = static_cast<double>(rng() % 30) / 100.0;
    return p;
}

Json VariabilityProfile::to_json() const {
    return Json{
        {"seed", seed},
        {"populated_types", types_to_json(populated_types)},
        {"duplicate_order_count", duplicate_order_count},
        {"conflicting_obs", conflicting_obs},
        {"lab_history_length", lab_history_length},
        {"unsupported_searches", types_to_json(unsupported_searches)},
        {"flaky_5xx_rate", flaky_5xx_rate},
        {"failing_searches", types_to_json(failing_searches)},
        {"absent_types", types_to_json(absent_types)},
    };
}

VariabilityProfile VariabilityProfile::from_json(const Json& json) {
    VariabilityProfile p;
    p.seed = json.at("seed").get<std::uint64_t>();
    p.populated_types = types_from_json(json.at("populated_types"));
    p.duplicate_order_count = json.value("duplicate_order_count", 0);
    p.conflicting_obs = json.value("conflicting_obs", false);
    p.lab_history_length = json.value("lab_history_length", 0);
    p.unsupported_searches = types_from_json(json.value("unsupported_searches", Json::array()));
    p.flaky_5xx_rate = json.value("flaky_5xx_rate", 0.0);
    p.failing_searches = types_from_json(json.value("failing_searches", Json::array()));
    p.absent_types = types_from_json(json.value("absent_types", Json::array()));
    p.validate();
    return p;
}

SyntheticBundleSet generate_patient(const VariabilityProfile& profile) {
    profile.validate();
    return Builder(profile, "p" + std::to_string(profile.seed)).build();
}

Json derive_manifest_facts(const SyntheticBundleSet& bundles) {
    Json counts = Json::object();
    for (auto type : kAllResourceTypes) counts[std::string(fhir::to_string(type))] = bundles.count(type);

    Json lab_max = Json::object();
    if (const auto it = bundles.resources.find(ResourceType::Observation); it != bundles.resources.end()) {
        for (const auto& obs : it->second) {
            if (!obs.contains("valueQuantity")) continue;
            const std::string code = obs["code"]["coding"][0]["code"];
            const std::string when = obs["effectiveDateTime"];
            const std::string value = canonical_number(obs["valueQuantity"]["value"].get<double>());
            auto& slot = lab_max[code];
            const auto instant = parse_fhir_datetime(when);
            if (slot.is_null() || *parse_fhir_datetime(slot["at"].get<std::string>()) < *instant) {
                slot = Json{{"at", when}, {"values", Json::array({value})}};
            } else if (*parse_fhir_datetime(slot["at"].get<std::string>()) == *instant) {
                slot["values"].push_back(value);
            }
        }
    }
    return Json{{"counts", counts}, {"lab_max", lab_max}};
}

}  // namespace ehrsum::testkit
