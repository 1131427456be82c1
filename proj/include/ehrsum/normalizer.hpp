/**
 * @file normalizer.hpp
 * @brief Raw FHIR records to the clinical context package (CCP).
 *
 * The CCP is the stable hand-off between retrieval and summarization: a fixed
 * list of 16 sections, each holding deduplicated EvidenceItems sorted newest
 * first, plus lab trend anchors and the retrieval report it was built from.
 */

#pragma once

#include "ehrsum/fhir_client.hpp"

#include <map>

namespace ehrsum::ccp {

using fhir::RawResourceRecord;
using fhir::ResourceType;
using fhir::RetrievalReport;

enum class SectionKey {
    PatientInformation,
    AlertsAndFlags,
    AllergiesAndIntolerances,
    Conditions,
    Medications,
    LaboratoryAndVitalSigns,
    Procedures,
    Encounters,
    DiagnosticReports,
    ImagingStudies,
    Immunizations,
    FamilyHistory,
    CarePlans,
    Goals,
    Devices,
    Consent,
};

/// Rendering order.
inline constexpr std::array<SectionKey, 16> kAllSections{
    SectionKey::PatientInformation, SectionKey::AlertsAndFlags,   SectionKey::AllergiesAndIntolerances,
    SectionKey::Conditions,         SectionKey::Medications,      SectionKey::LaboratoryAndVitalSigns,
    SectionKey::Procedures,         SectionKey::Encounters,       SectionKey::DiagnosticReports,
    SectionKey::ImagingStudies,     SectionKey::Immunizations,    SectionKey::FamilyHistory,
    SectionKey::CarePlans,          SectionKey::Goals,            SectionKey::Devices,
    SectionKey::Consent,
};

std::string_view to_string(SectionKey key);
std::optional<SectionKey> section_from_string(std::string_view name);
/// Human label, e.g. "Alerts and Flags".
std::string_view section_label(SectionKey key);

/// Section a resource type lands in; nullopt for Composition.
std::optional<SectionKey> section_for(ResourceType type);
/// Resource types backing a section.
std::vector<ResourceType> types_for(SectionKey key);

struct Coding {
    std::string system;
    std::string code;
    std::string display;

    friend bool operator==(const Coding&, const Coding&) = default;
};

struct EvidenceItem {
    std::string evidence_id;  ///< "{ResourceType}/{id}", "#n" appended on collision
    SectionKey section{};
    std::string display;
    std::vector<Coding> codes;
    std::optional<Instant> effective_at;
    std::optional<std::string> status;
    std::map<std::string, std::string> attributes;
    int duplicate_count = 1;
    std::string source_url;

    /// Resource type encoded in evidence_id.
    std::string_view resource_type_name() const;
    const Coding* primary_code() const { return codes.empty() ? nullptr : &codes.front(); }
    std::optional<std::string> attribute(const std::string& name) const;

    friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

enum class SectionState { Populated, Empty, Unavailable };

std::string_view to_string(SectionState state);

enum class TrendDirection { Rising, Falling, Flat, Single };

std::string_view to_string(TrendDirection direction);

struct TrendPoint {
    Instant at{};
    std::string value;  ///< canonical number
    std::string unit;

    friend bool operator==(const TrendPoint&, const TrendPoint&) = default;
};

struct TrendEntry {
    Coding code;
    std::string display;
    TrendPoint latest;
    std::optional<TrendPoint> prior;
    TrendDirection direction = TrendDirection::Single;
    std::string latest_evidence_id;
    std::optional<std::string> prior_evidence_id;

    friend bool operator==(const TrendEntry&, const TrendEntry&) = default;
};

struct Section {
    SectionKey key{};
    SectionState state = SectionState::Empty;
    std::vector<EvidenceItem> items;
};

/// Relative tolerance under which two trend values count as unchanged.
inline constexpr double kFlatTolerance = 1e-9;

inline constexpr std::string_view kSchemaVersion = "ehrsum.ccp/1";

/// Thrown by build_context_package when no Patient record is present.
class MissingAnchor : public std::runtime_error {
public:
    MissingAnchor() : std::runtime_error("no Patient record to anchor the context package") {}
};

/**
 * Immutable clinical context package.
 *
 * Built by build_context_package or read back with from_json; all accessors
 * are const and the object carries no mutable state after construction.
 */
class ClinicalContextPackage {
public:
    const EvidenceItem& patient() const noexcept { return patient_; }
    const std::vector<Section>& sections() const noexcept { return sections_; }
    const Section& section(SectionKey key) const { return sections_.at(static_cast<std::size_t>(key)); }
    const std::vector<TrendEntry>& trends() const noexcept { return trends_; }
    const RetrievalReport& retrieval_report() const noexcept { return report_; }
    Instant built_at() const noexcept { return built_at_; }
    const std::vector<std::string>& warnings() const noexcept { return warnings_; }
    int skipped_records() const noexcept { return skipped_records_; }
    /// Composition scaffolds (title, date, section titles), not part of any section.
    const Json& composition_metadata() const noexcept { return composition_; }

    /// Item with this evidence id, or nullptr.
    const EvidenceItem* find(std::string_view evidence_id) const;
    std::size_t item_count() const;

    Json to_json() const;
    static ClinicalContextPackage from_json(const Json& json);

    /// SHA-256 of the serialized package.
    std::string fingerprint() const;

private:
    friend ClinicalContextPackage build_context_package(const std::vector<RawResourceRecord>&,
                                                        const RetrievalReport&);
    ClinicalContextPackage() = default;
    void index();

    EvidenceItem patient_;
    std::vector<Section> sections_;
    std::vector<TrendEntry> trends_;
    RetrievalReport report_;
    Instant built_at_{};
    std::vector<std::string> warnings_;
    int skipped_records_ = 0;
    Json composition_ = Json::array();
    std::map<std::string, std::pair<std::size_t, std::size_t>, std::less<>> by_id_;
};

/// Effective instant by per-type precedence. Unparseable values are reported through `warnings`.
std::optional<Instant> extract_timestamp(const RawResourceRecord& record,
                                         std::vector<std::string>* warnings = nullptr);

/// Thrown by normalize_record for records lacking resourceType or id.
class InvalidRecord : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One record to one EvidenceItem. Not valid for Composition.
EvidenceItem normalize_record(const RawResourceRecord& record, std::vector<std::string>* warnings = nullptr);

/// Collapses repeated entries within one section.
std::vector<EvidenceItem> deduplicate(const std::vector<EvidenceItem>& items);

/// Latest-versus-prior anchors per lab code.
std::vector<TrendEntry> compute_trends(const std::vector<EvidenceItem>& lab_items);

/// Dated items newest first, undated after them in input order.
void sort_items(std::vector<EvidenceItem>& items);

/// @throws MissingAnchor when no Patient record is present.
ClinicalContextPackage build_context_package(const std::vector<RawResourceRecord>& records,
                                             const RetrievalReport& report);

Json to_json(const EvidenceItem& item);
EvidenceItem evidence_item_from_json(const Json& json);
Json to_json(const TrendEntry& trend);

}  // namespace ehrsum::ccp
