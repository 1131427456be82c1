/**
 * @file pipeline.hpp
 * @brief retrieve -> normalize -> summarize, shared by the CLI, service and stress suite.
 */

#pragma once

#include "ehrsum/summarizer.hpp"

namespace ehrsum {

struct PipelineOptions {
    summary::RenderMode mode = summary::RenderMode::NoticeEmpty;
    summary::BackendKind backend = summary::BackendKind::deterministic();
    /// Required when backend is Hosted.
    summary::SummaryBackendClient* hosted_client = nullptr;
    std::string disclaimer = std::string(summary::kDefaultDisclaimer);
    fhir::Clock clock = fhir::system_now;
};

struct PipelineOutput {
    ccp::ClinicalContextPackage ccp;
    summary::SummaryDocument summary;
};

/// Retrieval and package construction only.
ccp::ClinicalContextPackage build_package(fhir::HttpTransport& transport, const fhir::EndpointConfig& config,
                                          const std::string& patient_id, const fhir::Clock& clock = fhir::system_now);

/**
 * Runs the whole pipeline. A hosted backend that is unreachable or returns
 * garbage is replaced by the deterministic backend; the reason is kept in
 * SummaryDocument::fallback.
 *
 * @throws fhir::PatientUnavailable when the anchor cannot be read.
 */
PipelineOutput run_pipeline(fhir::HttpTransport& transport, const fhir::EndpointConfig& config,
                            const std::string& patient_id, const PipelineOptions& options = {});

}  // namespace ehrsum
