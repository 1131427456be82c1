#include "ehrsum/pipeline.hpp"

namespace ehrsum {

ccp::ClinicalContextPackage build_package(fhir::HttpTransport& transport, const fhir::EndpointConfig& config,
                                          const std::string& patient_id, const fhir::Clock& clock) {
    auto retrieved = fhir::retrieve_patient_context(transport, config, patient_id, clock);
    return ccp::build_context_package(retrieved.records, retrieved.report);
}

PipelineOutput run_pipeline(fhir::HttpTransport& transport, const fhir::EndpointConfig& config,
                            const std::string& patient_id, const PipelineOptions& options) {
    auto package = build_package(transport, config, patient_id, options.clock);

    if (options.backend.type == summary::BackendKind::Type::Hosted) {
        if (!options.hosted_client) throw std::invalid_argument("hosted backend selected without a client");
        try {
            auto doc = summary::summarize_via_backend(package, options.backend, *options.hosted_client,
                                                      summary::GuardrailPrompt::defaults(), options.mode,
                                                      options.disclaimer);
            return {std::move(package), std::move(doc)};
        } catch (const summary::BackendError& e) {
            auto doc = summary::summarize_deterministic(package, options.mode, options.disclaimer);
            doc.fallback = summary::FallbackRecord{e.what(), {}};
            return {std::move(package), std::move(doc)};
        }
    }
    auto doc = summary::summarize_deterministic(package, options.mode, options.disclaimer);
    return {std::move(package), std::move(doc)};
}

}  // namespace ehrsum
