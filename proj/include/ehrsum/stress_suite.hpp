/**
 * @file stress_suite.hpp
 * @brief The four named end-to-end stress cases run against testkit data.
 */

#pragma once

#include "ehrsum/evaluator.hpp"
#include "ehrsum/pipeline.hpp"
#include "ehrsum/testkit.hpp"

#include <functional>

namespace ehrsum::eval {

struct StressCaseResult {
    std::string name;
    bool passed = false;
    std::vector<std::string> failures;
    Json facts = Json::object();  ///< observed values behind the assertions
};

struct StressSuiteReport {
    std::vector<StressCaseResult> cases;

    bool all_passed() const;
    Json to_json() const;
    /// Fixed-width table for terminals.
    std::string table() const;
};

/// Runs retrieval against a source serving `bundles`, then normalization and summarization.
using PipelineHandle =
    std::function<PipelineOutput(const testkit::SyntheticBundleSet& bundles, const testkit::VariabilityProfile& profile)>;

/// MockFhirSource-backed pipeline with a fixed clock at testkit::kReferenceTime.
PipelineHandle in_process_pipeline(summary::RenderMode mode = summary::RenderMode::NoticeEmpty);

inline constexpr std::array<std::string_view, 4> kStressCaseNames{
    "Missing resources", "Conflicting observations", "Duplicate medication orders", "Highly longitudinal lab histories"};

StressSuiteReport run_stress_suite(const PipelineHandle& pipeline = in_process_pipeline(), std::uint64_t seed = 1);

}  // namespace ehrsum::eval
