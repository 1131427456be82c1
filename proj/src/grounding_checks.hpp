// Internal: statement checks shared by the grounding validator and the evaluator.

#pragma once

#include "ehrsum/summarizer.hpp"

namespace ehrsum::summary::detail {

/// Numeric claims or numbers in the text that disagree with the cited items.
std::vector<std::string> numeric_issues(const SummaryStatement& statement, const ClinicalContextPackage& ccp);

/// ISO dates in the text that belong to none of the cited items.
std::vector<std::string> date_issues(const SummaryStatement& statement, const ClinicalContextPackage& ccp);

}  // namespace ehrsum::summary::detail
