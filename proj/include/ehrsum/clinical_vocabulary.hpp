/**
 * @file clinical_vocabulary.hpp
 * @brief Small keyword lists shared by question answering and evaluation.
 */

#pragma once

#include <string>
#include <vector>

namespace ehrsum {

/// Lowercase drug names and RxNorm codes treated as anticoagulants.
const std::vector<std::string>& default_anticoagulant_terms();

}  // namespace ehrsum
