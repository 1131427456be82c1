#include "ehrsum/clinical_vocabulary.hpp"

namespace ehrsum {

const std::vector<std::string>& default_anticoagulant_terms() {
    static const std::vector<std::string> terms{
        "warfarin",  "coumadin",   "jantoven", "apixaban", "eliquis",   "rivaroxaban", "xarelto",
        "dabigatran", "pradaxa",   "edoxaban", "savaysa",  "heparin",   "enoxaparin",  "lovenox",
        "dalteparin", "fondaparinux",
        // RxNorm ingredient codes
        "11289", "1364430", "1114195", "1037042", "1599538", "5224", "67108",
    };
    return terms;
}

}  // namespace ehrsum
