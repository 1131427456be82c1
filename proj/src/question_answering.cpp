/**
 * @file question_answering.cpp
 * @brief Lexical retrieval over the context package for follow-up questions.
 *
 * Answers are assembled only from render_fact() output of matching items;
 * when nothing matches, the answer is a refusal.
 */

#include "ehrsum/clinical_vocabulary.hpp"
#include "ehrsum/summarizer.hpp"

#include <set>

namespace ehrsum::summary {

namespace {

constexpr std::size_t kMaxListed = 10;

std::string stem(std::string token) {
    if (token.size() > 4 && token.ends_with("ies")) return token.substr(0, token.size() - 3) + "y";
    if (token.size() > 3 && token.ends_with('s') && !token.ends_with("ss")) token.pop_back();
    return token;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words{
        "a",      "an",     "the",    "of",     "for",    "on",     "in",     "at",     "to",    "by",
        "from",   "and",    "or",     "with",   "is",     "are",    "was",    "were",   "be",    "been",
        "what",   "which",  "who",    "when",   "how",    "many",   "much",   "any",    "doe",   "do",
        "did",    "ha",     "have",   "had",    "patient", "their", "his",    "her",    "show",  "me",
        "list",   "tell",   "about",  "there",  "please", "current", "currently", "value", "result",
        "level",  "give",   "get",    "all",    "it",     "this",   "that",   "taking", "on",    "recent",
        "most",   "last",   "latest", "newest", "recently", "ever",  "date",   "status",
    };
    return words;
}

bool asks_for_most_recent(const std::vector<std::string>& raw_tokens) {
    for (const auto& t : raw_tokens) {
        if (t == "recent" || t == "last" || t == "latest" || t == "newest" || t == "recently") return true;
    }
    return false;
}

std::set<std::string> item_terms(const EvidenceItem& item) {
    std::set<std::string> terms;
    auto add_text = [&](std::string_view text) {
        for (auto& t : tokenize(text)) terms.insert(stem(std::move(t)));
    };
    add_text(item.display);
    add_text(ccp::section_label(item.section));
    for (const auto& c : item.codes) {
        add_text(c.display);
        if (!c.code.empty()) terms.insert(to_lower(c.code));
    }
    for (const char* name : {"class", "category", "relationship"}) {
        if (auto v = item.attribute(name)) add_text(*v);
    }
    return terms;
}

}  // namespace

const QueryVocabulary& QueryVocabulary::defaults() {
    static const QueryVocabulary vocabulary = [] {
        QueryVocabulary v;
        v.expansions["anticoagulant"] = default_anticoagulant_terms();
        v.expansions["anticoagulation"] = default_anticoagulant_terms();
        v.expansions["thinner"] = default_anticoagulant_terms();
        const std::vector<std::string> a1c{"a1c", "hba1c", "4548-4", "glycated"};
        v.expansions["a1c"] = a1c;
        v.expansions["hba1c"] = a1c;
        v.expansions["glycated"] = a1c;
        const std::vector<std::string> admission{"admission", "inpatient", "imp", "hospital"};
        v.expansions["admission"] = admission;
        v.expansions["admitted"] = admission;
        v.expansions["hospitalization"] = admission;
        v.expansions["hospitalized"] = admission;
        v.expansions["inpatient"] = admission;
        v.expansions["lab"] = {"laboratory"};
        v.expansions["vital"] = {"vital", "sign"};
        v.expansions["allergic"] = {"allergy"};
        v.expansions["vaccine"] = {"immunization", "vaccine"};
        v.expansions["vaccination"] = {"immunization", "vaccine"};
        v.expansions["problem"] = {"condition"};
        v.expansions["diagnose"] = {"condition"};
        v.expansions["medicine"] = {"medication"};
        v.expansions["drug"] = {"medication"};
        v.expansions["surgery"] = {"procedure"};
        return v;
    }();
    return vocabulary;
}

Json to_json(const GroundedAnswer& answer) {
    Json json{{"text", answer.text}, {"evidence_refs", answer.evidence_refs}, {"refused", answer.refused}};
    if (answer.refusal_reason) json["refusal_reason"] = *answer.refusal_reason;
    return json;
}

GroundedAnswer answer_question(const ClinicalContextPackage& ccp, std::string_view question,
                               const QueryVocabulary& vocabulary) {
    if (question.empty()) throw std::invalid_argument("question must not be empty");

    const auto raw = tokenize(question);
    std::set<std::string> query;
    for (const auto& token : raw) {
        const std::string t = stem(token);
        if (stopwords().count(t) || stopwords().count(token)) continue;
        const auto it = vocabulary.expansions.find(token);
        const auto stemmed_it = it != vocabulary.expansions.end() ? it : vocabulary.expansions.find(t);
        if (stemmed_it != vocabulary.expansions.end()) {
            for (const auto& e : stemmed_it->second) query.insert(stem(to_lower(e)));
            query.insert(t);
        } else {
            query.insert(t);
        }
    }

    struct Hit {
        const EvidenceItem* item;
        std::size_t score;
    };
    std::vector<Hit> hits;
    std::size_t best = 0;
    for (const auto& section : ccp.sections()) {
        if (section.key == SectionKey::PatientInformation) continue;
        for (const auto& item : section.items) {
            const auto terms = item_terms(item);
            std::size_t score = 0;
            for (const auto& q : query) score += terms.count(q);
            if (score == 0) continue;
            best = std::max(best, score);
            hits.push_back({&item, score});
        }
    }

    GroundedAnswer answer;
    if (hits.empty()) {
        answer.refused = true;
        answer.text = std::string(kRefusalText);
        answer.refusal_reason = "no evidence in the context package matches the question";
        return answer;
    }
    std::erase_if(hits, [&](const Hit& h) { return h.score < best; });

    if (asks_for_most_recent(raw)) {
        const EvidenceItem* newest = nullptr;
        for (const auto& h : hits) {
            if (h.item->effective_at && (!newest || *h.item->effective_at > *newest->effective_at)) newest = h.item;
        }
        if (!newest) newest = hits.front().item;
        answer.text = "Most recent: " + render_fact(*newest);
        answer.evidence_refs.push_back(newest->evidence_id);
        return answer;
    }

    answer.text = "From the record: ";
    for (std::size_t i = 0; i < hits.size() && i < kMaxListed; ++i) {
        answer.text += (i ? "; " : "") + render_fact(*hits[i].item);
        answer.evidence_refs.push_back(hits[i].item->evidence_id);
    }
    if (hits.size() > kMaxListed) {
        answer.text += "; and " + std::to_string(hits.size() - kMaxListed) + " more entries";
    }
    return answer;
}

}  // namespace ehrsum::summary
