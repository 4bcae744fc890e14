#pragma once

// Questions over the held-out synthetic policies. Each question is generated
// from one target segment; its ground truth is every segment of the policy
// labeled with the question's category.

#include <map>
#include <random>
#include <string>
#include <vector>

#include "policylens/corpus_io.hpp"
#include "policylens/qa.hpp"
#include "support/trained_synthetic.hpp"

namespace policylens::testing {

struct qa_benchmark {
    std::map<std::string, std::vector<segment>> policies;
    std::vector<qa_record> questions;
    std::vector<bool> synonym;
    /// Every synthetic segment text, for BM25 document frequencies.
    std::vector<std::string> corpus;
};

/// `count` questions cycling over the categories and test policies; odd
/// questions use synonym verbs.
inline qa_benchmark make_qa_benchmark(std::size_t count = 50, std::uint64_t seed = 5)
{
    auto const& s = setup();
    qa_benchmark out;
    std::map<std::string, std::vector<merged_segment_labels const*>> labels;
    for (auto const& m : s.segments) {
        out.corpus.push_back(m.text);
        if (s.split.test_policy_ids.contains(m.policy_id)) {
            labels[m.policy_id].push_back(&m);
            out.policies[m.policy_id].push_back({m.policy_id, m.segment_index, m.text, segment_origin::paragraph});
        }
    }
    std::vector<std::string> ids;
    for (auto const& [id, v] : labels) {
        ids.push_back(id);
    }
    auto const& cats = synthetic_categories();
    std::mt19937_64 gen(seed);
    for (std::size_t i = 0; i < count; ++i) {
        auto const& c = cats[i % cats.size()];
        auto const& id = ids[i % ids.size()];
        std::vector<merged_segment_labels const*> targets;
        qa_record rec{"", id, {}};
        for (auto const* m : labels[id]) {
            if (m->categories.contains(c.id)) {
                targets.push_back(m);
                rec.ground_truth.insert(m->segment_index);
            }
        }
        std::set<attribute_value> values;
        if (!targets.empty()) {
            values = targets[detail::uniform_below(gen, targets.size())]->attribute_values;
        }
        bool syn = i % 2 == 1;
        rec.question = make_synthetic_question(c, values, gen, syn).text;
        out.questions.push_back(std::move(rec));
        out.synonym.push_back(syn);
    }
    return out;
}

}  // namespace policylens::testing
