#include <algorithm>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "policylens/corpus_io.hpp"
#include "policylens/default_taxonomy.hpp"

using namespace policylens;

namespace {

std::string record(std::string const& policy, int idx, std::string const& annotator,
                   std::vector<std::string> const& cats, std::vector<std::pair<std::string, std::string>> const& avs)
{
    nlohmann::json pairs = nlohmann::json::array();
    for (auto const& [a, v] : avs) {
        pairs.push_back({{"attribute", a}, {"value", v}});
    }
    return nlohmann::json{{"policy_id", policy},   {"segment_index", idx}, {"text", "segment text"},
                          {"annotator", annotator}, {"categories", cats},  {"attribute_values", pairs}}
               .dump() +
           "\n";
}

}  // namespace

TEST(CorpusIo, LoadAnnotationsAcceptsKnownLabels)
{
    auto recs = load_annotations(record("p1", 0, "A", {"first-party-collection-use"},
                                        {{"personal-information-type", "location"}}),
                                 default_taxonomy());
    ASSERT_EQ(recs.size(), 1U);
    EXPECT_TRUE(recs[0].categories.contains("first-party-collection-use"));
    EXPECT_TRUE(recs[0].attribute_values.contains({"personal-information-type", "location"}));
}

TEST(CorpusIo, LoadAnnotationsRejectsUnknownLabelsListingAll)
{
    auto text = record("p1", 0, "A", {"first-party-collection-use"}, {{"personal-information-type", "telepathy"}}) +
                record("p1", 1, "A", {"mind-reading"}, {});
    try {
        load_annotations(text, default_taxonomy());
        FAIL();
    } catch (unknown_label_error const& e) {
        EXPECT_EQ(e.offenders().size(), 2U);
    }
}

TEST(CorpusIo, EmptyAnnotationFile)
{
    EXPECT_TRUE(load_annotations("", default_taxonomy()).empty());
    EXPECT_TRUE(load_annotations("\n\n", default_taxonomy()).empty());
}

TEST(CorpusIo, MalformedLineReportsLineNumber)
{
    auto text = record("p1", 0, "A", {}, {}) + "{not json\n";
    try {
        load_annotations(text, default_taxonomy());
        FAIL();
    } catch (parse_error const& e) {
        EXPECT_EQ(e.line(), 2U);
    }
}

TEST(CorpusIo, UnionOfTwoAnnotators)
{
    auto recs = load_annotations(record("p", 0, "A", {"data-security"}, {}) + record("p", 0, "B", {"data-retention"}, {}),
                                 default_taxonomy());
    auto merged = union_expert_labels(recs);
    ASSERT_EQ(merged.size(), 1U);
    EXPECT_EQ(merged[0].categories, (std::set<std::string>{"data-security", "data-retention"}));
}

TEST(CorpusIo, UnionSingleAnnotatorIsIdentity)
{
    auto recs = load_annotations(record("p", 3, "A", {"data-security"}, {{"security-measure", "generic"}}),
                                 default_taxonomy());
    auto merged = union_expert_labels(recs);
    ASSERT_EQ(merged.size(), 1U);
    EXPECT_EQ(merged[0].categories, recs[0].categories);
    EXPECT_EQ(merged[0].attribute_values, recs[0].attribute_values);
}

TEST(CorpusIo, UnionThreeOverlappingAnnotators)
{
    auto recs = load_annotations(
        record("p", 0, "A", {"first-party-collection-use"}, {{"purpose", "advertising"}, {"purpose", "marketing"}}) +
            record("p", 0, "B", {"first-party-collection-use"}, {{"purpose", "marketing"}, {"personal-information-type", "contact"}}) +
            record("p", 0, "C", {"third-party-sharing-collection"}, {{"purpose", "advertising"}, {"third-party-entity", "unnamed-third-party"}}),
        default_taxonomy());
    auto merged = union_expert_labels(recs);
    ASSERT_EQ(merged.size(), 1U);
    // Manual union: {advertising, marketing, contact, unnamed-third-party}.
    EXPECT_EQ(merged[0].attribute_values.size(), 4U);
    EXPECT_EQ(merged[0].categories.size(), 2U);
    EXPECT_EQ(merged[0].annotators.size(), 3U);
}

TEST(CorpusIo, UnionIsOrderIndependentAndIdempotent)
{
    auto const& t = default_taxonomy();
    std::mt19937_64 gen(7);
    auto values = t.all_values();
    std::vector<annotated_segment_record> recs;
    for (int i = 0; i < 60; ++i) {
        annotated_segment_record r;
        r.policy_id = "p" + std::to_string(gen() % 3);
        r.segment_index = gen() % 4;
        r.annotator_id = "a" + std::to_string(gen() % 3);
        r.categories.insert(t.categories()[gen() % t.categories().size()].id);
        r.attribute_values.insert(values[gen() % values.size()]);
        recs.push_back(r);
    }
    auto key = [](std::vector<merged_segment_labels> const& m) {
        std::vector<std::tuple<std::string, std::size_t, std::set<std::string>, std::set<attribute_value>>> k;
        for (auto const& x : m) {
            k.emplace_back(x.policy_id, x.segment_index, x.categories, x.attribute_values);
        }
        return k;
    };
    auto base = key(union_expert_labels(recs));
    auto shuffled = recs;
    std::shuffle(shuffled.begin(), shuffled.end(), gen);
    EXPECT_EQ(key(union_expert_labels(shuffled)), base);
    auto doubled = recs;
    doubled.insert(doubled.end(), recs.begin(), recs.end());
    EXPECT_EQ(key(union_expert_labels(doubled)), base);
}

TEST(CorpusIo, SplitIsByPolicyAndDeterministic)
{
    std::vector<annotated_segment_record> recs;
    for (int p = 0; p < 115; ++p) {
        for (int s = 0; s < 3; ++s) {
            annotated_segment_record r;
            r.policy_id = "policy-" + std::to_string(p);
            r.segment_index = static_cast<std::size_t>(s);
            recs.push_back(r);
        }
    }
    auto split = split_dataset(recs, 65, 42);
    EXPECT_EQ(split.train_policy_ids.size(), 65U);
    EXPECT_EQ(split.test_policy_ids.size(), 50U);
    for (auto const& id : split.train_policy_ids) {
        EXPECT_FALSE(split.test_policy_ids.contains(id));
    }
    auto again = split_dataset(recs, 65, 42);
    EXPECT_EQ(again.train_policy_ids, split.train_policy_ids);
    EXPECT_NE(split_dataset(recs, 65, 43).train_policy_ids, split.train_policy_ids);

    auto all = split_dataset(recs, 115, 1);
    EXPECT_TRUE(all.test_policy_ids.empty());
    EXPECT_THROW(split_dataset(recs, 116, 1), error);
}

TEST(CorpusIo, QaDataset)
{
    std::map<std::string, std::size_t> counts{{"p", 45}};
    auto ok = load_qa_dataset(R"({"question": "Do you share my data?", "policy_id": "p", "ground_truth": [3, 17]})", counts);
    ASSERT_EQ(ok.size(), 1U);
    EXPECT_EQ(ok[0].ground_truth, (std::set<std::size_t>{3, 17}));
    EXPECT_FALSE(ok[0].unanswerable());

    EXPECT_THROW(load_qa_dataset(R"({"question": "q?", "policy_id": "p", "ground_truth": [45]})", counts), parse_error);
    EXPECT_THROW(load_qa_dataset(R"({"question": "q?", "policy_id": "ghost", "ground_truth": []})", counts), error);

    auto empty = load_qa_dataset(R"({"question": "Do you sell to aliens?", "policy_id": "p", "ground_truth": []})", counts);
    ASSERT_EQ(empty.size(), 1U);
    EXPECT_TRUE(empty[0].unanswerable());
}

TEST(CorpusIo, EmbeddingCorpusSkipsBlankLines)
{
    auto docs = load_embedding_corpus("first doc\n\n  \nsecond doc\r\n");
    EXPECT_EQ(docs, (std::vector<std::string>{"first doc", "second doc"}));
}

TEST(CorpusIo, ConvertOpp115Csv)
{
    std::vector<std::string> segments{"We collect your location.", "Contact us at privacy@example.com."};
    std::string csv =
        R"(1,10,ann-1,99,0,First Party Collection/Use,"{""Personal Information Type"": {""selectedText"": ""location"", ""value"": ""Location""}, ""Purpose"": {""value"": ""not selected""}}",1/1/15,http://example.com
2,10,ann-2,99,1,Other,"{""Other Type"": {""value"": ""Privacy contact information""}}",1/1/15,http://example.com
3,10,ann-2,99,1,User Access Edit and Deletion,"{""Access Type"": {""value"": ""View""}, ""Weird"": {""value"": ""Thing""}}",1/1/15,http://example.com
)";
    auto conv = convert_opp115_csv(csv, "99", segments, default_taxonomy());
    ASSERT_EQ(conv.records.size(), 3U);
    EXPECT_TRUE(conv.records[0].categories.contains("first-party-collection-use"));
    EXPECT_TRUE(conv.records[0].attribute_values.contains({"personal-information-type", "location"}));
    EXPECT_EQ(conv.records[0].attribute_values.size(), 1U);
    EXPECT_TRUE(conv.records[1].categories.contains("privacy-contact-information"));
    EXPECT_EQ(conv.records[1].text, segments[1]);
    EXPECT_TRUE(conv.records[2].categories.contains("user-access-edit-deletion"));
    EXPECT_TRUE(conv.records[2].attribute_values.contains({"access-type", "view"}));
    EXPECT_TRUE(conv.dropped_labels.contains("weird=thing"));
}

TEST(CorpusIo, PolicyDirectory)
{
    auto dir = std::filesystem::temp_directory_path() / "policylens_corpus_io_test";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    detail::write_file((dir / "b.txt").string(), "Plain text policy.");
    detail::write_file((dir / "a.html").string(), "<p>Html policy.</p>");
    detail::write_file((dir / "notes.md").string(), "ignored");
    auto docs = load_policy_directory(dir);
    ASSERT_EQ(docs.size(), 2U);
    EXPECT_EQ(docs[0].policy_id, "a");
    EXPECT_TRUE(docs[0].is_html);
    EXPECT_FALSE(docs[1].is_html);
    std::filesystem::remove_all(dir);
}
