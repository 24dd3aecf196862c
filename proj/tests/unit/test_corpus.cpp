#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>

#include "nrp/corpus.hpp"
#include "nrp/error.hpp"
#include "test_support.hpp"

using namespace nrp;

namespace {

std::vector<Query> queries_from(const std::string& text) {
    std::istringstream in(text);
    return parse_queries(in);
}

JudgmentSet qrels_from(const std::string& text, Warnings* w = nullptr,
                       const Dimension& dim = Dimension::relevance()) {
    std::istringstream in(text);
    return parse_qrels(in, dim, w);
}

std::string message_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(ParseQueries, SingleLine) {
    const auto qs = queries_from("q1\twhat is tinnitus\n");
    ASSERT_EQ(qs.size(), 1u);
    EXPECT_EQ(qs[0], (Query{"q1", "what is tinnitus"}));
}

TEST(ParseQueries, EmptyStream) { EXPECT_TRUE(queries_from("").empty()); }

TEST(ParseQueries, DuplicateIdNamesIdAndLine) {
    const auto msg = message_of([] { queries_from("q1\ta\nq1\tb\n"); });
    EXPECT_NE(msg.find("duplicate query id q1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
}

TEST(ParseQueries, MalformedLineReportsLine) {
    const auto msg = message_of([] { queries_from("q1\tok\nnotab\n"); });
    EXPECT_NE(msg.find("line 2"), std::string::npos) << msg;
    EXPECT_THROW(queries_from("q1\t   \n"), DataError);
}

TEST(ParseQueries, RoundTrip) {
    const std::vector<Query> qs{{"q1", "flu"}, {"q2", "is coffee bad for you"}};
    std::ostringstream out;
    write_queries(out, qs);
    EXPECT_EQ(queries_from(out.str()), qs);
}

TEST(ParseQrels, SingleGrade) {
    const auto set = qrels_from("q1 0 d42 2\n");
    EXPECT_EQ(set.grade("q1", "d42"), 2);
    EXPECT_EQ(set.size(), 1u);
}

TEST(ParseQrels, DuplicateOverridesWithOneWarning) {
    Warnings w;
    const auto set = qrels_from("q1 0 d42 1\nq1 0 d42 0\n", &w);
    EXPECT_EQ(set.grade("q1", "d42"), 0);
    EXPECT_EQ(w.size(), 1u);
}

TEST(ParseQrels, NegativeGradeIsErrorAtLine1) {
    const auto msg = message_of([] { qrels_from("q1 0 d42 -1\n"); });
    EXPECT_NE(msg.find("line 1"), std::string::npos) << msg;
    EXPECT_THROW(qrels_from("q1 0 d42 -1\n"), DataError);
}

TEST(ParseQrels, NonIntegerGradeIsError) {
    EXPECT_THROW(qrels_from("q1 0 d1 1.5\n"), DataError);
    EXPECT_THROW(qrels_from("q1 0 d1\n"), DataError);
}

TEST(Dimension, Names) {
    EXPECT_EQ(Dimension::from_name("readability"), Dimension::readability());
    EXPECT_EQ(Dimension::from_name("novelty").kind(), Dimension::Kind::custom);
    EXPECT_EQ(Dimension::from_name("novelty").name(), "novelty");
}

TEST(Documents, JsonlRoundTrip) {
    const std::vector<Document> docs{{"d1", "text \"quoted\"", std::nullopt}, {"d2", "caf\xc3\xa9", "http://x"}};
    std::ostringstream out;
    write_documents(out, docs);
    std::istringstream in(out.str());
    EXPECT_EQ(parse_documents(in), docs);
}

TEST(Documents, DuplicateIdRejectedByStore) {
    EXPECT_THROW(DocumentStore(std::vector<Document>{{"d1", "a", {}}, {"d1", "b", {}}}), DataError);
}

TEST(ExtractText, StripsMarkup) { EXPECT_EQ(extract_text("<p>Hello <b>world</b></p>"), "Hello world"); }

TEST(ExtractText, DropsScript) { EXPECT_EQ(extract_text("<script>x=1</script>ok"), "ok"); }

TEST(ExtractText, DecodesEntities) {
    EXPECT_EQ(extract_text("a &amp; b"), "a & b");
    EXPECT_EQ(extract_text("&lt;tag&gt; &#65;&#x42;"), "<tag> AB");
}

TEST(ExtractText, BlockTagsSeparateWords) {
    EXPECT_EQ(extract_text("<div>one</div><div>two</div><!-- gone --><style>p{}</style>"), "one two");
}

TEST(Utf8, SanitizeAndCount) {
    EXPECT_EQ(sanitize_utf8("ok\xff"), "ok\xef\xbf\xbd");
    EXPECT_EQ(count_chars("caf\xc3\xa9"), 4u);
}

TEST(FilterShort, Boundary) {
    const std::vector<Document> docs{{"short", std::string(49, 'x'), {}}, {"exact", std::string(50, 'x'), {}}};
    const auto r = filter_short_documents(docs, 50);
    ASSERT_EQ(r.kept.size(), 1u);
    EXPECT_EQ(r.kept[0].id, "exact");
    EXPECT_EQ(r.dropped, 1u);
}

TEST(FilterShort, CountsCharactersNotBytes) {
    std::string text;
    for (int i = 0; i < 50; ++i) text += "\xc3\xa9";
    EXPECT_EQ(filter_short_documents({{"d", text, {}}}, 50).kept.size(), 1u);
}

TEST(FilterShort, ZeroKeepsAll) {
    const std::vector<Document> docs{{"a", "", {}}, {"b", "x", {}}};
    EXPECT_EQ(filter_short_documents(docs, 0).kept.size(), 2u);
}

TEST(FilterShort, IdempotentAndMonotone) {
    std::mt19937_64 rng(7);
    for (int round = 0; round < 50; ++round) {
        std::vector<Document> docs;
        for (int i = 0; i < 30; ++i) docs.push_back({"d" + std::to_string(i), std::string(rng() % 120, 'a'), {}});
        const std::size_t lo = rng() % 100;
        const std::size_t hi = lo + rng() % 20;
        const auto once = filter_short_documents(docs, lo);
        EXPECT_EQ(filter_short_documents(once.kept, lo).kept, once.kept);
        const auto stricter = filter_short_documents(docs, hi);
        EXPECT_LE(stricter.kept.size(), once.kept.size());
        for (const auto& d : stricter.kept) {
            EXPECT_NE(std::find(once.kept.begin(), once.kept.end(), d), once.kept.end());
        }
    }
}

TEST(Pool, UnionAcrossDimensions) {
    std::vector<JudgmentSet> js{qrels_from("q1 0 d1 1\nq1 0 d2 0\n"),
                                qrels_from("q1 0 d3 2\nq1 0 d1 1\n", nullptr, Dimension::readability())};
    const auto pool = pool_for_query(js, "q1");
    EXPECT_EQ(pool.members, (std::vector<std::string>{"d1", "d2", "d3"}));
}

TEST(Pool, UnjudgedQueryIsError) {
    std::vector<JudgmentSet> js{qrels_from("q1 0 d1 1\n")};
    const auto msg = message_of([&] { pool_for_query(js, "q9"); });
    EXPECT_NE(msg.find("query has no judged documents"), std::string::npos) << msg;
}

TEST(Pool, IndependentOfJudgmentOrder) {
    const std::string lines[] = {"q1 0 d5 1\n", "q1 0 d2 0\n", "q1 0 d9 3\n", "q1 0 d1 2\n"};
    std::string forward;
    std::string backward;
    for (int i = 0; i < 4; ++i) {
        forward += lines[i];
        backward += lines[3 - i];
    }
    EXPECT_EQ(pool_for_query({qrels_from(forward)}, "q1").members,
              pool_for_query({qrels_from(backward)}, "q1").members);
}

TEST(Join, DropsUnknownQueriesAndDocuments) {
    std::vector<JudgmentSet> js{qrels_from("q1 0 d1 1\nq1 0 dX 1\nqX 0 d1 1\n")};
    const std::vector<Query> qs{{"q1", "flu"}};
    const DocumentStore store(std::vector<Document>{{"d1", "text", {}}});
    Warnings w;
    join_judgments(js, qs, store, &w);
    EXPECT_EQ(js[0].size(), 1u);
    EXPECT_FALSE(w.empty());
}

TEST(LoadCorpus, ReadsDirectory) {
    nrp::testing::TempDir dir;
    nrp::testing::write_file(dir / "q.tsv", "q1\tflu shot\n");
    nrp::testing::write_file(dir / "d.jsonl",
                             "{\"doc_id\":\"d1\",\"text\":\"<p>" + std::string(60, 'a') + "</p>\"}\n"
                             "{\"doc_id\":\"d2\",\"text\":\"tiny\"}\n");
    std::filesystem::create_directory(dir / "qrels");
    nrp::testing::write_file(dir / "qrels/qrels.relevance.txt", "q1 0 d1 1\nq1 0 d2 2\n");
    nrp::testing::write_file(dir / "qrels/qrels.credibility.txt", "q1 0 d1 0\n");
    Warnings w;
    const auto corpus = load_corpus({dir / "q.tsv", dir / "d.jsonl", dir / "qrels", true, 50}, &w);
    EXPECT_EQ(corpus.docs.size(), 1u);
    EXPECT_EQ(corpus.docs.documents()[0].text, std::string(60, 'a'));
    EXPECT_EQ(corpus.judgments.size(), 2u);
    ASSERT_NE(corpus.judgments_for(Dimension::relevance()), nullptr);
    EXPECT_EQ(corpus.judgments_for(Dimension::relevance())->size(), 1u);
}
