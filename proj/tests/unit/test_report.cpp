#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "nrp/answers.hpp"
#include "nrp/error.hpp"
#include "nrp/report.hpp"
#include "test_support.hpp"

using namespace nrp;
using nrp::testing::read_file;

namespace {

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST(FormatDouble, ShortestRoundTrip) {
    EXPECT_EQ(format_double(0.8), "0.8");
    EXPECT_EQ(format_double(1.0), "1");
    const double third = 1.0 / 3.0;
    EXPECT_EQ(std::stod(format_double(third)), third);
}

TEST(Csv, QuotingRoundTrip) {
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
    EXPECT_EQ(parse_csv_line("x,\"a,b\",\"say \"\"hi\"\"\","),
              (std::vector<std::string>{"x", "a,b", "say \"hi\"", ""}));
}

TEST(RecordsCsv, EmptyIsHeaderOnly) {
    std::ostringstream out;
    write_records_csv(out, {});
    EXPECT_EQ(out.str(), std::string(kRecordsHeader) + "\n");
}

TEST(RecordsCsv, OneRecordHasSchemaColumns) {
    const std::vector<NrpRecord> recs{make_record("q1", "gpt2", "none", 3, 2, 10)};
    std::ostringstream out;
    write_records_csv(out, recs);
    const auto lines = lines_of(out.str());
    ASSERT_EQ(lines.size(), 2u);
    EXPECT_EQ(lines[1], "q1,gpt2,none,3,2,10,0.8");
}

TEST(RecordsCsv, RoundTrip) {
    std::mt19937_64 rng(31);
    std::vector<NrpRecord> recs;
    for (int i = 0; i < 300; ++i) {
        const std::int64_t pool = 2 + static_cast<std::int64_t>(rng() % 500);
        recs.push_back(make_record("q" + std::to_string(rng() % 50), i % 7 == 0 ? "model, \"quoted\"" : "m",
                                   "multimedqa", i, static_cast<std::int64_t>(rng() % pool), pool));
    }
    std::ostringstream out;
    write_records_csv(out, recs);
    std::istringstream in(out.str());
    EXPECT_EQ(read_records_csv(in), recs);
}

TEST(RecordsCsv, InconsistentNrpRejected) {
    std::istringstream in(std::string(kRecordsHeader) + "\nq1,m,p,0,2,10,0.5\n");
    EXPECT_THROW(read_records_csv(in), DataError);
}

TEST(ValidationCsv, RoundTrip) {
    ValidationReport v;
    v.k = 10;
    v.winner = "dph";
    v.rows = {{"dph", "relevance", 0.75, 3}, {"tfidf", "relevance", 0.5, 3}};
    std::ostringstream out;
    write_validation_csv(out, &v);
    std::istringstream in(out.str());
    const auto back = read_validation_csv(in);
    EXPECT_EQ(back.winner, "dph");
    EXPECT_EQ(back.k, 10);
    ASSERT_EQ(back.rows.size(), 2u);
    EXPECT_EQ(back.rows[1].scorer, "tfidf");
    EXPECT_EQ(back.rows[1].ndcg, 0.5);
}

TEST(TopicRankings, RoundTrip) {
    const std::vector<TopicRanking> rankings{{"t1", RankedList({"a", "b"})}, {"t2", RankedList({"c"})}};
    std::ostringstream out;
    write_topic_rankings(out, rankings);
    std::istringstream in(out.str());
    const auto back = parse_topic_rankings(in);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[0].ranking, rankings[0].ranking);
}

TEST(ReportJson, EmptyRecords) {
    const auto j = build_report_json({});
    EXPECT_TRUE(j["records"].empty());
    EXPECT_TRUE(j["summary"].empty());
    EXPECT_TRUE(j["validation"].is_null());
    EXPECT_TRUE(j["agreement"].is_null());
}

TEST(EmitReports, WritesAllFiles) {
    nrp::testing::TempDir dir;
    emit_reports({}, dir / "out");
    for (const auto* name : {"records.csv", "summary.csv", "validation.csv", "agreement.csv", "rank_flow.csv"}) {
        const auto text = read_file(dir / "out" / name);
        EXPECT_EQ(lines_of(text).size(), 1u) << name;
    }
    const auto j = nlohmann::json::parse(read_file(dir / "out/report.json"));
    EXPECT_TRUE(j.is_object());
}

TEST(EmitReports, ModelSizeTable) {
    const std::vector<NrpRecord> recs{make_record("q1", "gpt2", "none", 0, 1, 2), make_record("q1", "big", "none", 0, 0, 2)};
    const std::vector<ModelSize> sizes{{"gpt2", 124e6}};
    ReportInputs in;
    in.records = recs;
    in.model_sizes = sizes;
    const auto j = build_report_json(in);
    ASSERT_EQ(j["model_size"].size(), 1u);
    EXPECT_EQ(j["model_size"][0]["mean_nrp"], 0.5);
}

TEST(Answers, JsonlRoundTripAndTruncatedTail) {
    const std::vector<GeneratedAnswer> answers{{"q1", "m", "none", 0, "text \"with\" quotes\nand lines"},
                                               {"q1", "m", "none", 1, ""}};
    std::ostringstream out;
    write_answers(out, answers);
    std::istringstream in(out.str() + "{\"query_id\":\"q1\",\"mod");
    EXPECT_EQ(parse_answers(in), answers);
    std::istringstream bad("{\"query_id\":1}\n");
    EXPECT_THROW(parse_answers(bad), DataError);
}
