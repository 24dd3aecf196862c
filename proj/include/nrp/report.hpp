#pragma once

// Flat-file outputs: records/summary/validation/agreement/rank-flow CSVs,
// the bundled report.json, and the topic ranking JSONL exchanged with
// expert annotators.

#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nrp/metrics.hpp"
#include "nrp/pipeline.hpp"

namespace nrp {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// RFC 4180 field quoting (only when the field needs it).
std::string csv_field(std::string_view field);
/// Splits one CSV record; quoted fields may contain commas and doubled quotes.
std::vector<std::string> parse_csv_line(std::string_view line);

inline constexpr std::string_view kRecordsHeader = "query_id,model,prompt_id,sample,rank_r,pool_size,nrp";

void write_records_csv(std::ostream& out, std::span<const NrpRecord> records);
/// Validates every row (nrp must equal 1 - rank_r/pool_size).
std::vector<NrpRecord> read_records_csv(std::istream& in);

void write_summary_csv(std::ostream& out, std::span<const NrpSummary> rows);
void write_validation_csv(std::ostream& out, const ValidationReport* validation);
ValidationReport read_validation_csv(std::istream& in);
void write_agreement_csv(std::ostream& out, const AgreementResult* agreement);
void write_rank_flow_csv(std::ostream& out, std::span<const RankFlowRow> rows);

/// `{"query_id", "ranking": [item ids]}` per line.
std::vector<TopicRanking> parse_topic_rankings(std::istream& in);
void write_topic_rankings(std::ostream& out, std::span<const TopicRanking> rankings);

struct ModelSize {
    std::string model;
    double parameters = 0.0;
};

struct ReportInputs {
    std::span<const NrpRecord> records;
    const ValidationReport* validation = nullptr;
    const AgreementResult* agreement = nullptr;
    std::span<const RankFlowRow> rank_flow;
    /// Optional parameter counts; adds a size-vs-NRP table to report.json.
    std::span<const ModelSize> model_sizes;
};

nlohmann::json build_report_json(const ReportInputs& inputs);

/// Writes records.csv, summary.csv, validation.csv, agreement.csv,
/// rank_flow.csv and report.json into `out_dir` (created if needed).
/// Missing parts yield header-only CSVs.
void emit_reports(const ReportInputs& inputs, const std::filesystem::path& out_dir);

/// Writes text to a file, raising DataError with the path on failure.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace nrp
