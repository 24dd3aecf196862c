#include "nrp/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nrp/error.hpp"

namespace nrp {

using nlohmann::json;

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc{}) throw PreconditionError("cannot format number");
    return std::string(buf, ptr);
}

std::string csv_field(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (const char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::vector<std::string> parse_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current += c;
        }
    }
    if (quoted) throw DataError("unterminated quoted CSV field");
    fields.push_back(std::move(current));
    return fields;
}

namespace {

template <class T>
T parse_number(const std::string& text, const std::string& where) {
    T value{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw DataError(where + ": '" + text + "' is not a valid number");
    }
    return value;
}

std::string join_row(std::initializer_list<std::string> fields) {
    std::string out;
    bool first = true;
    for (const auto& f : fields) {
        if (!first) out += ',';
        out += csv_field(f);
        first = false;
    }
    return out;
}

bool read_csv_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

}  // namespace

void write_records_csv(std::ostream& out, std::span<const NrpRecord> records) {
    out << kRecordsHeader << '\n';
    for (const auto& r : records) {
        out << join_row({r.query_id, r.model, r.prompt_id, std::to_string(r.sample), std::to_string(r.rank_r),
                         std::to_string(r.pool_size), format_double(r.nrp)})
            << '\n';
    }
}

std::vector<NrpRecord> read_records_csv(std::istream& in) {
    std::string line;
    if (!read_csv_line(in, line) || line != kRecordsHeader) {
        throw DataError("records.csv: expected header '" + std::string(kRecordsHeader) + "'");
    }
    std::vector<NrpRecord> out;
    std::size_t lineno = 1;
    while (read_csv_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto where = "records.csv line " + std::to_string(lineno);
        const auto f = parse_csv_line(line);
        if (f.size() != 7) throw DataError(where + ": expected 7 columns");
        NrpRecord r;
        try {
            r = make_record(f[0], f[1], f[2], parse_number<std::int64_t>(f[3], where),
                            parse_number<std::int64_t>(f[4], where), parse_number<std::int64_t>(f[5], where));
        } catch (const PreconditionError& e) {
            throw DataError(where + ": " + e.what());
        }
        const double stored = parse_number<double>(f[6], where);
        if (std::abs(stored - r.nrp) > 1e-12) throw DataError(where + ": nrp does not match rank_r and pool_size");
        r.nrp = stored;
        out.push_back(std::move(r));
    }
    return out;
}

void write_summary_csv(std::ostream& out, std::span<const NrpSummary> rows) {
    out << "model,prompt_id,count,mean,min,q1,median,q3,max\n";
    for (const auto& s : rows) {
        out << join_row({s.model, s.prompt_id, std::to_string(s.count), format_double(s.mean), format_double(s.min),
                         format_double(s.q1), format_double(s.median), format_double(s.q3), format_double(s.max)})
            << '\n';
    }
}

void write_validation_csv(std::ostream& out, const ValidationReport* validation) {
    out << "scorer,dimension,ndcg_cut,ndcg,queries,winner\n";
    if (validation == nullptr) return;
    for (const auto& row : validation->rows) {
        out << join_row({row.scorer, row.dimension, std::to_string(validation->k), format_double(row.ndcg),
                         std::to_string(row.queries), row.scorer == validation->winner ? "1" : "0"})
            << '\n';
    }
}

ValidationReport read_validation_csv(std::istream& in) {
    std::string line;
    if (!read_csv_line(in, line) || line != "scorer,dimension,ndcg_cut,ndcg,queries,winner") {
        throw DataError("validation.csv: unexpected header");
    }
    ValidationReport report;
    std::size_t lineno = 1;
    while (read_csv_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto where = "validation.csv line " + std::to_string(lineno);
        const auto f = parse_csv_line(line);
        if (f.size() != 6) throw DataError(where + ": expected 6 columns");
        report.k = parse_number<int>(f[2], where);
        report.rows.push_back(ValidationRow{f[0], f[1], parse_number<double>(f[3], where),
                                            parse_number<std::size_t>(f[4], where)});
        if (f[5] == "1") report.winner = f[0];
    }
    return report;
}

void write_agreement_csv(std::ostream& out, const AgreementResult* agreement) {
    out << "query_id,rbo,kendall_tau\n";
    if (agreement == nullptr) return;
    for (const auto& row : agreement->rows) {
        out << join_row({row.query_id, format_double(row.rbo), format_double(row.kendall_tau)}) << '\n';
    }
}

void write_rank_flow_csv(std::ostream& out, std::span<const RankFlowRow> rows) {
    out << "source,query_id,position,item_id,label\n";
    for (const auto& r : rows) {
        out << join_row({r.source, r.query_id, std::to_string(r.position), r.item_id, r.label}) << '\n';
    }
}

std::vector<TopicRanking> parse_topic_rankings(std::istream& in) {
    std::vector<TopicRanking> out;
    std::string line;
    std::size_t lineno = 0;
    while (read_csv_line(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto where = "rankings line " + std::to_string(lineno);
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw DataError(where + ": invalid JSON object");
        if (!j.contains("query_id") || !j["query_id"].is_string() || !j.contains("ranking") ||
            !j["ranking"].is_array()) {
            throw DataError(where + ": expected fields query_id (string) and ranking (array)");
        }
        std::vector<std::string> items;
        for (const auto& item : j["ranking"]) {
            if (!item.is_string()) throw DataError(where + ": ranking entries must be strings");
            items.push_back(item.get<std::string>());
        }
        try {
            out.push_back(TopicRanking{j["query_id"].get<std::string>(), RankedList(std::move(items))});
        } catch (const PreconditionError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

void write_topic_rankings(std::ostream& out, std::span<const TopicRanking> rankings) {
    for (const auto& t : rankings) {
        const json j = {{"query_id", t.query_id}, {"ranking", t.ranking.items()}};
        out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    }
}

json build_report_json(const ReportInputs& inputs) {
    json report = json::object();

    json records = json::array();
    for (const auto& r : inputs.records) {
        records.push_back({{"query_id", r.query_id}, {"model", r.model}, {"prompt_id", r.prompt_id},
                           {"sample", r.sample}, {"rank_r", r.rank_r}, {"pool_size", r.pool_size}, {"nrp", r.nrp}});
    }
    report["records"] = std::move(records);

    const auto summary = aggregate_nrp(inputs.records);
    json summary_rows = json::array();
    for (const auto& s : summary) {
        summary_rows.push_back({{"model", s.model}, {"prompt_id", s.prompt_id}, {"count", s.count}, {"mean", s.mean},
                                {"min", s.min}, {"q1", s.q1}, {"median", s.median}, {"q3", s.q3}, {"max", s.max}});
    }
    report["summary"] = std::move(summary_rows);

    json query_means = json::array();
    for (const auto& m : per_query_means(inputs.records)) {
        query_means.push_back({{"model", m.model}, {"prompt_id", m.prompt_id}, {"query_id", m.query_id},
                               {"count", m.count}, {"mean", m.mean}});
    }
    report["per_query_means"] = std::move(query_means);

    if (inputs.validation != nullptr) {
        json rows = json::array();
        for (const auto& row : inputs.validation->rows) {
            rows.push_back({{"scorer", row.scorer}, {"dimension", row.dimension}, {"ndcg", row.ndcg},
                            {"queries", row.queries}});
        }
        report["validation"] = {{"k", inputs.validation->k}, {"winner", inputs.validation->winner},
                                {"rows", std::move(rows)}, {"failures", inputs.validation->failures}};
    } else {
        report["validation"] = nullptr;
    }

    if (inputs.agreement != nullptr) {
        json rows = json::array();
        for (const auto& row : inputs.agreement->rows) {
            rows.push_back({{"query_id", row.query_id}, {"rbo", row.rbo}, {"kendall_tau", row.kendall_tau}});
        }
        report["agreement"] = {{"mean_rbo", inputs.agreement->mean_rbo},
                               {"mean_kendall_tau", inputs.agreement->mean_tau},
                               {"rows", std::move(rows)}};
    } else {
        report["agreement"] = nullptr;
    }

    json flow = json::array();
    for (const auto& r : inputs.rank_flow) {
        flow.push_back({{"source", r.source}, {"query_id", r.query_id}, {"position", r.position},
                        {"item_id", r.item_id}, {"label", r.label}});
    }
    report["rank_flow"] = std::move(flow);

    json sizes = json::array();
    for (const auto& size : inputs.model_sizes) {
        for (const auto& s : summary) {
            if (s.model != size.model) continue;
            sizes.push_back({{"model", s.model}, {"parameters", size.parameters}, {"prompt_id", s.prompt_id},
                             {"mean_nrp", s.mean}, {"median_nrp", s.median}});
        }
    }
    report["model_size"] = std::move(sizes);
    return report;
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + path.string() + " for writing");
    out << contents;
    out.close();
    if (!out) throw DataError("failed writing " + path.string());
}

void emit_reports(const ReportInputs& inputs, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create output directory " + out_dir.string() + ": " + ec.message());

    auto write = [&](const char* name, auto&& fill) {
        std::ostringstream buf;
        fill(buf);
        write_text_file(out_dir / name, buf.str());
    };
    write("records.csv", [&](std::ostream& o) { write_records_csv(o, inputs.records); });
    write("summary.csv", [&](std::ostream& o) { write_summary_csv(o, aggregate_nrp(inputs.records)); });
    write("validation.csv", [&](std::ostream& o) { write_validation_csv(o, inputs.validation); });
    write("agreement.csv", [&](std::ostream& o) { write_agreement_csv(o, inputs.agreement); });
    write("rank_flow.csv", [&](std::ostream& o) { write_rank_flow_csv(o, inputs.rank_flow); });
    write("report.json", [&](std::ostream& o) { o << build_report_json(inputs).dump(2) << '\n'; });
}

}  // namespace nrp
