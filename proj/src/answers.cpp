#include "nrp/answers.hpp"

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nrp/error.hpp"

namespace nrp {

namespace {

GeneratedAnswer answer_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw DataError(where + ": expected a JSON object");
    for (const char* field : {"query_id", "model", "prompt_id", "text"}) {
        if (!j.contains(field) || !j[field].is_string()) {
            throw DataError(where + ": field '" + field + "' missing or not a string");
        }
    }
    if (!j.contains("sample") || !j["sample"].is_number_integer() || j["sample"].get<std::int64_t>() < 0) {
        throw DataError(where + ": field 'sample' must be a non-negative integer");
    }
    return GeneratedAnswer{j["query_id"].get<std::string>(), j["model"].get<std::string>(),
                           j["prompt_id"].get<std::string>(), j["sample"].get<std::int64_t>(),
                           j["text"].get<std::string>()};
}

}  // namespace

std::vector<GeneratedAnswer> parse_answers(std::istream& in) {
    std::vector<GeneratedAnswer> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const bool terminated = !in.eof();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const auto where = "answers line " + std::to_string(lineno);
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            if (!terminated) {
                spdlog::warn("{}: ignoring truncated trailing line", where);
                break;
            }
            throw DataError(where + ": invalid JSON");
        }
        out.push_back(answer_from_json(j, where));
    }
    return out;
}

std::string encode_answer(const GeneratedAnswer& a) {
    const nlohmann::json j = {{"query_id", a.query_id}, {"model", a.model}, {"prompt_id", a.prompt_id},
                              {"sample", a.sample},     {"text", a.text}};
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

void write_answers(std::ostream& out, const std::vector<GeneratedAnswer>& answers) {
    for (const auto& a : answers) out << encode_answer(a) << '\n';
}

}  // namespace nrp
