#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace nrp {

struct GeneratedAnswer {
    std::string query_id;
    std::string model;
    std::string prompt_id;
    std::int64_t sample = 0;
    std::string text;

    bool operator==(const GeneratedAnswer&) const = default;
};

/// `{"query_id","model","prompt_id","sample","text"}` per line. A final line
/// without a terminating newline that fails to parse is treated as an
/// interrupted write and ignored; any other malformed line is a DataError.
std::vector<GeneratedAnswer> parse_answers(std::istream& in);

std::string encode_answer(const GeneratedAnswer& answer);
void write_answers(std::ostream& out, const std::vector<GeneratedAnswer>& answers);

}  // namespace nrp
