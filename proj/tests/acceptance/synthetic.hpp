#pragma once

// Synthetic corpora with planted judgments, for acceptance runs only.

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nrp/answers.hpp"
#include "nrp/corpus.hpp"

namespace nrp::synthetic {

struct Fixture {
    std::vector<Query> queries;
    std::vector<Document> docs;
    JudgmentSet relevance;
    /// Per query, the id of its highest-graded document.
    std::map<std::string, std::string> top_doc;
};

struct FixtureShape {
    std::size_t queries = 50;
    std::size_t pool_size = 100;
    std::size_t vocabulary = 2000;
    std::size_t doc_tokens = 40;
};

/// Every query gets two private terms. Graded documents mix them into
/// background text; ungraded ones never contain them. Grade 3 goes to one
/// document per query, then grades 2, 1 and 0 in decreasing density.
Fixture planted_fixture(const FixtureShape& shape, std::uint64_t seed);

/// Small random corpus with shared vocabulary across queries.
Fixture random_fixture(std::mt19937_64& rng);

/// Random background words drawn from the shared vocabulary.
std::string background_text(std::mt19937_64& rng, std::size_t vocabulary, std::size_t tokens);

/// Tokens guaranteed absent from every fixture vocabulary.
std::string out_of_vocabulary_text(std::mt19937_64& rng, std::size_t tokens);

/// Writes queries.tsv, docs.jsonl and qrels/qrels.relevance.txt.
void write_fixture(const Fixture& fixture, const std::filesystem::path& dir);

void write_answers_file(const std::vector<GeneratedAnswer>& answers, const std::filesystem::path& path);

}  // namespace nrp::synthetic
