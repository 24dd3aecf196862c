#pragma once

// Answer generation against OpenAI-compatible chat-completions endpoints,
// with the four prompt templates and resumable JSONL output.

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "nrp/corpus.hpp"

namespace nrp {

enum class PromptTemplate { none, short_qa, long_qa, multimedqa };

/// `none`, `short_qa`, `long_qa` or `multimedqa`.
PromptTemplate parse_prompt_template(std::string_view id);
std::string_view prompt_template_id(PromptTemplate t);

/// Substitutes the query text, unmodified, into the template.
std::string render_prompt(PromptTemplate t, std::string_view query_text);

struct GenParams {
    int max_new_tokens = 512;
    double temperature = 0.75;
    int top_k = 50;
    double top_p = 0.95;
    double repetition_penalty = 1.2;
    int n_samples = 10;

    /// Throws PreconditionError unless every parameter is positive.
    void validate() const;
};

struct GenerationConfig {
    /// Full chat-completions URL, e.g. http://localhost:8000/v1/chat/completions.
    std::string endpoint;
    std::string model;
    /// Bearer token; empty sends no Authorization header.
    std::string api_key;
    PromptTemplate prompt = PromptTemplate::multimedqa;
    GenParams params;
    std::filesystem::path out_path;
    std::size_t max_in_flight = 4;
    int max_attempts = 3;
    std::chrono::milliseconds backoff{500};
    std::chrono::milliseconds timeout{std::chrono::minutes(5)};
};

struct GenerationReport {
    std::size_t written = 0;
    std::size_t already_present = 0;
    std::size_t failed = 0;
};

/// Requests `n_samples` completions per query and appends each one to
/// `out_path` as soon as it arrives. (query, model, prompt, sample) entries
/// already in the file are skipped. Requests that still fail after
/// `max_attempts` are logged to `<out_path>.failed.jsonl` and skipped.
/// Sampling parameters the endpoint rejects are dropped with a warning.
GenerationReport generate_answers(const GenerationConfig& config, std::span<const Query> queries);

/// Path of the sidecar log of failed requests.
std::filesystem::path failed_log_path(const std::filesystem::path& out_path);

}  // namespace nrp
