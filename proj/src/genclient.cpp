#include "nrp/genclient.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cctype>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include <fcntl.h>
#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nrp/answers.hpp"
#include "nrp/error.hpp"

namespace nrp {

using nlohmann::json;

PromptTemplate parse_prompt_template(std::string_view id) {
    if (id == "none") return PromptTemplate::none;
    if (id == "short_qa") return PromptTemplate::short_qa;
    if (id == "long_qa") return PromptTemplate::long_qa;
    if (id == "multimedqa") return PromptTemplate::multimedqa;
    throw PreconditionError("unknown prompt template '" + std::string(id) +
                            "' (expected none, short_qa, long_qa or multimedqa)");
}

std::string_view prompt_template_id(PromptTemplate t) {
    switch (t) {
        case PromptTemplate::none: return "none";
        case PromptTemplate::short_qa: return "short_qa";
        case PromptTemplate::long_qa: return "long_qa";
        case PromptTemplate::multimedqa: return "multimedqa";
    }
    return "none";
}

std::string render_prompt(PromptTemplate t, std::string_view query_text) {
    const std::string q(query_text);
    switch (t) {
        case PromptTemplate::none: return q;
        case PromptTemplate::short_qa: return "Q: " + q + " A:";
        case PromptTemplate::long_qa: return "Question: " + q + " Answer:";
        case PromptTemplate::multimedqa:
            return "You are a helpful medical knowledge assistant. Provide useful, complete, and scientifically "
                   "grounded answers to common consumer search queries about health. Question: " +
                   q + " Complete Answer:";
    }
    return q;
}

void GenParams::validate() const {
    if (max_new_tokens <= 0 || temperature <= 0.0 || top_k <= 0 || top_p <= 0.0 || repetition_penalty <= 0.0 ||
        n_samples <= 0) {
        throw PreconditionError("generation parameters must all be positive");
    }
}

std::filesystem::path failed_log_path(const std::filesystem::path& out_path) {
    auto p = out_path;
    p += ".failed.jsonl";
    return p;
}

namespace {

// Parameters a server may legitimately not support.
constexpr std::array<std::string_view, 3> kOptionalParams = {"top_k", "top_p", "repetition_penalty"};

struct Job {
    const Query* query;
    int sample;
};

// Appends whole lines with one write(2) each on an O_APPEND descriptor.
class LineSink {
public:
    explicit LineSink(const std::filesystem::path& path) : path_(path) {
        fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
        if (fd_ < 0) throw DataError("cannot open " + path.string() + " for appending");
    }
    ~LineSink() {
        if (fd_ >= 0) ::close(fd_);
    }
    LineSink(const LineSink&) = delete;
    LineSink& operator=(const LineSink&) = delete;

    void append(std::string line) {
        line += '\n';
        std::lock_guard lock(mutex_);
        std::size_t done = 0;
        while (done < line.size()) {
            const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw DataError("failed writing " + path_.string());
            }
            done += static_cast<std::size_t>(n);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::mutex mutex_;
};

// Drops a trailing partial line left by an interrupted run.
void truncate_partial_tail(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    const std::string contents((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (contents.empty() || contents.back() == '\n') return;
    const auto last_nl = contents.rfind('\n');
    const auto keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    spdlog::warn("{}: discarding {} bytes of an interrupted final line", path.string(), contents.size() - keep);
    std::filesystem::resize_file(path, keep);
}

struct Endpoint {
    std::string base;
    std::string path;
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw PreconditionError("endpoint URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

std::string trim_copy(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n\f\v";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string_view::npos) return {};
    return std::string(s.substr(first, s.find_last_not_of(ws) - first + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

class Generator {
public:
    Generator(const GenerationConfig& config, LineSink& answers, LineSink& failures)
        : config_(config), answers_(answers), failures_(failures), endpoint_(split_url(config.endpoint)) {}

    void run(std::span<const Job> jobs, GenerationReport& report) {
        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> written{0};
        std::atomic<std::size_t> failed{0};
        auto work = [&] {
            httplib::Client client(endpoint_.base);
            const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
            client.set_connection_timeout(secs);
            client.set_read_timeout(secs);
            client.set_write_timeout(secs);
            if (!config_.api_key.empty()) client.set_bearer_token_auth(config_.api_key);
            for (std::size_t i = next++; i < jobs.size(); i = next++) {
                if (generate_one(client, jobs[i])) {
                    ++written;
                } else {
                    ++failed;
                }
            }
        };
        const auto n = std::clamp<std::size_t>(config_.max_in_flight, 1, std::max<std::size_t>(jobs.size(), 1));
        if (n == 1) {
            work();
        } else {
            std::vector<std::jthread> threads;
            for (std::size_t t = 0; t < n; ++t) threads.emplace_back(work);
        }
        report.written = written;
        report.failed = failed;
    }

private:
    json request_body(const std::string& prompt) {
        json body = {{"model", config_.model},
                     {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
                     {"max_tokens", config_.params.max_new_tokens},
                     {"temperature", config_.params.temperature}};
        std::lock_guard lock(dropped_mutex_);
        if (!dropped_.contains("top_p")) body["top_p"] = config_.params.top_p;
        if (!dropped_.contains("top_k")) body["top_k"] = config_.params.top_k;
        if (!dropped_.contains("repetition_penalty")) body["repetition_penalty"] = config_.params.repetition_penalty;
        return body;
    }

    // Returns true when the error names a parameter we can omit; marks it dropped.
    bool drop_rejected_param(const json& sent, const std::string& error_body) {
        const auto text = lower(error_body);
        std::lock_guard lock(dropped_mutex_);
        for (const auto param : kOptionalParams) {
            const std::string name(param);
            if (!sent.contains(name) || text.find(name) == std::string::npos) continue;
            if (dropped_.insert(name).second) {
                spdlog::warn("endpoint rejected '{}'; omitting it from all further requests", name);
            }
            return true;
        }
        // Another worker may already have dropped it.
        for (const auto param : kOptionalParams) {
            if (sent.contains(std::string(param)) && dropped_.contains(std::string(param))) return true;
        }
        return false;
    }

    bool generate_one(httplib::Client& client, const Job& job) {
        const auto prompt = render_prompt(config_.prompt, job.query->text);
        std::string last_error;
        int attempt = 0;
        while (attempt < config_.max_attempts) {
            const auto body = request_body(prompt);
            const auto res = client.Post(endpoint_.path, body.dump(-1, ' ', false, json::error_handler_t::replace),
                                         "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
            } else if (res->status == 200) {
                const auto parsed = json::parse(res->body, nullptr, false);
                const json* content = nullptr;
                if (parsed.is_object() && parsed.contains("choices") && parsed["choices"].is_array() &&
                    !parsed["choices"].empty()) {
                    const auto& choice = parsed["choices"][0];
                    if (choice.contains("message") && choice["message"].contains("content")) {
                        content = &choice["message"]["content"];
                    }
                }
                if (content != nullptr && (content->is_string() || content->is_null())) {
                    const std::string text = content->is_string() ? trim_copy(content->get<std::string>()) : "";
                    answers_.append(encode_answer(GeneratedAnswer{job.query->id, config_.model,
                                                                  std::string(prompt_template_id(config_.prompt)),
                                                                  job.sample, text}));
                    return true;
                }
                last_error = "response without choices[0].message.content";
            } else if (res->status >= 400 && res->status < 500 && drop_rejected_param(body, res->body)) {
                continue;  // retry without the parameter; not counted as an attempt
            } else {
                last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300);
            }
            ++attempt;
            if (attempt < config_.max_attempts) {
                std::this_thread::sleep_for(config_.backoff * (1 << (attempt - 1)));
            }
        }
        spdlog::error("query {} sample {} failed after {} attempts: {}", job.query->id, job.sample,
                      config_.max_attempts, last_error);
        failures_.append(json({{"query_id", job.query->id},
                               {"model", config_.model},
                               {"prompt_id", std::string(prompt_template_id(config_.prompt))},
                               {"sample", job.sample},
                               {"error", last_error}})
                             .dump(-1, ' ', false, json::error_handler_t::replace));
        return false;
    }

    const GenerationConfig& config_;
    LineSink& answers_;
    LineSink& failures_;
    Endpoint endpoint_;
    std::mutex dropped_mutex_;
    std::set<std::string, std::less<>> dropped_;
};

}  // namespace

GenerationReport generate_answers(const GenerationConfig& config, std::span<const Query> queries) {
    config.params.validate();
    if (config.model.empty()) throw PreconditionError("generate_answers: model name is empty");
    if (config.max_attempts < 1) throw PreconditionError("generate_answers: max_attempts must be >= 1");

    const auto prompt_id = std::string(prompt_template_id(config.prompt));
    std::set<std::pair<std::string, std::int64_t>> present;
    if (std::filesystem::exists(config.out_path)) {
        truncate_partial_tail(config.out_path);
        std::ifstream in(config.out_path, std::ios::binary);
        for (const auto& a : parse_answers(in)) {
            if (a.model == config.model && a.prompt_id == prompt_id) present.emplace(a.query_id, a.sample);
        }
    }

    GenerationReport report;
    std::vector<Job> jobs;
    for (const auto& q : queries) {
        for (int s = 0; s < config.params.n_samples; ++s) {
            if (present.contains({q.id, s})) {
                ++report.already_present;
            } else {
                jobs.push_back(Job{&q, s});
            }
        }
    }

    LineSink answers(config.out_path);
    if (jobs.empty()) return report;
    LineSink failures(failed_log_path(config.out_path));
    Generator generator(config, answers, failures);
    generator.run(jobs, report);
    return report;
}

}  // namespace nrp
