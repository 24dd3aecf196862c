#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "nrp/answers.hpp"
#include "nrp/error.hpp"
#include "nrp/genclient.hpp"
#include "test_support.hpp"

using namespace nrp;
using nlohmann::json;

namespace {

// OpenAI-style chat-completions mock running in a background thread.
class MockEndpoint {
public:
    std::atomic<bool> reject_repetition_penalty{false};
    std::atomic<bool> always_fail{false};
    std::atomic<int> requests{0};

    MockEndpoint() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            const auto body = json::parse(req.body);
            {
                std::lock_guard lock(mutex_);
                bodies_.push_back(body);
            }
            if (always_fail) {
                res.status = 503;
                res.set_content("overloaded", "text/plain");
                return;
            }
            if (reject_repetition_penalty && body.contains("repetition_penalty")) {
                res.status = 400;
                res.set_content(R"({"error":{"message":"Unsupported parameter: 'repetition_penalty'"}})",
                                "application/json");
                return;
            }
            const auto prompt = body["messages"][0]["content"].get<std::string>();
            res.set_content(json({{"choices", {{{"message", {{"role", "assistant"}, {"content", "  re: " + prompt + "\n"}}}}}}})
                                .dump(),
                            "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockEndpoint() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    std::vector<json> bodies() {
        std::lock_guard lock(mutex_);
        return bodies_;
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mutex_;
    std::vector<json> bodies_;
};

const std::vector<Query> kQueries{{"q1", "what is flu"}, {"q2", "is coffee healthy"}};

GenerationConfig config_for(const MockEndpoint& mock, const std::filesystem::path& out) {
    GenerationConfig c;
    c.endpoint = mock.url();
    c.model = "mock-llm";
    c.prompt = PromptTemplate::short_qa;
    c.out_path = out;
    c.backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::seconds(10);
    return c;
}

std::vector<GeneratedAnswer> read_answers(const std::filesystem::path& path) {
    std::ifstream in(path);
    return parse_answers(in);
}

std::size_t line_count(const std::filesystem::path& path) {
    const auto text = nrp::testing::read_file(path);
    return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST(Prompts, Templates) {
    EXPECT_EQ(render_prompt(PromptTemplate::none, "what is flu"), "what is flu");
    EXPECT_EQ(render_prompt(PromptTemplate::short_qa, "what is flu"), "Q: what is flu A:");
    EXPECT_EQ(render_prompt(PromptTemplate::long_qa, "what is flu"), "Question: what is flu Answer:");
    EXPECT_EQ(render_prompt(PromptTemplate::multimedqa, "what is flu"),
              "You are a helpful medical knowledge assistant. Provide useful, complete, and scientifically grounded "
              "answers to common consumer search queries about health. Question: what is flu Complete Answer:");
}

TEST(Prompts, Ids) {
    for (const auto* id : {"none", "short_qa", "long_qa", "multimedqa"}) {
        EXPECT_EQ(prompt_template_id(parse_prompt_template(id)), id);
    }
    EXPECT_THROW(parse_prompt_template("chat"), PreconditionError);
}

TEST(GenParams, Defaults) {
    const GenParams p;
    EXPECT_EQ(p.max_new_tokens, 512);
    EXPECT_EQ(p.temperature, 0.75);
    EXPECT_EQ(p.top_k, 50);
    EXPECT_EQ(p.top_p, 0.95);
    EXPECT_EQ(p.repetition_penalty, 1.2);
    EXPECT_EQ(p.n_samples, 10);
    GenParams bad;
    bad.temperature = 0.0;
    EXPECT_THROW(bad.validate(), PreconditionError);
}

TEST(Generate, WritesEverySampleAndResumes) {
    MockEndpoint mock;
    nrp::testing::TempDir dir;
    const auto out = dir / "answers.jsonl";
    const auto first = generate_answers(config_for(mock, out), kQueries);
    EXPECT_EQ(first.written, 20u);
    EXPECT_EQ(line_count(out), 20u);

    const auto answers = read_answers(out);
    std::set<std::pair<std::string, std::int64_t>> keys;
    for (const auto& a : answers) {
        keys.emplace(a.query_id, a.sample);
        EXPECT_EQ(a.model, "mock-llm");
        EXPECT_EQ(a.prompt_id, "short_qa");
    }
    EXPECT_EQ(keys.size(), 20u);
    const auto q1 = std::find_if(answers.begin(), answers.end(), [](const auto& a) { return a.query_id == "q1"; });
    EXPECT_EQ(q1->text, "re: Q: what is flu A:");

    const int before = mock.requests;
    const auto second = generate_answers(config_for(mock, out), kQueries);
    EXPECT_EQ(second.written, 0u);
    EXPECT_EQ(second.already_present, 20u);
    EXPECT_EQ(line_count(out), 20u);
    EXPECT_EQ(mock.requests, before);
}

TEST(Generate, RecoversFromInterruptedTail) {
    MockEndpoint mock;
    nrp::testing::TempDir dir;
    const auto out = dir / "answers.jsonl";
    auto config = config_for(mock, out);
    config.params.n_samples = 3;
    generate_answers(config, kQueries);
    auto text = nrp::testing::read_file(out);
    const auto cut = text.rfind('\n', text.size() - 2);
    nrp::testing::write_file(out, text.substr(0, cut + 1) + "{\"query_id\":\"q");
    const auto report = generate_answers(config, kQueries);
    EXPECT_EQ(report.written, 1u);
    EXPECT_EQ(read_answers(out).size(), 6u);
    EXPECT_EQ(line_count(out), 6u);
}

TEST(Generate, DropsRejectedParameter) {
    MockEndpoint mock;
    mock.reject_repetition_penalty = true;
    nrp::testing::TempDir dir;
    const auto out = dir / "answers.jsonl";
    auto config = config_for(mock, out);
    config.params.n_samples = 4;
    const auto report = generate_answers(config, kQueries);
    EXPECT_EQ(report.written, 8u);
    EXPECT_EQ(report.failed, 0u);
    EXPECT_EQ(read_answers(out).size(), 8u);
    const auto bodies = mock.bodies();
    ASSERT_FALSE(bodies.empty());
    EXPECT_FALSE(bodies.back().contains("repetition_penalty"));
    EXPECT_TRUE(bodies.back().contains("top_p"));
    EXPECT_EQ(bodies.back()["temperature"], 0.75);
    EXPECT_EQ(bodies.back()["max_tokens"], 512);
}

TEST(Generate, PersistentFailuresGoToSidecar) {
    MockEndpoint mock;
    mock.always_fail = true;
    nrp::testing::TempDir dir;
    const auto out = dir / "answers.jsonl";
    auto config = config_for(mock, out);
    config.params.n_samples = 1;
    config.max_in_flight = 1;
    const auto report = generate_answers(config, std::span(kQueries).first(1));
    EXPECT_EQ(report.failed, 1u);
    EXPECT_EQ(mock.requests, 3);
    EXPECT_EQ(line_count(out), 0u);
    const auto failed = nrp::testing::read_file(failed_log_path(out));
    const auto j = json::parse(failed.substr(0, failed.find('\n')));
    EXPECT_EQ(j["query_id"], "q1");
    EXPECT_EQ(j["sample"], 0);
}
