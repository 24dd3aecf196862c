#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "nrp/answers.hpp"
#include "nrp/corpus.hpp"
#include "nrp/error.hpp"
#include "nrp/genclient.hpp"
#include "nrp/pipeline.hpp"
#include "nrp/report.hpp"
#include "nrp/scorer_protocol.hpp"

namespace nrp::cli {

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// Raised for missing or inconsistent flags detected after parsing.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::uint64_t seed = 0;
    unsigned workers = 0;
    int verbosity = 0;

    std::string queries;
    std::string docs;
    std::string qrels_dir;
    bool extract_html = false;
    std::size_t min_chars = 50;

    std::string scorer;
    std::vector<std::string> scorers;
    double scorer_timeout = 120.0;
    int k = 10;

    std::string answers;
    std::string records;
    std::string validation;
    std::string system;
    std::string expert;
    std::string out_dir = ".";

    std::vector<std::string> models;
    std::size_t n_topics = 20;
    std::string prompt = "multimedqa";
    std::vector<std::string> model_params;

    std::string endpoint;
    std::string model;
    std::string out;
    GenParams gen;
    std::size_t max_in_flight = 4;
    int retries = 3;
};

nlohmann::json effective_config(const std::string& command, const Options& o) {
    return {
        {"command", command},
        {"seed", o.seed},
        {"workers", o.workers},
        {"verbose", o.verbosity},
        {"queries", o.queries},
        {"docs", o.docs},
        {"qrels-dir", o.qrels_dir},
        {"extract-html", o.extract_html},
        {"min-chars", o.min_chars},
        {"scorer", o.scorer},
        {"scorers", o.scorers},
        {"scorer-timeout", o.scorer_timeout},
        {"k", o.k},
        {"answers", o.answers},
        {"records", o.records},
        {"validation", o.validation},
        {"system", o.system},
        {"expert", o.expert},
        {"out-dir", o.out_dir},
        {"models", o.models},
        {"n-topics", o.n_topics},
        {"prompt", o.prompt},
        {"model-params", o.model_params},
        {"endpoint", o.endpoint},
        {"model", o.model},
        {"out", o.out},
        {"n-samples", o.gen.n_samples},
        {"max-new-tokens", o.gen.max_new_tokens},
        {"temperature", o.gen.temperature},
        {"top-k", o.gen.top_k},
        {"top-p", o.gen.top_p},
        {"repetition-penalty", o.gen.repetition_penalty},
        {"max-in-flight", o.max_in_flight},
        {"retries", o.retries},
    };
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

void require(const std::vector<std::string>& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string("missing required option ") + flag);
}

void write_run_config(const std::filesystem::path& dir, const std::string& command, const Options& o) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
    write_text_file(dir / "run_config.json", effective_config(command, o).dump(2) + "\n");
}

Corpus load(const Options& o) {
    require(o.queries, "--queries");
    require(o.docs, "--docs");
    require(o.qrels_dir, "--qrels-dir");
    return load_corpus(CorpusPaths{o.queries, o.docs, o.qrels_dir, o.extract_html, o.min_chars});
}

ScorerSpec scorer_spec(const std::string& text) {
    try {
        return parse_scorer_spec(text);
    } catch (const PreconditionError& e) {
        throw UsageError(e.what());
    }
}

ExternalOptions external_options(const Options& o) {
    return ExternalOptions{std::chrono::milliseconds(static_cast<long long>(o.scorer_timeout * 1000.0))};
}

std::vector<GeneratedAnswer> load_answers(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return parse_answers(in);
}

std::vector<TopicRanking> load_rankings(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return parse_topic_rankings(in);
}

std::vector<NrpRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return read_records_csv(in);
}

std::vector<ModelSize> parse_model_sizes(const std::vector<std::string>& entries) {
    std::vector<ModelSize> out;
    for (const auto& e : entries) {
        const auto eq = e.rfind('=');
        if (eq == std::string::npos || eq == 0) throw UsageError("--model-params expects name=count, got " + e);
        char* end = nullptr;
        const std::string number = e.substr(eq + 1);
        const double value = std::strtod(number.c_str(), &end);
        if (number.empty() || end != number.c_str() + number.size() || value <= 0.0) {
            throw UsageError("--model-params: invalid parameter count in " + e);
        }
        out.push_back(ModelSize{e.substr(0, eq), value});
    }
    return out;
}

int cmd_validate(const Options& o) {
    require(o.scorers, "--scorers");
    const auto corpus = load(o);
    const auto stats = std::make_shared<const CollectionStats>(build_stats(corpus.docs.documents()));
    std::vector<ScorerSource> sources;
    for (const auto& spec : o.scorers) sources.push_back(scorer_source(scorer_spec(spec), stats, external_options(o)));

    const auto report = validate_rankers(sources, corpus, o.k);
    write_run_config(o.out_dir, "validate", o);
    std::ostringstream csv;
    write_validation_csv(csv, &report);
    write_text_file(std::filesystem::path(o.out_dir) / "validation.csv", csv.str());
    std::cout << "winner: " << report.winner << '\n';
    return 0;
}

int cmd_rank(const Options& o) {
    require(o.scorer, "--scorer");
    require(o.answers, "--answers");
    const auto spec = scorer_spec(o.scorer);
    const auto corpus = load(o);
    const auto answers = load_answers(o.answers);
    const auto stats = std::make_shared<const CollectionStats>(build_stats(corpus.docs.documents()));

    const auto result = evaluate_answers(scorer_source(spec, stats, external_options(o)), answers, corpus,
                                         EvaluationOptions{o.workers});
    spdlog::info("ranked {} answers ({} skipped)", result.records.size(), result.skipped);

    const std::filesystem::path dir(o.out_dir);
    write_run_config(dir, "rank", o);
    std::ostringstream records;
    write_records_csv(records, result.records);
    write_text_file(dir / "records.csv", records.str());
    std::ostringstream summary;
    write_summary_csv(summary, aggregate_nrp(result.records));
    write_text_file(dir / "summary.csv", summary.str());
    return 0;
}

int cmd_generate(const Options& o) {
    require(o.endpoint, "--endpoint");
    require(o.model, "--model");
    require(o.queries, "--queries");
    require(o.out, "--out");
    std::ifstream in(o.queries, std::ios::binary);
    if (!in) throw DataError("cannot open " + o.queries);
    const auto queries = parse_queries(in);

    GenerationConfig config;
    config.endpoint = o.endpoint;
    config.model = o.model;
    if (const char* key = std::getenv("NRP_API_KEY")) config.api_key = key;
    try {
        config.prompt = parse_prompt_template(o.prompt);
        o.gen.validate();
    } catch (const PreconditionError& e) {
        throw UsageError(e.what());
    }
    config.params = o.gen;
    config.out_path = o.out;
    config.max_in_flight = o.max_in_flight;
    config.max_attempts = o.retries;

    auto dir = std::filesystem::path(o.out).parent_path();
    if (dir.empty()) dir = ".";
    write_run_config(dir, "generate", o);
    const auto report = generate_answers(config, queries);
    std::cout << "written: " << report.written << ", already present: " << report.already_present
              << ", failed: " << report.failed << '\n';
    return report.failed == 0 ? 0 : kExitData;
}

int cmd_agree(const Options& o) {
    require(o.scorer, "--scorer");
    require(o.answers, "--answers");
    require(o.models, "--models");
    const auto spec = scorer_spec(o.scorer);
    const auto corpus = load(o);
    const auto answers = load_answers(o.answers);
    const auto stats = std::make_shared<const CollectionStats>(build_stats(corpus.docs.documents()));
    const auto source = scorer_source(spec, stats, external_options(o));

    std::vector<GeneratedAnswer> prompt_answers;
    for (const auto& a : answers) {
        if (o.prompt.empty() || a.prompt_id == o.prompt) prompt_answers.push_back(a);
    }
    const auto evaluation = evaluate_answers(source, prompt_answers, corpus, EvaluationOptions{o.workers});
    const auto records = o.records.empty() ? evaluation.records : load_records(o.records);

    StudySampleOptions sample_options;
    sample_options.n_topics = o.n_topics;
    sample_options.models = o.models;
    sample_options.prompt_id = o.prompt;
    sample_options.seed = o.seed;
    const auto topics = select_study_sample(records, evaluation.doc_rankings, corpus, sample_options);
    const auto scorer = source.open();
    const auto system = rank_study_topics(*scorer, topics, prompt_answers, corpus, o.prompt);

    const std::filesystem::path dir(o.out_dir);
    write_run_config(dir, "agree", o);
    std::ostringstream sample;
    write_topic_rankings(sample, system);
    write_text_file(dir / "study_sample.jsonl", sample.str());

    if (!o.expert.empty()) {
        const auto expert = load_rankings(o.expert);
        const auto result = agreement(system, expert);
        std::ostringstream agreement_csv;
        write_agreement_csv(agreement_csv, &result);
        write_text_file(dir / "agreement.csv", agreement_csv.str());
        std::ostringstream flow;
        write_rank_flow_csv(flow, rank_flow(system, expert));
        write_text_file(dir / "rank_flow.csv", flow.str());
        std::cout << "mean_rbo: " << format_double(result.mean_rbo) << '\n'
                  << "mean_kendall_tau: " << format_double(result.mean_tau) << '\n';
    }
    return 0;
}

int cmd_report(const Options& o) {
    require(o.records, "--records");
    if (o.system.empty() != o.expert.empty()) throw UsageError("--system and --expert must be given together");
    const auto records = load_records(o.records);

    std::optional<ValidationReport> validation;
    if (!o.validation.empty()) {
        std::ifstream in(o.validation, std::ios::binary);
        if (!in) throw DataError("cannot open " + o.validation);
        validation = read_validation_csv(in);
    }
    std::optional<AgreementResult> agreement_result;
    std::vector<RankFlowRow> flow;
    if (!o.system.empty()) {
        const auto system = load_rankings(o.system);
        const auto expert = load_rankings(o.expert);
        agreement_result = agreement(system, expert);
        flow = rank_flow(system, expert);
    }
    const auto sizes = parse_model_sizes(o.model_params);

    ReportInputs inputs;
    inputs.records = records;
    inputs.validation = validation ? &*validation : nullptr;
    inputs.agreement = agreement_result ? &*agreement_result : nullptr;
    inputs.rank_flow = flow;
    inputs.model_sizes = sizes;
    emit_reports(inputs, o.out_dir);
    write_run_config(o.out_dir, "report", o);
    return 0;
}

void configure_logging(int verbosity) {
    auto logger = spdlog::stderr_color_mt("nrp");
    spdlog::set_default_logger(logger);
    spdlog::set_level(verbosity >= 2 ? spdlog::level::debug : verbosity == 1 ? spdlog::level::info : spdlog::level::warn);
}

}  // namespace

int run(int argc, char** argv) {
    Options o;
    CLI::App app{"Normalized rank position evaluation of generated answers", "nrp"};
    app.set_config("--config", "", "Flat key = value config file; flags override its values");
    app.require_subcommand(1);

    app.add_option("--seed", o.seed, "Seed for all sampling");
    app.add_option("--workers", o.workers, "Parallel workers (default: available processors)");
    app.add_flag("-v,--verbose", o.verbosity, "Increase log verbosity (repeatable)");

    app.add_option("--queries", o.queries, "queries.tsv (id<TAB>text)");
    app.add_option("--docs", o.docs, "docs.jsonl");
    app.add_option("--qrels-dir", o.qrels_dir, "Directory of qrels.<dimension>.txt files");
    app.add_flag("--extract-html", o.extract_html, "Treat document text as HTML and extract visible text");
    app.add_option("--min-chars", o.min_chars, "Drop documents with fewer characters")->capture_default_str();
    app.add_option("--scorer", o.scorer, "Scorer: tfidf, dph, echo, cmd:<command> or http:<url>");
    app.add_option("--scorers", o.scorers, "Comma-separated candidate scorers")->delimiter(',');
    app.add_option("--scorer-timeout", o.scorer_timeout, "Seconds without progress before an external scorer fails")
        ->capture_default_str();
    app.add_option("--k", o.k, "nDCG cutoff")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--answers", o.answers, "answers.jsonl");
    app.add_option("--records", o.records, "records.csv from a previous rank run");
    app.add_option("--validation", o.validation, "validation.csv from a previous validate run");
    app.add_option("--system", o.system, "System topic rankings (JSONL)");
    app.add_option("--expert", o.expert, "Expert topic rankings (JSONL)");
    app.add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
    app.add_option("--models", o.models, "Comma-separated models for the study sample")->delimiter(',');
    app.add_option("--n-topics", o.n_topics, "Topics in the study sample")->capture_default_str();
    app.add_option("--prompt", o.prompt, "Prompt template (none, short_qa, long_qa, multimedqa)")->capture_default_str();
    app.add_option("--model-params", o.model_params, "Comma-separated name=parameter_count pairs")->delimiter(',');
    app.add_option("--endpoint", o.endpoint, "Chat-completions URL");
    app.add_option("--model", o.model, "Model name sent to the endpoint");
    app.add_option("--out", o.out, "answers.jsonl to append to");
    app.add_option("--n-samples", o.gen.n_samples, "Samples per query")->capture_default_str();
    app.add_option("--max-new-tokens", o.gen.max_new_tokens)->capture_default_str();
    app.add_option("--temperature", o.gen.temperature)->capture_default_str();
    app.add_option("--top-k", o.gen.top_k)->capture_default_str();
    app.add_option("--top-p", o.gen.top_p)->capture_default_str();
    app.add_option("--repetition-penalty", o.gen.repetition_penalty)->capture_default_str();
    app.add_option("--max-in-flight", o.max_in_flight, "Concurrent generation requests")->capture_default_str();
    app.add_option("--retries", o.retries, "Attempts per request")->capture_default_str();

    struct Command {
        const char* name;
        const char* help;
        int (*handler)(const Options&);
    };
    const Command commands[] = {
        {"validate", "Compare scorers by nDCG@k (needs --queries --docs --qrels-dir --scorers)", cmd_validate},
        {"rank", "Compute NRP records (needs --queries --docs --qrels-dir --scorer --answers)", cmd_rank},
        {"generate", "Generate answers (needs --endpoint --model --queries --out)", cmd_generate},
        {"agree", "Select study topics and compare with expert rankings "
                  "(needs --queries --docs --qrels-dir --scorer --answers --models)",
         cmd_agree},
        {"report", "Write report tables (needs --records)", cmd_report},
    };
    std::vector<CLI::App*> subcommands;
    for (const auto& c : commands) subcommands.push_back(app.add_subcommand(c.name, c.help)->fallthrough());

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    configure_logging(o.verbosity);
    for (std::size_t i = 0; i < subcommands.size(); ++i) {
        if (!subcommands[i]->parsed()) continue;
        try {
            return commands[i].handler(o);
        } catch (const UsageError& e) {
            std::cerr << "nrp " << commands[i].name << ": " << e.what() << "\n\n" << subcommands[i]->help();
            return kExitUsage;
        } catch (const std::exception& e) {
            std::cerr << "nrp " << commands[i].name << ": " << e.what() << '\n';
            return kExitData;
        }
    }
    return kExitUsage;
}

}  // namespace nrp::cli
