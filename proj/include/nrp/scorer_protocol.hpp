#pragma once

// The `nrp-scorer/1` line protocol, the external scorer clients (child
// process and HTTP), the native echo adapter, and scorer construction from
// textual specs such as `dph` or `cmd:python adapter.py --echo`.

#include <chrono>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <variant>

#include "nrp/ranking.hpp"

namespace nrp {

inline constexpr std::string_view kProtocolName = "nrp-scorer/1";

struct Handshake {
    std::string protocol;
    std::string name;
    std::optional<int> max_connections;
};

/// Throws HandshakeError unless the line is a valid `nrp-scorer/1` handshake.
Handshake parse_handshake(std::string_view line);
std::string encode_handshake(const Handshake& handshake);

struct ScoreRequest {
    std::string id;
    std::string query;
    std::string text;
};

struct ScoreResponse {
    std::string id;
    /// Either a score or the adapter's error message.
    std::variant<double, std::string> result;
};

std::string encode_request(std::string_view id, std::string_view query, std::string_view text);
ScoreRequest parse_request(std::string_view line);

std::string encode_response(const ScoreResponse& response);
/// Throws NonFiniteScoreError for NaN/Infinity scores and TransportError for
/// anything else that is not a well-formed response object.
ScoreResponse parse_response(std::string_view line);

/// Matches responses to the batch by id and returns scores aligned with
/// `ids`. Raises MissingItemError, ItemRejectedError, NonFiniteScoreError
/// or TransportError (unknown or repeated ids).
std::vector<double> collect_scores(std::span<const std::string_view> ids, std::span<const ScoreResponse> responses);

struct ExternalOptions {
    /// Maximum time without progress before ScorerTimeoutError.
    std::chrono::milliseconds timeout{std::chrono::seconds(120)};
};

/// Runs `command` through /bin/sh and talks to it over its standard input
/// and output. One instance is one serial session.
class CommandScorer final : public Scorer {
public:
    explicit CommandScorer(std::string command, ExternalOptions options = {});
    ~CommandScorer() override;

    CommandScorer(const CommandScorer&) = delete;
    CommandScorer& operator=(const CommandScorer&) = delete;

    std::string name() const override { return handshake_.name; }
    std::vector<double> score_batch(std::string_view query, std::span<const ScoreItem> items) override;
    std::optional<int> max_connections() const override { return handshake_.max_connections; }

    const Handshake& handshake() const noexcept { return handshake_; }

private:
    std::optional<std::string> read_line();
    void shutdown() noexcept;

    std::string command_;
    ExternalOptions options_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string read_buffer_;
    Handshake handshake_;
};

/// POSTs each batch as a JSON array to the URL; the handshake is fetched
/// from `GET /handshake` on the same host.
class HttpScorer final : public Scorer {
public:
    explicit HttpScorer(std::string url, ExternalOptions options = {});
    ~HttpScorer() override;

    std::string name() const override { return handshake_.name; }
    std::vector<double> score_batch(std::string_view query, std::span<const ScoreItem> items) override;
    std::optional<int> max_connections() const override { return handshake_.max_connections; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    Handshake handshake_;
};

/// Serves the echo scorer over the line protocol until `in` is exhausted.
/// Malformed request lines are answered with an error object and the
/// session continues. Returns the number of requests answered.
std::size_t serve_echo(std::istream& in, std::ostream& out, std::optional<int> max_connections = std::nullopt);

struct ScorerSpec {
    enum class Kind { tfidf, dph, echo, command, http };

    Kind kind = Kind::dph;
    /// Command line or URL for external scorers.
    std::string target;

    /// Canonical textual form, e.g. `dph` or `cmd:./adapter --echo`.
    std::string to_string() const;
};

/// Parses `tfidf`, `dph`, `echo`, `cmd:<command line>` or `http:<URL>`.
ScorerSpec parse_scorer_spec(std::string_view spec);

/// Opens a scorer. Lexical scorers share the statistics; external ones start
/// a new session per call.
std::unique_ptr<Scorer> make_scorer(const ScorerSpec& spec, std::shared_ptr<const CollectionStats> stats,
                                    const ExternalOptions& options = {});

}  // namespace nrp
