#include "nrp/scorer_protocol.hpp"

#include <cmath>
#include <regex>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "nrp/error.hpp"

namespace nrp {

namespace {

using nlohmann::json;

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string_view strip_eol(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r')) line.remove_suffix(1);
    return line;
}

std::string clip(std::string_view s) {
    constexpr std::size_t kMax = 200;
    return s.size() <= kMax ? std::string(s) : std::string(s.substr(0, kMax)) + "...";
}

}  // namespace

Handshake parse_handshake(std::string_view line) {
    json j;
    try {
        j = json::parse(strip_eol(line));
    } catch (const json::exception&) {
        throw HandshakeError("scorer handshake is not JSON: " + clip(line));
    }
    if (!j.is_object() || !j.contains("protocol") || !j["protocol"].is_string()) {
        throw HandshakeError("scorer handshake lacks a protocol field: " + clip(line));
    }
    Handshake h;
    h.protocol = j["protocol"].get<std::string>();
    if (h.protocol != kProtocolName) {
        throw HandshakeError("scorer speaks " + h.protocol + ", expected " + std::string(kProtocolName));
    }
    if (!j.contains("name") || !j["name"].is_string()) {
        throw HandshakeError("scorer handshake lacks a name field");
    }
    h.name = j["name"].get<std::string>();
    if (const auto mc = j.find("max_connections"); mc != j.end() && !mc->is_null()) {
        if (!mc->is_number_integer() || mc->get<long long>() < 1) {
            throw HandshakeError("max_connections must be a positive integer");
        }
        h.max_connections = mc->get<int>();
    }
    return h;
}

std::string encode_handshake(const Handshake& handshake) {
    json j = {{"protocol", handshake.protocol}, {"name", handshake.name}};
    if (handshake.max_connections) j["max_connections"] = *handshake.max_connections;
    return dump(j);
}

std::string encode_request(std::string_view id, std::string_view query, std::string_view text) {
    return dump(json{{"id", id}, {"query", query}, {"text", text}});
}

ScoreRequest parse_request(std::string_view line) {
    json j;
    try {
        j = json::parse(strip_eol(line));
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed request: ") + e.what());
    }
    if (!j.is_object()) throw TransportError("request is not a JSON object");
    for (const char* field : {"id", "query", "text"}) {
        if (!j.contains(field) || !j[field].is_string()) {
            throw TransportError(std::string("request field '") + field + "' missing or not a string");
        }
    }
    return ScoreRequest{j["id"].get<std::string>(), j["query"].get<std::string>(), j["text"].get<std::string>()};
}

std::string encode_response(const ScoreResponse& response) {
    json j = {{"id", response.id}};
    if (const auto* score = std::get_if<double>(&response.result)) {
        if (!std::isfinite(*score)) throw NonFiniteScoreError("refusing to encode non-finite score for " + response.id);
        j["score"] = *score;
    } else {
        j["error"] = std::get<std::string>(response.result);
    }
    return dump(j);
}

ScoreResponse parse_response(std::string_view raw) {
    const std::string_view line = strip_eol(raw);
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception&) {
        // Python's json module emits bare NaN/Infinity, which is not JSON.
        static const std::regex non_finite(R"re("score"\s*:\s*-?(NaN|Infinity|inf|nan|[0-9.]+[eE]\+?[0-9]{3,}))re");
        if (std::regex_search(line.begin(), line.end(), non_finite)) {
            throw NonFiniteScoreError("scorer returned a non-finite score: " + clip(line));
        }
        throw TransportError("malformed scorer response: " + clip(line));
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string()) {
        throw TransportError("scorer response without string id: " + clip(line));
    }
    ScoreResponse r;
    r.id = j["id"].get<std::string>();
    if (const auto err = j.find("error"); err != j.end()) {
        r.result = err->is_string() ? err->get<std::string>() : dump(*err);
        return r;
    }
    const auto score = j.find("score");
    if (score == j.end()) throw TransportError("scorer response for " + r.id + " has neither score nor error");
    if (score->is_null()) throw NonFiniteScoreError("scorer returned a null score for item " + r.id);
    if (!score->is_number()) throw TransportError("scorer response for " + r.id + " has a non-numeric score");
    const double value = score->get<double>();
    if (!std::isfinite(value)) throw NonFiniteScoreError("scorer returned a non-finite score for item " + r.id);
    r.result = value;
    return r;
}

std::vector<double> collect_scores(std::span<const std::string_view> ids, std::span<const ScoreResponse> responses) {
    std::unordered_map<std::string_view, std::size_t> slot;
    slot.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!slot.emplace(ids[i], i).second) throw PreconditionError("duplicate id in batch: " + std::string(ids[i]));
    }
    std::vector<double> scores(ids.size(), 0.0);
    std::vector<bool> seen(ids.size(), false);
    for (const auto& r : responses) {
        const auto it = slot.find(r.id);
        if (it == slot.end()) throw TransportError("scorer answered unknown item " + r.id);
        if (seen[it->second]) throw TransportError("scorer answered item " + r.id + " twice");
        if (const auto* err = std::get_if<std::string>(&r.result)) {
            throw ItemRejectedError("scorer rejected item " + r.id + ": " + *err);
        }
        seen[it->second] = true;
        scores[it->second] = std::get<double>(r.result);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (!seen[i]) throw MissingItemError(std::string(ids[i]));
    }
    return scores;
}

std::size_t serve_echo(std::istream& in, std::ostream& out, std::optional<int> max_connections) {
    out << encode_handshake(Handshake{std::string(kProtocolName), "echo", max_connections}) << '\n' << std::flush;
    std::size_t answered = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (strip_eol(line).empty()) continue;
        ScoreResponse response;
        try {
            const auto req = parse_request(line);
            response.id = req.id;
            response.result = echo_score(req.query, req.text);
        } catch (const TransportError& e) {
            // Salvage the id when the object is otherwise unusable.
            const auto j = json::parse(strip_eol(line), nullptr, false);
            if (j.is_object() && j.contains("id") && j["id"].is_string()) response.id = j["id"].get<std::string>();
            response.result = std::string(e.what());
        }
        out << encode_response(response) << '\n';
        ++answered;
        // Flush only when no further request is already buffered.
        if (in.rdbuf()->in_avail() <= 0) out.flush();
    }
    out.flush();
    return answered;
}

std::string ScorerSpec::to_string() const {
    switch (kind) {
        case Kind::tfidf: return "tfidf";
        case Kind::dph: return "dph";
        case Kind::echo: return "echo";
        case Kind::command: return "cmd:" + target;
        case Kind::http: return "http:" + target;
    }
    return {};
}

ScorerSpec parse_scorer_spec(std::string_view spec) {
    if (spec == "tfidf") return {ScorerSpec::Kind::tfidf, {}};
    if (spec == "dph") return {ScorerSpec::Kind::dph, {}};
    if (spec == "echo") return {ScorerSpec::Kind::echo, {}};
    if (spec.starts_with("cmd:") && spec.size() > 4) return {ScorerSpec::Kind::command, std::string(spec.substr(4))};
    if (spec.starts_with("http:") && spec.size() > 5) {
        std::string url(spec.substr(5));
        if (!url.starts_with("http://") && !url.starts_with("https://")) url = "http://" + url;
        return {ScorerSpec::Kind::http, std::move(url)};
    }
    throw PreconditionError("unknown scorer spec '" + std::string(spec) +
                            "' (expected tfidf, dph, echo, cmd:<command> or http:<url>)");
}

std::unique_ptr<Scorer> make_scorer(const ScorerSpec& spec, std::shared_ptr<const CollectionStats> stats,
                                    const ExternalOptions& options) {
    switch (spec.kind) {
        case ScorerSpec::Kind::tfidf:
            if (!stats) throw PreconditionError("tfidf scorer needs collection statistics");
            return std::make_unique<TfidfScorer>(std::move(stats));
        case ScorerSpec::Kind::dph:
            if (!stats) throw PreconditionError("dph scorer needs collection statistics");
            return std::make_unique<DphScorer>(std::move(stats));
        case ScorerSpec::Kind::echo:
            return std::make_unique<EchoScorer>();
        case ScorerSpec::Kind::command:
            return std::make_unique<CommandScorer>(spec.target, options);
        case ScorerSpec::Kind::http:
            return std::make_unique<HttpScorer>(spec.target, options);
    }
    throw PreconditionError("unhandled scorer kind");
}

}  // namespace nrp
