#include <cerrno>
#include <csignal>
#include <cstring>
#include <mutex>

#include <fcntl.h>
#include <poll.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "nrp/error.hpp"
#include "nrp/scorer_protocol.hpp"

extern char** environ;

namespace nrp {

namespace {

using Clock = std::chrono::steady_clock;

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { std::signal(SIGPIPE, SIG_IGN); });
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void set_nonblocking(int fd) {
    const int flags = ::fcntl(fd, F_GETFL, 0);
    if (flags < 0 || ::fcntl(fd, F_SETFL, flags | O_NONBLOCK) < 0) throw TransportError(errno_text("fcntl"));
}

int remaining_ms(Clock::time_point deadline) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1'000'000));
}

}  // namespace

CommandScorer::CommandScorer(std::string command, ExternalOptions options)
    : command_(std::move(command)), options_(options) {
    ignore_sigpipe();
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError(errno_text("pipe"));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw TransportError(errno_text("pipe"));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::string sh = "/bin/sh";
    std::string dash_c = "-c";
    char* argv[] = {sh.data(), dash_c.data(), command_.data(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw TransportError("cannot start scorer '" + command_ + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];

    try {
        set_nonblocking(to_child_);
        set_nonblocking(from_child_);
        const auto line = read_line();
        if (!line) throw HandshakeError("scorer '" + command_ + "' exited before sending a handshake");
        handshake_ = parse_handshake(*line);
    } catch (...) {
        shutdown();
        throw;
    }
    spdlog::debug("scorer '{}' connected as {}", command_, handshake_.name);
}

CommandScorer::~CommandScorer() { shutdown(); }

void CommandScorer::shutdown() noexcept {
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
    if (from_child_ >= 0) {
        ::close(from_child_);
        from_child_ = -1;
    }
    if (pid_ > 0) {
        // Closing stdin ends the session; give the adapter a moment to exit.
        int status = 0;
        for (int i = 0; i < 200; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                pid_ = -1;
                return;
            }
            ::usleep(5000);
        }
        ::kill(pid_, SIGKILL);
        ::waitpid(pid_, &status, 0);
        pid_ = -1;
    }
}

// Blocks until a full line arrives; nullopt on EOF.
std::optional<std::string> CommandScorer::read_line() {
    auto deadline = Clock::now() + options_.timeout;
    for (;;) {
        if (const auto nl = read_buffer_.find('\n'); nl != std::string::npos) {
            std::string line = read_buffer_.substr(0, nl);
            read_buffer_.erase(0, nl + 1);
            return line;
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, remaining_ms(deadline));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("poll"));
        }
        if (ready == 0) throw ScorerTimeoutError("scorer '" + command_ + "' timed out waiting for output");
        char buf[65536];
        const ssize_t n = ::read(from_child_, buf, sizeof buf);
        if (n < 0) {
            if (errno == EAGAIN || errno == EINTR) continue;
            throw TransportError(errno_text("read from scorer"));
        }
        if (n == 0) {
            if (read_buffer_.empty()) return std::nullopt;
            std::string line = std::move(read_buffer_);
            read_buffer_.clear();
            return line;
        }
        read_buffer_.append(buf, static_cast<std::size_t>(n));
        deadline = Clock::now() + options_.timeout;
    }
}

std::vector<double> CommandScorer::score_batch(std::string_view query, std::span<const ScoreItem> items) {
    if (to_child_ < 0) throw TransportError("scorer session is closed");
    std::string outgoing;
    std::vector<std::string_view> ids;
    ids.reserve(items.size());
    for (const auto& item : items) {
        outgoing += encode_request(item.id, query, item.text);
        outgoing += '\n';
        ids.push_back(item.id);
    }

    // Write and read concurrently so neither side blocks on a full pipe.
    std::vector<ScoreResponse> responses;
    responses.reserve(items.size());
    std::size_t written = 0;
    bool eof = false;
    auto deadline = Clock::now() + options_.timeout;
    auto drain_lines = [&] {
        for (auto nl = read_buffer_.find('\n'); nl != std::string::npos; nl = read_buffer_.find('\n')) {
            const std::string_view line(read_buffer_.data(), nl);
            if (!line.empty() && line != "\r") responses.push_back(parse_response(line));
            read_buffer_.erase(0, nl + 1);
        }
    };
    drain_lines();

    while (responses.size() < items.size() && !eof) {
        pollfd fds[2] = {{from_child_, POLLIN, 0}, {to_child_, POLLOUT, 0}};
        const nfds_t nfds = written < outgoing.size() ? 2 : 1;
        const int ready = ::poll(fds, nfds, remaining_ms(deadline));
        if (ready < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("poll"));
        }
        if (ready == 0) {
            throw ScorerTimeoutError("scorer '" + name() + "' timed out with " +
                                     std::to_string(items.size() - responses.size()) + " of " +
                                     std::to_string(items.size()) + " items unanswered");
        }
        if (nfds == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP)) != 0) {
            const ssize_t n = ::write(to_child_, outgoing.data() + written, outgoing.size() - written);
            if (n < 0 && errno != EAGAIN && errno != EINTR) {
                if (errno != EPIPE) throw TransportError(errno_text("write to scorer"));
                // Adapter stopped reading; whatever it answered is all we get.
                written = outgoing.size();
            } else if (n > 0) {
                written += static_cast<std::size_t>(n);
                deadline = Clock::now() + options_.timeout;
            }
        }
        if ((fds[0].revents & (POLLIN | POLLHUP | POLLERR)) != 0) {
            char buf[65536];
            const ssize_t n = ::read(from_child_, buf, sizeof buf);
            if (n < 0 && errno != EAGAIN && errno != EINTR) throw TransportError(errno_text("read from scorer"));
            if (n == 0) eof = true;
            if (n > 0) {
                read_buffer_.append(buf, static_cast<std::size_t>(n));
                deadline = Clock::now() + options_.timeout;
                drain_lines();
            }
        }
    }
    if (eof && !read_buffer_.empty()) {
        responses.push_back(parse_response(read_buffer_));
        read_buffer_.clear();
    }
    return collect_scores(ids, responses);
}

struct HttpScorer::Impl {
    std::unique_ptr<httplib::Client> client;
    std::string path;
    std::string url;
};

HttpScorer::HttpScorer(std::string url, ExternalOptions options) : impl_(std::make_unique<Impl>()) {
    ignore_sigpipe();
    impl_->url = url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw PreconditionError("scorer URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string base = path_start == std::string::npos ? url : url.substr(0, path_start);
    impl_->path = path_start == std::string::npos ? "/" : url.substr(path_start);
    impl_->client = std::make_unique<httplib::Client>(base);
    if (!impl_->client->is_valid()) throw TransportError("unsupported scorer URL " + url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options.timeout - secs);
    impl_->client->set_connection_timeout(secs.count(), usecs.count());
    impl_->client->set_read_timeout(secs.count(), usecs.count());
    impl_->client->set_write_timeout(secs.count(), usecs.count());

    const auto res = impl_->client->Get("/handshake");
    if (!res) {
        throw TransportError("cannot reach scorer at " + base + ": " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw HandshakeError("scorer handshake at " + base + "/handshake returned HTTP " + std::to_string(res->status));
    }
    handshake_ = parse_handshake(res->body);
}

HttpScorer::~HttpScorer() = default;

std::vector<double> HttpScorer::score_batch(std::string_view query, std::span<const ScoreItem> items) {
    auto body = nlohmann::json::array();
    std::vector<std::string_view> ids;
    ids.reserve(items.size());
    for (const auto& item : items) {
        body.push_back({{"id", item.id}, {"query", query}, {"text", item.text}});
        ids.push_back(item.id);
    }
    const auto res = impl_->client->Post(impl_->path, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                                         "application/json");
    if (!res) {
        if (res.error() == httplib::Error::Read || res.error() == httplib::Error::ConnectionTimeout) {
            throw ScorerTimeoutError("scorer at " + impl_->url + " timed out: " + httplib::to_string(res.error()));
        }
        throw TransportError("scorer at " + impl_->url + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw TransportError("scorer at " + impl_->url + " returned HTTP " + std::to_string(res->status));
    }
    const auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (!parsed.is_array()) throw TransportError("scorer at " + impl_->url + " did not return a JSON array");
    std::vector<ScoreResponse> responses;
    responses.reserve(parsed.size());
    for (const auto& obj : parsed) responses.push_back(parse_response(obj.dump()));
    return collect_scores(ids, responses);
}

}  // namespace nrp
