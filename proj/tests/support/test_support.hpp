#pragma once

// Helpers shared by the unit tests and the acceptance suite: scratch
// directories, running the built tools, and brute-force metric oracles.

#include <stdlib.h>
#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nrp::testing {

inline const std::filesystem::path kFixtures = NRP_FIXTURES_DIR;
inline const std::string kCli = NRP_CLI_PATH;
inline const std::string kEchoScorer = NRP_ECHO_SCORER_PATH;

class TempDir {
public:
    TempDir() {
        std::string tmpl = (std::filesystem::temp_directory_path() / "nrp-test-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    out << contents;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

struct CommandResult {
    int exit_code = -1;
    std::string output;
};

/// Runs a shell command, capturing stdout and stderr together.
inline CommandResult run_command(const std::string& command) {
    CommandResult result;
    FILE* pipe = ::popen((command + " 2>&1").c_str(), "r");
    if (pipe == nullptr) return result;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, n);
    const int status = ::pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

// Brute-force oracles, written from the definitions and sharing no code
// with the library.

inline double oracle_ndcg(const std::vector<std::string>& ranked, const std::map<std::string, int>& grades, int k) {
    double dcg = 0.0;
    for (int i = 0; i < k && i < static_cast<int>(ranked.size()); ++i) {
        const auto it = grades.find(ranked[i]);
        const int g = it == grades.end() ? 0 : it->second;
        dcg += g / std::log2(i + 2.0);
    }
    std::vector<int> ideal;
    for (const auto& [id, g] : grades) ideal.push_back(g);
    std::sort(ideal.rbegin(), ideal.rend());
    double idcg = 0.0;
    for (int i = 0; i < k && i < static_cast<int>(ideal.size()); ++i) idcg += ideal[i] / std::log2(i + 2.0);
    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

inline double oracle_tau(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < b.size(); ++i) pos[b[i]] = i;
    long concordant = 0;
    long discordant = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            if (pos[a[i]] < pos[a[j]]) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double pairs = static_cast<double>(a.size() * (a.size() - 1) / 2);
    return (concordant - discordant) / pairs;
}

inline double oracle_rbo(const std::vector<std::string>& a, const std::vector<std::string>& b, double p) {
    const std::size_t n = std::min(a.size(), b.size());
    double total = 0.0;
    for (std::size_t d = 1; d <= n; ++d) {
        std::set<std::string> sa(a.begin(), a.begin() + d);
        std::size_t shared = 0;
        for (std::size_t i = 0; i < d; ++i) shared += sa.count(b[i]);
        const double agreement = static_cast<double>(shared) / d;
        total += p == 1.0 ? agreement : std::pow(p, d - 1.0) * agreement;
    }
    return p == 1.0 ? total / n : (1.0 - p) * total;
}

}  // namespace nrp::testing
