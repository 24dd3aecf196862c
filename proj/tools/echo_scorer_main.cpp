// Native echo adapter speaking nrp-scorer/1 on stdin/stdout.

#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "nrp/scorer_protocol.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Deterministic echo scorer for the nrp-scorer/1 protocol"};
    int max_connections = 0;
    app.add_option("--max-connections", max_connections, "Declared connection limit (0 = none)")->check(CLI::NonNegativeNumber);
    CLI11_PARSE(app, argc, argv);

    std::ios::sync_with_stdio(false);
    std::cin.tie(nullptr);
    nrp::serve_echo(std::cin, std::cout, max_connections > 0 ? std::optional<int>(max_connections) : std::nullopt);
    return 0;
}
