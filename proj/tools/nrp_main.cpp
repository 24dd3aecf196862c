#include "cli.hpp"

int main(int argc, char** argv) { return nrp::cli::run(argc, argv); }
