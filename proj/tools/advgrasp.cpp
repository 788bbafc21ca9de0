#include "advgrasp/cli.hpp"

int main(int argc, char** argv) { return advgrasp::cli::run(argc, argv); }
