#include "qpl/cli.hpp"

int main(int argc, char** argv) { return qpl::cli::run_cli(argc, argv); }
