#include "funad/cli.hpp"

int main(int argc, char** argv) { return funad::cli::run(argc, argv); }
