#include "cli.hpp"

int main(int argc, char** argv) { return dmcl::cli::run(argc, argv); }
