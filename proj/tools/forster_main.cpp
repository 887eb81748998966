#include "forster/cli.hpp"

int main(int argc, char** argv) { return forster::cli::run(argc, argv); }
