#include "sparsespec/cli.hpp"

int main(int argc, char** argv) { return sparsespec::cli::run(argc, argv); }
