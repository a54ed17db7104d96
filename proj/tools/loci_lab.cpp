#include "loci/cli.hpp"

int main(int argc, char** argv) { return loci::cli::main_entry(argc, argv); }
