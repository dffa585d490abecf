#include "cli.hpp"

int main(int argc, char** argv) { return hetreg::cli::main_entry(argc, argv); }
