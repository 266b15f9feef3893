#include "cli.hpp"

int main(int argc, char** argv) { return docnmt::cli::run(argc, argv); }
