#include "facediff/cli.hpp"

int main(int argc, char** argv) { return facediff::cli::run(argc, argv); }
