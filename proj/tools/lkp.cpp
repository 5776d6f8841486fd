#include "lkp/cli.hpp"

int main(int argc, char** argv) { return lkp::cli::run(argc, argv); }
