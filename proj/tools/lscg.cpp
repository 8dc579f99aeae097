#include "cli.hpp"

int main(int argc, char** argv) { return lscg::cli::run(argc, argv); }
