#include "cli.hpp"

int main(int argc, char** argv) { return samct::cli::run(argc, argv); }
