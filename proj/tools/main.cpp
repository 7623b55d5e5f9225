#include "cli.hpp"

int main(int argc, char** argv) { return synthmr::cli::run(argc, argv); }
