#include "cli.hpp"

int main(int argc, char** argv) { return preqmdl::cli::run(argc, argv); }
