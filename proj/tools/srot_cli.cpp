#include "srot/cli.hpp"

int main(int argc, char** argv) { return srot::cli_main(argc, argv); }
