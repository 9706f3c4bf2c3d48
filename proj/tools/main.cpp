#include "cgar/cli.hpp"

int main(int argc, char** argv) { return cgar::run_cli(argc, argv); }
