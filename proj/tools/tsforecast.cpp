#include "tsf/cli.hpp"

int main(int argc, char** argv) { return tsf::run_cli(argc, argv); }
