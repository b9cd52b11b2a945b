#include "warpex/cli.hpp"

int main(int argc, char** argv) { return warpex::run_cli(argc, argv); }
