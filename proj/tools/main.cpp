#include "povmap/cli.hpp"

int main(int argc, char** argv) { return povmap::run_cli(argc, argv); }
