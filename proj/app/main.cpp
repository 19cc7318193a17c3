#include "spinforge/cli.hpp"

int main(int argc, char** argv) { return spinforge::run_cli(argc, argv); }
