#include "platoon/cli.hpp"

int main(int argc, char** argv) { return platoon::run_cli(argc, argv); }
