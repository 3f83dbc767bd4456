#include "depthrover/cli.hpp"

int main(int argc, char** argv) { return depthrover::run_cli(argc, argv); }
