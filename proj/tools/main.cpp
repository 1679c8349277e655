#include "robust_design/cli.hpp"

int main(int argc, char** argv) { return robust_design::run_cli(argc, argv); }
