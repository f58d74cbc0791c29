#include "cli.hpp"

int main(int argc, char **argv) { return aslmrf::cli::run(argc, argv); }
