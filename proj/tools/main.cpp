#include "quiltsurv/cli.hpp"

int main(int argc, char** argv) { return quiltsurv::cli::run(argc, argv); }
