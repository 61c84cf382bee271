#include "cvfcn/cli.hpp"

int main(int argc, char** argv) { return cvfcn::cli::run(argc, argv); }
