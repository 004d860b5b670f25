#include "roofkit/cli.hpp"

int main(int argc, char** argv) { return roofkit::cli::run(argc, argv); }
