#include "kdetector/cli.hpp"

int main(int argc, char** argv) { return kdetector::cli::run(argc, argv); }
