#include "geoconc/cli.hpp"

int main(int argc, char** argv) { return geoconc::cli::run(argc, argv); }
