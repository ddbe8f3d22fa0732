#include "jmest/cli.hpp"

int main(int argc, char** argv) { return jmest::cli::run(argc, argv); }
