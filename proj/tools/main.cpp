#include "cli.hpp"

int main(int argc, char** argv) { return metashift::cli::dispatch(argc, argv); }
