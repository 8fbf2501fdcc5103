#include "snmt/cli.hpp"

int main(int argc, char** argv) { return snmt::cli::dispatch(argc, argv); }
