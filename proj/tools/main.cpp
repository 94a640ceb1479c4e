#include "vdforge/cli.hpp"

int main(int argc, char** argv) { return vdforge::cli::dispatch(argc, argv); }
