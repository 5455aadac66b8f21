#include "cli.hpp"

int main(int argc, char** argv) { return gedlab::cli::dispatch(argc, argv); }
