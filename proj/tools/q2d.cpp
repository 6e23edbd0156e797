#include "q2d/cli.hpp"

int main(int argc, char** argv) { return q2d::cli::dispatch(argc, argv); }
