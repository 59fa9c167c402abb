#include "mcdban/cli.hpp"

int main(int argc, char** argv) { return mcdban::cli::run(argc, argv); }
