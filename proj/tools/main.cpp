#include "commands.hpp"

int main(int argc, char** argv) { return glassesim::cli::run(argc, argv); }
