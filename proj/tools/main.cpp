#include "commands.hpp"

int main(int argc, char** argv) { return diffseg::cli::run(argc, argv); }
