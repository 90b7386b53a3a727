#include "commands.hpp"

int main(int argc, char** argv) { return advchar::cli::run(argc, argv); }
