#include "commands.hpp"

int main(int argc, char** argv) { return evovit::cli::run_cli(argc, argv); }
