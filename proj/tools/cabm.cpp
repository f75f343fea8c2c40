#include "cabm/cli.hpp"

int main(int argc, char** argv) { return cabm::run_cli(argc, argv); }
