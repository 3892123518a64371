#include "pfm/cli.hpp"

int main(int argc, char** argv) { return pfm::run_cli(argc, argv); }
