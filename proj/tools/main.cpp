#include "ihid/cli.hpp"

int main(int argc, char** argv) { return ihid::run_cli(argc, argv); }
