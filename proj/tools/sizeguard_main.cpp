#include "sizeguard/cli.hpp"

int main(int argc, char** argv) { return sizeguard::cli_main(argc, argv); }
