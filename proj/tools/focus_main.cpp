#include "focus/cli.hpp"

int main(int argc, char** argv) { return focus::cli_main(argc, argv); }
