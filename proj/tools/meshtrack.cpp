#include "meshtrack/cli.hpp"

int main(int argc, char** argv) { return meshtrack::run(argc, argv); }
