#include "horoforge/cli.hpp"

int main(int argc, char** argv) { return horoforge::run(argc, argv); }
