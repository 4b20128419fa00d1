// Apache License, Version 2.0, refer to LICENSE.txt

#include "immgp/cli.hpp"

int main(int argc, char** argv) { return immgp::cli::main(argc, argv); }
