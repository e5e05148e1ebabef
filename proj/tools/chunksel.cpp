#include <iostream>

#include "chunksel/cli.hpp"

int main(int argc, char** argv) {
  chunksel::install_signal_handlers();
  return chunksel::run_cli(argc, argv, std::cout, std::cerr);
}
