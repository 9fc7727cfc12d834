#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return attn_atlas::cli::run(argc, argv, std::cout, std::cerr);
}
