#include <iostream>

#include "ofet/cli.hpp"

int main(int argc, char** argv) {
  return ofet::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
