// Runs every acceptance criterion and prints one line per criterion.
#include <iostream>
#include <string>

#include "granlab/acceptance.hpp"

int main(int argc, char** argv) {
  std::string level = "full";
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--level") level = argv[i + 1];
  }
  return granlab::cmd_verify(granlab::verify_level_from_string(level), std::cout);
}
