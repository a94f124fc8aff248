#include <iostream>
#include <string>
#include <vector>

#include "venuerank/gateway.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return venuerank::cli_dispatch(args, std::cout, std::cerr);
}
