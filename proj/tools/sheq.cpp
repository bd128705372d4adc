#include <string>
#include <vector>

#include "sheq/io.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sheq::run_cli(args);
}
