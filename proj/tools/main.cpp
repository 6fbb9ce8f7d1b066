#include <string>
#include <vector>

#include "mtard/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mtard::cli::run(args);
}
