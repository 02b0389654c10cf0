#include <string>
#include <vector>

#include "seqop/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return seqop::run_cli(args);
}
