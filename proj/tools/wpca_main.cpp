#include <string>
#include <vector>

#include "wpca/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return wpca::dispatch(std::move(args));
}
