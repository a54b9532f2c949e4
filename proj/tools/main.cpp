#include <csignal>
#include <iostream>

#include "cli.h"

namespace {

extern "C" void on_signal(int) { viso::cli::request_interrupt(); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  return viso::cli::run_command({argv + 1, argv + argc}, std::cout, std::cerr);
}
