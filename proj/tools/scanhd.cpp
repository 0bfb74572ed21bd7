#include <csignal>

#include "scanhd/cli.hpp"

int main(int argc, char** argv) {
  // A subprocess agent that exits early must surface as an error, not a signal.
  std::signal(SIGPIPE, SIG_IGN);
  return scanhd::cli::run(argc, argv);
}
