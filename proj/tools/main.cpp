#include "spixel_ssc/cli.hpp"
#include "spixel_ssc/common.hpp"

#include <iostream>

int main(int argc, char** argv) {
  spixel_ssc::configure_threads_from_env();
  return spixel_ssc::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
