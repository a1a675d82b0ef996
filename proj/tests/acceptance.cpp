// Runs every acceptance criterion and prints one PASS/FAIL line for each.
#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "aes/verify.hpp"

int main(int argc, char** argv) {
  const std::filesystem::path scratch =
      argc > 1 ? std::filesystem::path(argv[1]) : std::filesystem::temp_directory_path() / "aes-acceptance";
  const auto results = aes::verify::run_all(aes::verify::criteria(scratch), std::cout);
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.passed ? 0 : 1;
  std::cout << (results.size() - failed) << "/" << results.size() << " criteria passed\n";
  return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
