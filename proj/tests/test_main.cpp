#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <iostream>

#include "tsqr/qreg.hpp"

// Every solve in every suite must pass the optimality certificate.
int main(int argc, char** argv) {
  doctest::Context ctx(argc, argv);
  const int rc = ctx.run();
  if (ctx.shouldExit()) return rc;
  const auto st = tsqr::qreg::solve_stats();
  std::cout << "solves: " << st.solves << ", certificate failures: " << st.certificate_failures
            << "\n";
  if (st.certificate_failures != 0) return 1;
  return rc;
}
