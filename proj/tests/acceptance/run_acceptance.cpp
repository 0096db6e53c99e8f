#include <iostream>

#include "acceptance.hpp"

int main() {
  using namespace mmvlab::acceptance;
  bool all = true;
  run_all(SuiteOptions{}, [&](const CriterionResult& r) {
    std::cout << summary_line(r) << std::endl;
    for (const auto& c : r.checks)
      if (c.rfind("PASS", 0) != 0) std::cout << "    " << c << '\n';
    all = all && r.pass;
  });
  return all ? 0 : 1;
}
