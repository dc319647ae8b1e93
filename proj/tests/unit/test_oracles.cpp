#include <iostream>

#include "testing.hpp"

using namespace cae;

namespace {

void report(const testing::SuiteResult& r) {
  for (const auto& f : r.failures) std::cerr << f << "\n";
}

}  // namespace

TEST_CASE("loss equations match the brute-force recomputation") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto r = testing::loss_oracle_suite(seed);
    report(r);
    CHECK(r.pass);
    CHECK(r.lines.size() > 20);
  }
}

TEST_CASE("analytic gradients match central differences") {
  const auto r = testing::gradient_suite(5);
  report(r);
  CHECK(r.pass);
}

TEST_CASE("adaptive normalization injects the requested statistics") {
  const auto r = testing::adain_oracle_suite(3);
  report(r);
  CHECK(r.pass);
}
