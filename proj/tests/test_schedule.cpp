#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "treeg/rng.hpp"
#include "treeg/schedule.hpp"

using namespace treeg;

TEST_CASE("linear-alphabar endpoints and midpoint at T=2") {
  const auto s = build_schedule(ScheduleKind::kLinearAlphaBar, 2);
  CHECK(s.alpha_bar(0) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.alpha_bar(1) == doctest::Approx(0.50005).epsilon(1e-12));
  CHECK(s.alpha_bar(2) == 1.0);
}

TEST_CASE("linear-alphabar grid size and monotonicity at T=1000") {
  const auto s = build_schedule(ScheduleKind::kLinearAlphaBar, 1000);
  CHECK(s.steps() == 1000);
  for (int i = 0; i < 1000; ++i) CHECK(s.alpha_bar(i) < s.alpha_bar(i + 1));
  CHECK(s.alpha_bar(0) <= 1e-4);
  CHECK(s.alpha_bar(1000) == 1.0);
}

TEST_CASE("cosine schedule matches the frozen closed-form baseline at T=100") {
  const auto s = build_schedule(ScheduleKind::kCosine, 100);
  // Values evaluated once from the squared-cosine ramp with offset 0.008 and
  // pinned as the regression baseline.
  const struct {
    int index;
    double alpha_bar;
  } golden[] = {
      {1, 0.00024285722793500563}, {10, 0.024091724140085855}, {25, 0.14427210238573571},
      {50, 0.49384359044063771},   {75, 0.84701216132690473},  {90, 0.97209273711396917},
      {99, 0.99936871840165848},
  };
  for (const auto& g : golden)
    CHECK(s.alpha_bar(g.index) == doctest::Approx(g.alpha_bar).epsilon(1e-12));
  CHECK(s.alpha_bar(100) == 1.0);
  for (int i = 0; i < 100; ++i) {
    CHECK(s.alpha_bar(i) > 0.0);
    CHECK(s.alpha_bar(i) < s.alpha_bar(i + 1));
  }
  CHECK(s.alpha_bar(0) <= 1e-4);
}

TEST_CASE("build_schedule rejects T < 2") {
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kLinearAlphaBar, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(ScheduleKind::kCosine, 0), std::invalid_argument);
}

TEST_CASE("degenerate flat pair gives the identity step") {
  const auto c = step_coeffs_from_alpha_bars(0.3, 0.3);
  CHECK(c.alpha == 1.0);
  CHECK(c.sigma == 0.0);
  CHECK(c.c1 == 1.0);
  CHECK(c.c2 == 0.0);
  CHECK(c.beta == 0.0);
}

TEST_CASE("step coefficients by direct substitution at (0.25, 0.5)") {
  const auto c = step_coeffs_from_alpha_bars(0.25, 0.5);
  CHECK(c.alpha == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(c.sigma == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
  // c1 = sqrt(0.5) * 0.5 / 0.75, c2 = sqrt(0.5) * 0.5 / 0.75
  CHECK(c.c1 == doctest::Approx(std::sqrt(0.5) * 0.5 / 0.75).epsilon(1e-15));
  CHECK(c.c2 == doctest::Approx(std::sqrt(0.5) * 0.5 / 0.75).epsilon(1e-15));
  CHECK(c.c1 * 0.5 + c.c2 == doctest::Approx(std::sqrt(0.5)).epsilon(1e-13));
  // beta = (1 - 0.5) * (1 - 0.5) / (1 - 0.25)
  CHECK(c.beta == doctest::Approx(0.25 / 0.75).epsilon(1e-15));
}

TEST_CASE("mean-consistency identity over random pairs") {
  RngStream rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    double a = rng.uniform_pos();
    double b = rng.uniform_pos();
    if (a > b) std::swap(a, b);
    if (a == b) continue;
    const auto c = step_coeffs_from_alpha_bars(a, b);
    const double lhs = c.c1 * std::sqrt(a) + c.c2;
    CHECK(std::abs(lhs - std::sqrt(b)) / std::sqrt(b) <= 1e-12);
    CHECK(c.beta <= 1.0 - c.alpha);
    CHECK(c.beta >= 0.0);
    CHECK(c.sigma >= 0.0);
    CHECK(c.alpha > 0.0);
    CHECK(c.alpha <= 1.0);
  }
}

TEST_CASE("step_coeffs validates the grid and rejects t = 1") {
  const auto s = build_schedule(ScheduleKind::kLinearAlphaBar, 10);
  CHECK_THROWS_AS(step_coeffs(s, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(step_coeffs(s, 0.05), std::invalid_argument);  // off-grid
  const auto c = step_coeffs(s, 0.5);
  CHECK(c.alpha == doctest::Approx(s.alpha_bar(5) / s.alpha_bar(6)).epsilon(1e-15));
}

TEST_CASE("step_coeffs is deterministic") {
  const auto s = build_schedule(ScheduleKind::kCosine, 64);
  const auto a = step_coeffs(s, 0.25);
  const auto b = step_coeffs(s, 0.25);
  CHECK(a.alpha == b.alpha);
  CHECK(a.sigma == b.sigma);
  CHECK(a.c1 == b.c1);
  CHECK(a.c2 == b.c2);
  CHECK(a.beta == b.beta);
}
