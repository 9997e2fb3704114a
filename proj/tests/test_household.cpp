#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "ppsm/error.hpp"
#include "ppsm/household.hpp"
#include "ppsm/rng.hpp"

using namespace ppsm;
using namespace ppsm::household;
using doctest::Approx;

namespace {
const std::filesystem::path kData = PPSM_TEST_DATA_DIR;

Trace labeled(std::vector<double> watts, std::vector<std::size_t> labels) {
  Trace t;
  for (std::size_t i = 0; i < watts.size(); ++i) t.slots.push_back(i);
  t.x_watts = std::move(watts);
  t.h_labels = std::move(labels);
  return t;
}
}  // namespace

TEST_CASE("quantize_power") {
  CHECK(quantize_power(0.0, 500.0, 1700.0) == 0.0);
  CHECK(quantize_power(1700.0, 500.0, 1700.0) == 1500.0);
  CHECK(PowerGrid{500.0, 1700.0}.size() == 4);
  CHECK(quantize_power(749.0, 500.0, 1700.0) == 500.0);
  CHECK(quantize_power(750.0, 500.0, 1700.0) == 1000.0);
  CHECK(quantize_power(99999.0, 500.0, 1700.0) == 1500.0);
  CHECK_THROWS_AS(quantize_power(-1.0, 500.0, 1700.0), std::invalid_argument);
}

TEST_CASE("property: quantize_power is idempotent and monotone") {
  Rng rng(3);
  for (int i = 0; i < 5000; ++i) {
    const double q = 10.0 + 990.0 * rng.uniform();
    const double xmax = q * (1.0 + 10.0 * rng.uniform());
    const double a = 1.2 * xmax * rng.uniform();
    const double b = 1.2 * xmax * rng.uniform();
    const double qa = quantize_power(a, q, xmax);
    CHECK(quantize_power(qa, q, xmax) == qa);
    if (a <= b) CHECK(qa <= quantize_power(b, q, xmax));
  }
}

TEST_CASE("reference model renormalizes the printed tables") {
  const auto m = reference_model();
  CHECK(m.transition(0, 0) == Approx(0.98));
  CHECK(m.transition(0, 1) == Approx(0.34 / 0.99));
  CHECK(m.transition(1, 1) == Approx(0.65 / 0.99));
  CHECK(m.emission(1, 1) == Approx(0.17 / 0.48));
  CHECK(m.emission(2, 1) == Approx(0.14 / 0.48));
  CHECK(m.emission(0, 0) == 1.0);
  CHECK_NOTHROW(m.validate());

  CHECK_THROWS_AS(model_from_tables({0.5, 0.5}, Matrix{{0.1, 0.5}, {0.1, 0.5}},
                                    Matrix{{0.5, 0.5}, {0.5, 0.5}}, PowerGrid{500, 500}),
                  std::invalid_argument);
}

TEST_CASE("estimate_model") {
  const PowerGrid grid{500.0, 1700.0};
  SUBCASE("degenerate always-off data") {
    const auto m = estimate_model(labeled(std::vector<double>(100, 0.0),
                                          std::vector<std::size_t>(100, 0)),
                                  grid, 2);
    CHECK(m.transition(0, 0) == Approx(100.0 / 101.0));
    CHECK(m.transition(1, 0) == Approx(1.0 / 101.0));
    CHECK(m.emission(0, 0) == Approx(101.0 / 104.0));
    CHECK(m.transition(0, 1) == Approx(0.5));  // unseen: pseudocounts only
    CHECK_NOTHROW(m.validate());
  }
  SUBCASE("two slots OFF then ON") {
    // Hand bigram count with Laplace 1: from OFF {OFF: 0+1, ON: 1+1}; from ON {1, 1}.
    const auto m = estimate_model(labeled({0.0, 1500.0}, {0, 1}), grid, 2);
    CHECK(m.transition(0, 0) == Approx(1.0 / 3.0));
    CHECK(m.transition(1, 0) == Approx(2.0 / 3.0));
    CHECK(m.transition(0, 1) == Approx(0.5));
    CHECK(m.transition(1, 1) == Approx(0.5));
  }
  SUBCASE("30 days of kettle data recover the chain") {
    const auto truth = reference_model();
    const auto days = sample_days(truth, 30, 60, 2024);
    const auto all = concatenate(days);
    const auto m = estimate_model(all, grid, 2, 60);
    // The OFF column is estimated from ~1700 transitions.
    CHECK(std::abs(m.transition(0, 0) - truth.transition(0, 0)) <= 0.05);
    CHECK(std::abs(m.transition(1, 0) - truth.transition(1, 0)) <= 0.05);
    // The ON column rests on only a few dozen transitions; use a 3-sigma
    // binomial band for the count actually observed.
    double from_on = 0.0;
    const auto& h = *all.h_labels;
    for (std::size_t k = 1; k < h.size(); ++k)
      if (k % 60 != 0 && h[k - 1] == 1) from_on += 1.0;
    const double p = truth.transition(1, 1);
    const double band = 3.0 * std::sqrt(p * (1.0 - p) / from_on);
    CHECK(std::abs(m.transition(1, 1) - p) <= band);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(estimate_model(labeled({}, {}), grid, 2), std::invalid_argument);
    CHECK_THROWS_AS(estimate_model(labeled({0.0, 0.0, 0.0}, {0, 2, 1}), grid, 2),
                    std::invalid_argument);
  }
}

TEST_CASE("property: sample then estimate round trip on 1e5 slots") {
  const auto truth = reference_model();
  const auto t = sample_trace(truth, 100000, 77);
  const auto m = estimate_model(t, truth.grid, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(std::abs(m.transition(i, j) - truth.transition(i, j)) <= 0.02);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t h = 0; h < 2; ++h)
      CHECK(std::abs(m.emission(x, h) - truth.emission(x, h)) <= 0.02);
}

TEST_CASE("sample_trace") {
  SUBCASE("identity chain from a certain prior stays put") {
    const auto m = model_from_tables({1.0, 0.0}, Matrix{{1.0, 0.0}, {0.0, 1.0}},
                                     Matrix{{1.0, 0.0}, {0.0, 1.0}}, PowerGrid{500.0, 500.0});
    const auto t = sample_trace(m, 200, 5);
    for (auto h : *t.h_labels) CHECK(h == 0);
  }
  SUBCASE("ON frequency matches the stationary distribution") {
    const auto m = reference_model();
    const auto t = sample_trace(m, 60 * 30, 9);
    double on = 0.0;
    for (auto h : *t.h_labels) on += h == 1;
    const double stationary = m.transition(1, 0) / (m.transition(1, 0) + m.transition(0, 1));
    CHECK(std::abs(on / t.size() - stationary) <= 0.02);
  }
  SUBCASE("deterministic under a fixed seed") {
    const auto m = reference_model();
    const auto a = sample_trace(m, 500, 42);
    const auto b = sample_trace(m, 500, 42);
    CHECK(a.x_watts == b.x_watts);
    CHECK(*a.h_labels == *b.h_labels);
  }
}

TEST_CASE("load_trace") {
  const auto three = load_trace(kData / "three_rows.csv");
  CHECK(three.size() == 3);
  CHECK(three.x_watts[2] == 1200.0);
  CHECK_FALSE(three.h_labels.has_value());

  const auto onoff = load_trace(kData / "labeled_onoff.csv");
  REQUIRE(onoff.h_labels.has_value());
  CHECK(*onoff.h_labels == std::vector<std::size_t>{0, 1, 1, 0});
  CHECK(onoff.alphabet == std::vector<std::string>{"OFF", "ON"});
  CHECK(onoff.x_watts[1] == 1510.5);  // raw watts preserved

  try {
    load_trace(kData / "bad_row.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
  }
  try {
    load_trace(kData / "negative.csv");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("trace and model files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "ppsm_household_test";
  std::filesystem::create_directories(dir);
  const auto m = reference_model();
  const auto t = sample_trace(m, 50, 1);
  save_trace(dir / "t.csv", t);
  const auto back = load_trace(dir / "t.csv");
  CHECK(back.x_watts == t.x_watts);
  CHECK(*back.h_labels == *t.h_labels);

  save_model(dir / "m.json", m);
  CHECK(load_model(dir / "m.json").digest() == m.digest());
}
