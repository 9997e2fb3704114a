#include <cmath>

#include "doctest.h"
#include "ppsm/adversary.hpp"
#include "ppsm/rng.hpp"

using namespace ppsm;
using namespace ppsm::adversary;
using doctest::Approx;

namespace {

household::Trace labeled(std::vector<double> x, std::vector<std::size_t> h) {
  household::Trace t;
  for (std::size_t i = 0; i < x.size(); ++i) t.slots.push_back(i);
  t.x_watts = std::move(x);
  t.h_labels = std::move(h);
  t.alphabet = {"OFF", "ON"};
  return t;
}

SignatureDb kettle_db(double tol = 250.0) { return SignatureDb{{{"ON", 1500.0, -1500.0, tol}}}; }

}  // namespace

TEST_CASE("extract_events") {
  CHECK(extract_events(std::vector<double>(10, 700.0), 250.0).empty());
  const auto e = extract_events(std::vector<double>{0, 0, 1500, 1500, 0}, 250.0);
  REQUIRE(e.size() == 2);
  CHECK(e[0].slot == 2);
  CHECK(e[0].delta == 1500.0);
  CHECK(e[1].slot == 4);
  CHECK(e[1].delta == -1500.0);
  const auto ramp = extract_events(std::vector<double>{0, 500, 1000}, 250.0);
  REQUIRE(ramp.size() == 2);
  CHECK(ramp[0].delta == 500.0);
  CHECK(ramp[1].delta == 500.0);
  CHECK_THROWS(extract_events(std::vector<double>{0, 1}, 0.0));
}

TEST_CASE("property: extract_events is shift invariant") {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> y(40), z(40);
    const double c = std::round(10.0 * rng.uniform() - 5.0) * 500.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
      y[k] = std::floor(rng.uniform() * 6.0) * 500.0;
      z[k] = y[k] + c;
    }
    const auto a = extract_events(y, 250.0);
    const auto b = extract_events(z, 250.0);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      CHECK(a[k].slot == b[k].slot);
      CHECK(a[k].delta == b[k].delta);
    }
  }
}

TEST_CASE("build_signatures") {
  SUBCASE("noiseless kettle") {
    const auto db = build_signatures(labeled({0, 1500, 1500, 0, 0, 1500, 0}, {0, 1, 1, 0, 0, 1, 0}),
                                     500.0, 250.0);
    REQUIRE(db.appliances.size() == 1);
    CHECK(db.appliances[0].name == "ON");
    CHECK(db.appliances[0].on_delta_mean == 1500.0);
    CHECK(db.appliances[0].off_delta_mean == -1500.0);
    CHECK(db.appliances[0].tolerance == 250.0);
  }
  SUBCASE("mixed emission levels average the observed ON edges") {
    const auto model = household::reference_model();
    // Hand average of the ON edges in a generated sample of at least 100 events.
    auto t = household::concatenate(household::sample_days(model, 90, 60, 5));
    t.alphabet = {"OFF", "ON"};
    const auto& h = *t.h_labels;
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (std::size_t k = 1; k < h.size(); ++k)
      if (h[k] == 1 && h[k - 1] == 0) {
        const double d = t.x_watts[k] - t.x_watts[k - 1];
        sum += d;
        sq += d * d;
        n += 1.0;
      }
    REQUIRE(n >= 100.0);
    const auto db = build_signatures(t, 500.0, 250.0);
    CHECK(db.appliances[0].on_delta_mean == Approx(sum / n).epsilon(1e-12));
    // Population mean of the ON emission over {500, 1000, 1500}.
    const double expected = (500 * 0.17 + 1000 * 0.14 + 1500 * 0.17) / 0.48;
    CHECK(std::abs(db.appliances[0].on_delta_mean - expected) < 150.0);
    CHECK(db.appliances[0].tolerance >= 250.0);
  }
  SUBCASE("missing transitions name the appliance") {
    try {
      build_signatures(labeled({0, 0, 0}, {0, 0, 0}), 500.0, 250.0);
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("'ON'") != std::string::npos);
    }
    CHECK_THROWS_AS(build_signatures(labeled({0, 1500, 1500}, {0, 1, 1}), 500.0, 250.0),
                    std::invalid_argument);
  }
}

TEST_CASE("match_and_detect") {
  SUBCASE("clean pulse") {
    const auto ev = extract_events(std::vector<double>{0, 0, 1500, 1500, 0, 0}, 250.0);
    const auto d = match_and_detect(ev, kettle_db(), 6);
    REQUIRE(d.intervals.size() == 1);
    CHECK(d.intervals[0].start == 2);
    CHECK(d.intervals[0].end == 4);
  }
  SUBCASE("out of tolerance is discarded") {
    const std::vector<EdgeEvent> ev{{3, 700.0}};
    const auto d = match_and_detect(ev, kettle_db(), 10);
    CHECK(d.intervals.empty());
    CHECK(d.assignments[0].appliance == -1);
  }
  SUBCASE("nearest mean wins, ties to the lower index") {
    SignatureDb db{{{"kettle", 1500.0, -1500.0, 250.0}, {"heater", 1600.0, -1600.0, 250.0}}};
    const std::vector<EdgeEvent> ev{{1, 1540.0}, {2, 1550.0}};
    const auto d = match_and_detect(ev, db, 5);
    CHECK(d.assignments[0].appliance == 0);
    CHECK(d.assignments[1].appliance == 0);
    const std::vector<EdgeEvent> far{{1, 1590.0}};
    CHECK(match_and_detect(far, db, 5).assignments[0].appliance == 1);
  }
  SUBCASE("unclosed interval ends with the trace") {
    const std::vector<EdgeEvent> ev{{4, 1500.0}};
    const auto d = match_and_detect(ev, kettle_db(), 9);
    REQUIRE(d.intervals.size() == 1);
    CHECK(d.intervals[0].end == 9);
  }
}

TEST_CASE("score and f_score") {
  const std::vector<Interval> truth{{0, 5, 8}};
  CHECK(score(truth, truth, 1).f_score == 1.0);
  const std::vector<Interval> det{{0, 6, 8}, {0, 20, 22}};
  const std::vector<Interval> truth2{{0, 5, 8}, {0, 40, 41}};
  const auto r = score(det, truth2, 1);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.f_score == 0.5);
  const std::vector<Interval> none;
  const std::vector<Interval> three{{0, 1, 2}, {0, 5, 6}, {0, 9, 10}};
  const auto miss = score(none, three, 1);
  CHECK(miss.fn == 3);
  CHECK(miss.f_score == 0.0);
  CHECK(score(none, none, 1).f_score == 1.0);
  // slot tolerance
  const std::vector<Interval> late{{0, 7, 8}};
  CHECK(score(late, truth, 1).tp == 0);
  CHECK(score(late, truth, 2).tp == 1);
}

TEST_CASE("property: the F-score equals the harmonic mean of precision and recall") {
  Rng rng(21);
  for (int i = 0; i < 1000; ++i) {
    const auto tp = static_cast<std::size_t>(rng.uniform() * 50);
    const auto fp = static_cast<std::size_t>(rng.uniform() * 50);
    const auto fn = static_cast<std::size_t>(rng.uniform() * 50);
    const double f = f_score(tp, fp, fn);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(f_score(tp, fp + 1, fn) <= f);
    CHECK(f_score(tp, fp, fn + 1) <= f);
    if (tp > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
      CHECK(f == Approx(2.0 * precision * recall / (precision + recall)).epsilon(1e-12));
    }
  }
}

TEST_CASE("property: a constant output hides every event") {
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> y(30, 1000.0);
    std::vector<std::size_t> h(30, 0);
    for (auto& v : h) v = rng.uniform() < 0.3;
    const auto det = match_and_detect(extract_events(y, 250.0), kettle_db(800.0), y.size());
    const auto r = score(det.intervals, truth_intervals(h), 1);
    CHECK(r.tp == 0);
  }
}

TEST_CASE("truth intervals and json") {
  const std::vector<std::size_t> h{0, 1, 1, 0, 1, 0, 0, 1};
  const auto t = truth_intervals(h);
  REQUIRE(t.size() == 3);
  CHECK(t[0].start == 1);
  CHECK(t[0].end == 3);
  CHECK(t[2].end == 8);
  const auto db = kettle_db();
  CHECK(signatures_from_json(to_json(db)).appliances[0].tolerance == 250.0);
  CHECK(to_json(score(t, t, 1))["f_score"] == 1.0);
}
