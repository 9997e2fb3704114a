#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "ppsm/error.hpp"
#include "ppsm/rng.hpp"
#include "ppsm/synthesis.hpp"

using namespace ppsm;
using namespace ppsm::synthesis;
using doctest::Approx;

namespace {

household::HouseholdModel tiny_model() {
  return household::model_from_tables({0.7, 0.3}, Matrix{{0.9, 0.3}, {0.1, 0.7}},
                                      Matrix{{0.8, 0.25}, {0.2, 0.75}},
                                      household::PowerGrid{500.0, 500.0});
}

// 20 Wh store on a 10 Wh grid: charging at 500 W for one minute moves about
// one grid step.
ess::EssParams tiny_ess() {
  auto p = ess::reference_params();
  p.z_max = 20.0;
  return p;
}

Problem tiny_problem(std::size_t horizon, double d_min = 0.0, double d_max = 500.0,
                     inference::CostMatrix costs = inference::CostMatrix::zero_one(2)) {
  GridConfig g;
  g.d_grid_min = d_min;
  g.d_grid_max = d_max;
  g.e = 10.0;
  g.belief_resolution = 3;
  g.horizon = horizon;
  return Problem(tiny_model(), tiny_ess(), costs, g);
}

Problem table_problem(std::size_t horizon) {
  GridConfig g;
  g.horizon = horizon;
  return Problem(household::reference_model(), ess::reference_params(),
                 inference::CostMatrix::zero_one(2), g);
}

OptimizerConfig deterministic_only() {
  OptimizerConfig c;
  c.starts = 0;
  return c;
}

// Concave test objective: a fixed linear term plus min of two linear forms.
class ToyObjective final : public StageObjective {
 public:
  ToyObjective(Matrix lin, Matrix a, Matrix b) : lin_(lin), a_(a), b_(b) {}
  std::size_t rows() const override { return lin_.rows(); }
  std::size_t cols() const override { return lin_.cols(); }
  bool admissible(std::size_t, std::size_t) const override { return true; }
  double value(const Matrix& mu) const override {
    return dot(lin_, mu) + std::min(dot(a_, mu), dot(b_, mu));
  }
  void supergradient(const Matrix& mu, Matrix& g) const override {
    const Matrix& active = dot(a_, mu) <= dot(b_, mu) ? a_ : b_;
    g = lin_;
    for (std::size_t i = 0; i < g.data().size(); ++i) g.data()[i] += active.data()[i];
  }

 private:
  static double dot(const Matrix& m, const Matrix& mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.data().size(); ++i) s += m.data()[i] * mu.data()[i];
    return s;
  }
  Matrix lin_, a_, b_;
};

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform();
  return m;
}

}  // namespace

TEST_CASE("grids and cardinalities") {
  const auto ys = action_grid(household::PowerGrid{500.0, 1700.0}, -1000.0, 1000.0);
  CHECK(ys.size() == 8);
  CHECK(ys.front() == -1000.0);
  CHECK(ys.back() == 2500.0);
  CHECK(EnergyGrid{5.0, 1200.0}.size() == 241);
  CHECK(EnergyGrid{1200.0, 1200.0}.size() == 2);
  CHECK(EnergyGrid{5.0, 1200.0}.project(602.4) == 120);
  CHECK(EnergyGrid{5.0, 1200.0}.project(-1.0) == 0);
  CHECK(EnergyGrid{5.0, 1200.0}.project(1300.0) == 240);
  CHECK_THROWS(action_grid(household::PowerGrid{500.0, 1700.0}, -700.0, 1000.0));

  const auto p = table_problem(1);
  CHECK(p.obs_count() == 4);
  CHECK(p.action_count() == 8);
  CHECK(p.energy().size() == 241);
  CHECK(p.beliefs().size() == 11);
  // The current limit allows about -875 W; snapped inward that is -500 W.
  CHECK(p.envelope(120).d_lo == -500.0);
  CHECK(p.envelope(120).d_hi == 1000.0);
  CHECK(p.envelope(0).d_lo == 0.0);
  CHECK(p.envelope(240).d_hi == 0.0);
}

TEST_CASE("project_to_simplex") {
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> v(5);
    for (double& x : v) x = 4.0 * rng.uniform() - 2.0;
    std::vector<std::uint8_t> mask(5);
    for (auto& m : mask) m = rng.uniform() < 0.7;
    mask[static_cast<std::size_t>(rng.uniform() * 5)] = 1;
    auto w = v;
    project_to_simplex(w, mask);
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(w[j] >= 0.0);
      if (!mask[j]) CHECK(w[j] == 0.0);
      s += w[j];
    }
    CHECK(s == Approx(1.0).epsilon(1e-12));
    // Projection is idempotent.
    auto again = w;
    project_to_simplex(again, mask);
    for (std::size_t j = 0; j < 5; ++j) CHECK(again[j] == Approx(w[j]).epsilon(1e-12));
  }
}

TEST_CASE("optimize_stage") {
  SUBCASE("a single output is the unique kernel") {
    const ToyObjective obj(Matrix{{1.0}, {2.0}}, Matrix{{0.0}, {0.0}}, Matrix{{1.0}, {1.0}});
    const auto s = optimize_stage(obj, {}, 1);
    CHECK(s.kernel == Matrix{{1.0}, {1.0}});
    CHECK(s.value == 3.0);
  }
  SUBCASE("linear objective: deterministic optimum found exactly") {
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
      const auto lin = random_matrix(rng, 3, 4);
      const ToyObjective obj(lin, Matrix(3, 4, 0.0), Matrix(3, 4, 0.0));
      double want = 0.0;
      for (std::size_t x = 0; x < 3; ++x) {
        double m = 0.0;
        for (std::size_t y = 0; y < 4; ++y) m = std::max(m, lin(x, y));
        want += m;
      }
      const auto s = optimize_stage(obj, {}, static_cast<std::uint64_t>(i));
      CHECK(s.value == Approx(want).epsilon(1e-12));
      CHECK_FALSE(s.stochastic);
    }
  }
  SUBCASE("concave objective: stochastic search matches a 0.1-step kernel grid") {
    Rng rng(99);
    // Simplex points of one row over three outputs at step 0.1.
    std::vector<std::array<double, 3>> row_grid;
    for (int a = 0; a <= 10; ++a)
      for (int b = 0; a + b <= 10; ++b) row_grid.push_back({a / 10.0, b / 10.0, (10 - a - b) / 10.0});
    for (int i = 0; i < 20; ++i) {
      const ToyObjective obj(random_matrix(rng, 2, 3), random_matrix(rng, 2, 3),
                             random_matrix(rng, 2, 3));
      double grid_best = -1e300;
      for (const auto& r0 : row_grid)
        for (const auto& r1 : row_grid) {
          const Matrix mu{{r0[0], r0[1], r0[2]}, {r1[0], r1[1], r1[2]}};
          grid_best = std::max(grid_best, obj.value(mu));
        }
      OptimizerConfig cfg;
      cfg.starts = 4;
      cfg.iterations = 400;
      const auto s = optimize_stage(obj, cfg, static_cast<std::uint64_t>(i));
      CHECK(s.value == Approx(obj.value(s.kernel)).epsilon(1e-12));
      // The toy slopes are O(1), so the 0.1 grid itself can trail the
      // continuum optimum by more than 0.01; only the lower side is asserted.
      CHECK(s.value >= grid_best - 0.01);
    }
  }
  SUBCASE("tiny instance: matches a 0.1-step kernel grid within 0.01") {
    const auto p = tiny_problem(2, -500.0, 500.0);
    const auto v2 = backward_recursion(tiny_problem(1, -500.0, 500.0), OptimizerConfig{}).values;
    OptimizerConfig cfg;
    cfg.starts = 4;
    cfg.iterations = 200;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t z = 0; z < 3; ++z)
        for (const double* next : {static_cast<const double*>(nullptr), v2.data.data()}) {
          const DpObjective obj(p, b, z, next);
          std::vector<std::vector<std::size_t>> opts(2);
          for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t y = 0; y < p.action_count(); ++y)
              if (p.admissible(z, x, y)) opts[x].push_back(y);
          // All 0.1-step distributions over each row's admissible outputs.
          auto row_points = [](std::size_t k) {
            std::vector<std::vector<double>> pts;
            std::vector<double> cur(k, 0.0);
            auto rec = [&](auto&& self, std::size_t i, int left) -> void {
              if (i + 1 == k) {
                cur[i] = left / 10.0;
                pts.push_back(cur);
                return;
              }
              for (int c = 0; c <= left; ++c) {
                cur[i] = c / 10.0;
                self(self, i + 1, left - c);
              }
            };
            rec(rec, 0, 10);
            return pts;
          };
          double grid_best = -1e300;
          for (const auto& r0 : row_points(opts[0].size()))
            for (const auto& r1 : row_points(opts[1].size())) {
              Matrix mu(2, p.action_count(), 0.0);
              for (std::size_t j = 0; j < r0.size(); ++j) mu(0, opts[0][j]) = r0[j];
              for (std::size_t j = 0; j < r1.size(); ++j) mu(1, opts[1][j]) = r1[j];
              grid_best = std::max(grid_best, obj.value(mu));
            }
          const auto s = optimize_stage(obj, cfg, 7);
          CHECK(std::abs(s.value - grid_best) <= 0.01);
        }
  }
}

TEST_CASE("successor_distribution matches full joint enumeration") {
  const auto p = tiny_problem(3, -500.0, 500.0);
  const auto& m = p.model();
  Rng rng(4);
  for (std::size_t b = 0; b < p.beliefs().size(); ++b)
    for (std::size_t z = 0; z < p.energy().size(); ++z) {
      // random admissible kernel
      Matrix mu(p.obs_count(), p.action_count(), 0.0);
      for (std::size_t x = 0; x < p.obs_count(); ++x) {
        double s = 0.0;
        for (std::size_t y = 0; y < p.action_count(); ++y)
          if (p.admissible(z, x, y)) s += (mu(x, y) = rng.exponential());
        for (std::size_t y = 0; y < p.action_count(); ++y) mu(x, y) /= s;
      }
      const auto& pi = p.beliefs().point(b);
      std::map<std::pair<std::size_t, std::size_t>, double> want;
      for (std::size_t g = 0; g < 2; ++g)
        for (std::size_t h = 0; h < 2; ++h)
          for (std::size_t x = 0; x < 2; ++x)
            for (std::size_t g2 = 0; g2 < 2; ++g2)
              for (std::size_t xp = 0; xp < 2; ++xp)
                for (std::size_t y = 0; y < p.action_count(); ++y)
                  want[{x, y}] += pi[g] * m.transition(h, g) * m.emission(x, h) * pi[g2] *
                                  m.emission(xp, g2) * mu(xp, y);
      const auto got = successor_distribution(p, b, z, mu);
      double total = 0.0;
      for (const auto& e : got) {
        total += e.probability;
        CHECK(e.probability == Approx(want[{e.x, e.y_request}]).epsilon(1e-12));
        want.erase({e.x, e.y_request});
        const double d = p.actions()[e.y] - m.grid.value(e.x);
        CHECK(p.envelope(z).contains(d));
        CHECK(e.next_belief ==
              p.beliefs().project(inference::belief_update(pi, e.x, m).belief));
      }
      for (const auto& [key, v] : want) CHECK(v == Approx(0.0));
      CHECK(total == Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("successor_distribution with a point-mass belief and a fixed output") {
  const auto p = tiny_problem(2);
  const std::size_t b = p.beliefs().size() - 1;  // [1, 0]
  Matrix mu(2, 3, 0.0);
  mu(0, 1) = 1.0;
  mu(1, 1) = 1.0;
  const auto got = successor_distribution(p, b, 0, mu);
  double off = 0.0, on = 0.0;
  for (const auto& e : got) {
    CHECK(e.y_request == 1);
    (e.x == 0 ? off : on) += e.probability;
  }
  const auto& m = p.model();
  CHECK(off == Approx(m.transition(0, 0) * m.emission(0, 0) + m.transition(1, 0) * m.emission(0, 1)));
  CHECK(on == Approx(m.transition(0, 0) * m.emission(1, 0) + m.transition(1, 0) * m.emission(1, 1)));
}

TEST_CASE("clip-aware stage risk reduces to min_risk_stage when nothing clips") {
  const auto p = table_problem(1);
  const auto& ys = p.actions();
  const std::size_t y1000 = static_cast<std::size_t>(std::find(ys.begin(), ys.end(), 1000.0) - ys.begin());
  Matrix mu(4, 8, 0.0);
  for (std::size_t x = 0; x < 4; ++x) mu(x, y1000) = 1.0;
  for (std::size_t b = 0; b < p.beliefs().size(); ++b) {
    const DpObjective obj(p, b, 120, nullptr);
    CHECK(obj.risk(mu).value == Approx(inference::min_risk_stage(p.beliefs().point(b), mu, p.model(),
                                                                  p.costs()).value)
                                    .epsilon(1e-12));
  }
  // From an empty store the 1000 W request cannot be met when the kettle
  // draws 1500 W, and the clipped reading reveals it.
  const DpObjective empty(p, 5, 0, nullptr);
  CHECK(empty.risk(mu).value <
        inference::min_risk_stage(p.beliefs().point(5), mu, p.model(), p.costs()).value - 1e-3);
}

TEST_CASE("backward_recursion agrees with brute force on the tiny instance") {
  for (std::size_t n : {1u, 2u, 3u}) {
    for (auto [lo, hi] : {std::pair{0.0, 500.0}, std::pair{-500.0, 0.0}}) {
      const auto p = tiny_problem(n, lo, hi);
      CHECK(p.action_count() == 3);
      CHECK(p.energy().size() == 3);
      CHECK(p.beliefs().size() == 3);
      const auto oracle = brute_force_policy_search(p);
      const auto dp = backward_recursion(p, deterministic_only());
      for (std::size_t k = 1; k <= n; ++k)
        for (std::size_t b = 0; b < 3; ++b)
          for (std::size_t z = 0; z < 3; ++z)
            CHECK(std::abs(dp.values(k, b, z) - oracle(k, b, z)) <= 1e-9);
      // With the stochastic search enabled the value can only improve.
      const auto mixed = backward_recursion(p, OptimizerConfig{});
      for (std::size_t i = 0; i < dp.values.data.size(); ++i)
        CHECK(mixed.values.data[i] >= dp.values.data[i] - 1e-12);
    }
  }
}

TEST_CASE("brute force refuses oversized instances") {
  CHECK_THROWS_AS(brute_force_policy_search(table_problem(2)), std::length_error);
  CHECK(brute_force_policy_search(tiny_problem(1, 0.0, 500.0, inference::CostMatrix{Matrix(2, 2, 0.0)}))
            .data == std::vector<double>(9, 0.0));
}

TEST_CASE("zero costs select the idle kernel") {
  const auto p = tiny_problem(2, -500.0, 500.0, inference::CostMatrix{Matrix(2, 2, 0.0)});
  const auto r = backward_recursion(p, OptimizerConfig{});
  for (double v : r.values.data) CHECK(v == 0.0);
  for (std::size_t k = 1; k <= 2; ++k)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t z = 0; z < 3; ++z) {
        const auto mu = r.policy.kernel_matrix(k, b, z);
        for (std::size_t x = 0; x < 2; ++x) CHECK(mu(x, *p.idle_action(x)) == 1.0);
      }
}

TEST_CASE("property: value table and policy invariants") {
  const std::size_t n = 4;
  const auto p = tiny_problem(n, -500.0, 500.0);
  const auto r = backward_recursion(p, OptimizerConfig{});
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t z = 0; z < 3; ++z) {
        const double v = r.values(k, b, z);
        CHECK(v >= 0.0);
        CHECK(v <= 0.5 * static_cast<double>(n - k + 1) + 1e-12);
        if (k < n) CHECK(v >= r.values(k + 1, b, z) - 1e-12);
        // V_k is at least the best single-stage payoff.
        const DpObjective stage(p, b, z, nullptr);
        CHECK(v >= optimize_stage(stage, deterministic_only(), 0).value - 1e-12);
        const auto mu = r.policy.kernel_matrix(k, b, z);
        for (std::size_t x = 0; x < 2; ++x) {
          double s = 0.0;
          for (std::size_t y = 0; y < p.action_count(); ++y) {
            CHECK(mu(x, y) >= 0.0);
            if (!p.admissible(z, x, y)) CHECK(mu(x, y) == 0.0);
            s += mu(x, y);
          }
          CHECK(s == Approx(1.0).epsilon(1e-9));
        }
      }
  const auto again = backward_recursion(p, OptimizerConfig{});
  CHECK(again.policy == r.policy);
  CHECK(again.values.data == r.values.data);
  OptimizerConfig threaded;
  threaded.threads = 3;
  CHECK(backward_recursion(p, threaded).policy == r.policy);
}

TEST_CASE("policy files") {
  const auto dir = std::filesystem::temp_directory_path() / "ppsm_synthesis_test";
  std::filesystem::create_directories(dir);
  const auto p = tiny_problem(3, -500.0, 500.0);
  auto r = backward_recursion(p, OptimizerConfig{});
  // A mixed row exercises bit-exact probabilities.
  auto row = r.policy.kernel(1, 0, 0);
  row[0] = 1.0 / 3.0;
  row[1] = 2.0 / 3.0;
  row[2] = 0.0;
  save_policy(dir / "p.bin", r.policy);
  const auto back = load_policy(dir / "p.bin");
  CHECK(back == r.policy);
  CHECK_NOTHROW(check_compatible(back, p));

  const auto size = std::filesystem::file_size(dir / "p.bin");
  std::filesystem::copy_file(dir / "p.bin", dir / "t.bin", std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(dir / "t.bin", size - 13);
  CHECK_THROWS_AS(load_policy(dir / "t.bin"), IntegrityError);
  std::filesystem::resize_file(dir / "t.bin", 10);
  CHECK_THROWS_AS(load_policy(dir / "t.bin"), IntegrityError);

  {
    std::fstream f(dir / "p.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    f.put('\x5a');
  }
  CHECK_THROWS_AS(load_policy(dir / "p.bin"), IntegrityError);

  const auto other = tiny_problem(2, -500.0, 500.0);
  try {
    check_compatible(back, other);
    FAIL("expected a shape mismatch");
  } catch (const ShapeMismatch& e) {
    const std::string msg = e.what();
    CHECK(msg.find("N=3") != std::string::npos);
    CHECK(msg.find("N=2") != std::string::npos);
  }
}
