#include "ppsm/inference.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ppsm::inference {

using household::HouseholdModel;

void Belief::validate() const {
  if (probs.empty()) throw std::invalid_argument("belief is empty");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("belief has a negative entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw std::invalid_argument("belief sums to " + std::to_string(s));
}

Belief predict(const Belief& pi, const HouseholdModel& model) {
  const std::size_t n = model.hypothesis_count();
  if (pi.size() != n) throw std::invalid_argument("belief size differs from the model");
  Belief out{std::vector<double>(n, 0.0)};
  for (std::size_t h = 0; h < n; ++h)
    for (std::size_t g = 0; g < n; ++g) out.probs[h] += model.transition(h, g) * pi.probs[g];
  return out;
}

UpdateResult belief_update(const Belief& pi, std::size_t x_index, const HouseholdModel& model) {
  if (x_index >= model.observation_count())
    throw std::out_of_range("observation index " + std::to_string(x_index) + " is off the grid");
  UpdateResult r{predict(pi, model), false};
  double norm = 0.0;
  std::vector<double> post(r.belief.size());
  for (std::size_t h = 0; h < post.size(); ++h) {
    post[h] = model.emission(x_index, h) * r.belief.probs[h];
    norm += post[h];
  }
  if (norm <= 0.0) {
    r.zero_likelihood = true;
    return r;
  }
  for (double& p : post) p /= norm;
  r.belief.probs = std::move(post);
  return r;
}

UpdateResult belief_update_watts(const Belief& pi, double x_watts, const HouseholdModel& model) {
  return belief_update(pi, model.grid.index_of(x_watts), model);
}

BeliefGrid::BeliefGrid(std::size_t hypotheses, std::size_t m) : n_(hypotheses), m_(m) {
  if (n_ < 1) throw std::invalid_argument("belief grid needs at least one hypothesis");
  if (m_ < 2) throw std::invalid_argument("belief grid resolution m must be >= 2");
  const std::size_t steps = m_ - 1;
  const double inv = 1.0 / static_cast<double>(steps);
  // Enumerate compositions of `steps` in lexicographic order of the counts,
  // which is lexicographic order of the probabilities.
  std::vector<std::size_t> counts(n_, 0);
  auto emit = [&] {
    Belief b{std::vector<double>(n_)};
    double head = 0.0;
    for (std::size_t i = 0; i + 1 < n_; ++i) {
      b.probs[i] = static_cast<double>(counts[i]) * inv;
      head += b.probs[i];
    }
    b.probs[n_ - 1] = counts[n_ - 1] == 0 ? 0.0 : std::max(0.0, 1.0 - head);
    points_.push_back(std::move(b));
  };
  auto rec = [&](auto&& self, std::size_t i, std::size_t remaining) -> void {
    if (i + 1 == n_) {
      counts[i] = remaining;
      emit();
      return;
    }
    for (std::size_t c = 0; c <= remaining; ++c) {
      counts[i] = c;
      self(self, i + 1, remaining - c);
    }
  };
  rec(rec, 0, steps);
}

std::size_t BeliefGrid::project(const Belief& pi) const {
  if (pi.size() != n_) throw std::invalid_argument("belief size differs from the grid");
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    double d = 0.0;
    for (std::size_t h = 0; h < n_; ++h) d += std::abs(pi.probs[h] - points_[i].probs[h]);
    // Distances that differ only by rounding count as ties.
    if (d < best_d - 1e-12) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

void CostMatrix::validate() const {
  if (c.rows() == 0 || c.rows() != c.cols()) throw std::invalid_argument("cost matrix must be square");
  for (double v : c.data())
    if (!(v >= 0.0)) throw std::invalid_argument("cost matrix entries must be non-negative");
}

CostMatrix CostMatrix::zero_one(std::size_t n) {
  CostMatrix m{Matrix(n, n, 1.0)};
  for (std::size_t i = 0; i < n; ++i) m.c(i, i) = 0.0;
  return m;
}

double bayesian_risk(std::span<const std::size_t> rule, const Matrix& joint,
                     const CostMatrix& costs) {
  if (rule.size() != joint.rows()) throw std::invalid_argument("rule size differs from the joint");
  if (joint.cols() != costs.size()) throw std::invalid_argument("joint and costs disagree on |H|");
  double total = 0.0;
  for (double v : joint.data()) total += v;
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("joint is not normalized (sum " + std::to_string(total) + ")");
  double r = 0.0;
  for (std::size_t y = 0; y < joint.rows(); ++y)
    for (std::size_t h = 0; h < joint.cols(); ++h) r += costs.c(rule[y], h) * joint(y, h);
  return r;
}

Matrix output_joint(const Belief& pi, const Matrix& kernel, const HouseholdModel& model) {
  const std::size_t n = model.hypothesis_count();
  const std::size_t nx = model.observation_count();
  if (kernel.rows() != nx) throw std::invalid_argument("kernel rows differ from |X|");
  if (pi.size() != n) throw std::invalid_argument("belief size differs from the model");
  // a(x, h) = sum_g P(x|g) P(h|g) pi(g)
  Matrix a(nx, n, 0.0);
  for (std::size_t g = 0; g < n; ++g)
    for (std::size_t x = 0; x < nx; ++x) {
      const double px = model.emission(x, g) * pi.probs[g];
      if (px == 0.0) continue;
      for (std::size_t h = 0; h < n; ++h) a(x, h) += px * model.transition(h, g);
    }
  Matrix joint(kernel.cols(), n, 0.0);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < kernel.cols(); ++y) {
      const double m = kernel(x, y);
      if (m == 0.0) continue;
      for (std::size_t h = 0; h < n; ++h) joint(y, h) += m * a(x, h);
    }
  return joint;
}

StageRisk min_risk_from_joint(const Matrix& joint, const CostMatrix& costs) {
  const std::size_t n = joint.cols();
  if (costs.size() != n) throw std::invalid_argument("joint and costs disagree on |H|");
  StageRisk r{0.0, std::vector<std::size_t>(joint.rows(), 0)};
  for (std::size_t y = 0; y < joint.rows(); ++y) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < n; ++d) {
      double c = 0.0;
      for (std::size_t h = 0; h < n; ++h) c += costs.c(d, h) * joint(y, h);
      if (c < best) {
        best = c;
        r.decision[y] = d;
      }
    }
    r.value += best;
  }
  return r;
}

StageRisk min_risk_stage(const Belief& pi, const Matrix& kernel, const HouseholdModel& model,
                         const CostMatrix& costs) {
  for (std::size_t x = 0; x < kernel.rows(); ++x) {
    double s = 0.0;
    for (double v : kernel.row(x)) {
      if (!(v >= 0.0)) throw std::invalid_argument("kernel has a negative entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9)
      throw std::invalid_argument("kernel row " + std::to_string(x) + " sums to " + std::to_string(s));
  }
  return min_risk_from_joint(output_joint(pi, kernel, model), costs);
}

double direct_observation_risk(const Belief& pi, const HouseholdModel& model,
                               const CostMatrix& costs) {
  const Belief pred = predict(pi, model);
  const std::size_t n = model.hypothesis_count();
  Matrix joint(model.observation_count(), n, 0.0);
  for (std::size_t x = 0; x < joint.rows(); ++x)
    for (std::size_t h = 0; h < n; ++h) joint(x, h) = model.emission(x, h) * pred.probs[h];
  return min_risk_from_joint(joint, costs).value;
}

double ambr(std::span<const double> stage_values) {
  double s = 0.0;
  for (double v : stage_values) s += v;
  return s;
}

}  // namespace ppsm::inference
