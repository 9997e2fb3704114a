#pragma once

// Belief filtering over the appliance hypotheses, the discretized belief
// simplex, Bayesian risk of the adversary's hypothesis test and the
// accumulated privacy metric.

#include <cstddef>
#include <span>
#include <vector>

#include "ppsm/household.hpp"
#include "ppsm/matrix.hpp"

namespace ppsm::inference {

struct Belief {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }
  /// Throws std::invalid_argument unless entries are >= 0 and sum to 1 within 1e-9.
  void validate() const;
};

struct UpdateResult {
  Belief belief;
  /// Set when the observation has zero likelihood under the prediction; the
  /// belief is then the prediction alone.
  bool zero_likelihood = false;
};

/// One-step prediction sum_g P(h|g) pi(g).
Belief predict(const Belief& pi, const household::HouseholdModel& model);

/// Predict with the transition matrix, then condition on observation index x.
UpdateResult belief_update(const Belief& pi, std::size_t x_index,
                           const household::HouseholdModel& model);

/// Same, for a power value that must lie exactly on the model grid.
UpdateResult belief_update_watts(const Belief& pi, double x_watts,
                                 const household::HouseholdModel& model);

/// Uniform lattice on the probability simplex with step 1/(m-1), points in
/// lexicographically ascending order.
class BeliefGrid {
 public:
  BeliefGrid(std::size_t hypotheses, std::size_t m);

  std::size_t size() const { return points_.size(); }
  std::size_t hypotheses() const { return n_; }
  std::size_t resolution() const { return m_; }
  const Belief& point(std::size_t i) const { return points_[i]; }

  /// Nearest point in L1 distance; ties go to the smallest index.
  std::size_t project(const Belief& pi) const;

 private:
  std::size_t n_;
  std::size_t m_;
  std::vector<Belief> points_;
};

struct CostMatrix {
  Matrix c;  ///< c(i, j) = cost of deciding i when j is true

  std::size_t size() const { return c.rows(); }
  void validate() const;
  /// 0/1 costs: the risk is the error probability.
  static CostMatrix zero_one(std::size_t n);
};

/// Risk of a deterministic rule y -> decided hypothesis against joint(y, h).
/// Throws std::invalid_argument when the joint does not sum to 1 within 1e-9.
double bayesian_risk(std::span<const std::size_t> rule, const Matrix& joint,
                     const CostMatrix& costs);

struct StageRisk {
  double value = 0.0;
  std::vector<std::size_t> decision;  ///< adversary's best response per y
};

/// Joint of the meter output and the current hypothesis, A(y, h) =
/// sum_{g,x} mu(y|x) P(x|g) P(h|g) pi(g). The kernel is |X| x |Y|.
Matrix output_joint(const Belief& pi, const Matrix& kernel,
                    const household::HouseholdModel& model);

/// Minimum Bayesian risk left to an adversary who sees y and best-responds.
/// The per-y minimizer breaks ties toward the smallest hypothesis index.
StageRisk min_risk_from_joint(const Matrix& joint, const CostMatrix& costs);

/// Minimum stage risk for the control kernel (rows over x, columns over y).
/// Throws std::invalid_argument when a kernel row is not stochastic.
StageRisk min_risk_stage(const Belief& pi, const Matrix& kernel,
                         const household::HouseholdModel& model, const CostMatrix& costs);

/// Risk when the adversary reads the current demand x_k directly (no storage).
double direct_observation_risk(const Belief& pi, const household::HouseholdModel& model,
                               const CostMatrix& costs);

/// Accumulated minimum Bayesian risk.
double ambr(std::span<const double> stage_values);

}  // namespace ppsm::inference
