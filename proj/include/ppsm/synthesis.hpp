#pragma once

// Offline policy synthesis: the finite-horizon backward recursion over the
// (belief grid x energy grid) state space, the per-state kernel optimizer,
// an exhaustive oracle for tiny instances, and policy persistence.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ppsm/ess.hpp"
#include "ppsm/household.hpp"
#include "ppsm/inference.hpp"
#include "ppsm/matrix.hpp"

namespace ppsm::synthesis {

/// Grid of stored energy values {0, e, 2e, ...} up to z_max.
struct EnergyGrid {
  double e = 5.0;
  double z_max = 1200.0;

  std::size_t size() const;
  double value(std::size_t i) const { return static_cast<double>(i) * e; }
  /// Nearest grid index, clamped to the grid.
  std::size_t project(double z) const;
};

/// Meter outputs {d_grid_min, ..., x_top + d_grid_max} in steps of q.
std::vector<double> action_grid(const household::PowerGrid& x_grid, double d_grid_min,
                                double d_grid_max);

struct GridConfig {
  double d_grid_min = -1000.0;  ///< most negative battery action on the output grid (W)
  double d_grid_max = 1000.0;   ///< most positive battery action on the output grid (W)
  double e = 5.0;               ///< energy grid step (Wh)
  std::size_t belief_resolution = 11;
  std::size_t horizon = 60;
};

struct OptimizerConfig {
  std::uint64_t seed = 1;
  std::size_t starts = 2;       ///< stochastic restarts per grid point (0 disables)
  std::size_t iterations = 40;  ///< supergradient steps per restart
  double step = 0.5;            ///< initial step length on the kernel simplex
  std::size_t threads = 1;      ///< worker threads per stage (0 = hardware)
};

/// Everything the recursion needs, with per-state tables precomputed.
class Problem {
 public:
  Problem(household::HouseholdModel model, ess::EssParams ess, inference::CostMatrix costs,
          const GridConfig& grids);

  const household::HouseholdModel& model() const { return model_; }
  const ess::EssParams& ess() const { return ess_; }
  const inference::CostMatrix& costs() const { return costs_; }
  const GridConfig& grids() const { return grids_; }
  const std::vector<double>& actions() const { return actions_; }
  const EnergyGrid& energy() const { return energy_; }
  const inference::BeliefGrid& beliefs() const { return beliefs_; }

  std::size_t obs_count() const { return model_.observation_count(); }
  std::size_t action_count() const { return actions_.size(); }
  std::size_t hypotheses() const { return model_.hypothesis_count(); }
  std::size_t point_count() const { return beliefs_.size() * energy_.size(); }
  double q() const { return model_.grid.q; }

  /// Snapped envelope at energy index z, limited to the output grid.
  const ess::ActionBounds& envelope(std::size_t z) const { return energy_cells_[z].env; }
  /// Whether a kernel row conditioned on observation x may put mass on y.
  bool admissible(std::size_t z, std::size_t x, std::size_t y) const {
    return energy_cells_[z].admissible[x * action_count() + y] != 0;
  }
  /// Output index after the runtime clip of y against demand x at energy index z.
  std::size_t clipped(std::size_t z, std::size_t x, std::size_t y) const {
    return energy_cells_[z].clip[x * action_count() + y];
  }
  /// Energy index after one step with the clipped action.
  std::size_t next_energy(std::size_t z, std::size_t x, std::size_t y) const {
    return energy_cells_[z].next_z[x * action_count() + y];
  }
  /// Index of y equal to the observation x, if the output grid contains it.
  std::optional<std::size_t> idle_action(std::size_t x) const { return idle_[x]; }

  struct BeliefCell {
    std::vector<double> p_now;     ///< P(X_k = x | pi)
    std::vector<std::size_t> next;  ///< projected belief after observing x
    std::vector<double> p_prev;    ///< belief-induced P(x') of the conditioning observation
    std::vector<double> joint;     ///< [x'][x][h]: P(x', H_k = h, X_k = x | pi)
  };
  const BeliefCell& belief_cell(std::size_t b) const { return belief_cells_[b]; }

  std::string digest() const;

 private:
  struct EnergyCell {
    ess::ActionBounds env;
    std::vector<std::uint8_t> admissible;
    std::vector<std::size_t> clip;
    std::vector<std::size_t> next_z;
  };

  household::HouseholdModel model_;
  ess::EssParams ess_;
  inference::CostMatrix costs_;
  GridConfig grids_;
  std::vector<double> actions_;
  EnergyGrid energy_;
  inference::BeliefGrid beliefs_;
  std::vector<std::optional<std::size_t>> idle_;
  std::vector<EnergyCell> energy_cells_;
  std::vector<BeliefCell> belief_cells_;
};

/// Maximization target over kernels at one grid point. Kernels are |X| x |Y|
/// row-stochastic matrices whose rows respect `admissible`.
class StageObjective {
 public:
  virtual ~StageObjective() = default;
  virtual std::size_t rows() const = 0;
  virtual std::size_t cols() const = 0;
  virtual bool admissible(std::size_t x, std::size_t y) const = 0;
  virtual std::optional<std::size_t> idle_action(std::size_t) const { return std::nullopt; }
  virtual double value(const Matrix& mu) const = 0;
  /// A supergradient of value at mu (the objectives here are concave).
  virtual void supergradient(const Matrix& mu, Matrix& grad) const = 0;
  /// Value of the deterministic kernel that picks choice[x] in row x.
  virtual double value_deterministic(std::span<const std::size_t> choice) const;
};

/// Stage payoff plus expected continuation at grid point (b, z):
///   L(mu) = R*(mu clipped at the realized demand) + sum V_next * P(x, y).
/// v_next is indexed [b * |Z| + z]; null at the last stage.
class DpObjective final : public StageObjective {
 public:
  DpObjective(const Problem& problem, std::size_t b, std::size_t z, const double* v_next);

  std::size_t rows() const override { return nx_; }
  std::size_t cols() const override { return ny_; }
  bool admissible(std::size_t x, std::size_t y) const override {
    return problem_.admissible(z_, x, y);
  }
  std::optional<std::size_t> idle_action(std::size_t x) const override {
    return problem_.idle_action(x);
  }
  double value(const Matrix& mu) const override;
  void supergradient(const Matrix& mu, Matrix& grad) const override;
  double value_deterministic(std::span<const std::size_t> choice) const override;

  /// Clip-aware minimum Bayesian risk of the kernel, without continuation.
  inference::StageRisk risk(const Matrix& mu) const;
  double continuation(const Matrix& mu) const;

 private:
  double risk_of(const std::vector<double>& joint) const;
  const double* block(std::size_t x, std::size_t y) const {
    return out_.data() + (x * ny_ + y) * ny_ * nh_;
  }

  const Problem& problem_;
  std::size_t z_;
  std::size_t nx_, ny_, nh_;
  std::vector<double> p_prev_;
  std::vector<double> cont_;  ///< expected next value per requested y
  std::vector<double> out_;   ///< [x'][y*][y][h]: mass moved to output y under hypothesis h
};

struct StageSolution {
  Matrix kernel;
  double value = 0.0;
  bool stochastic = false;  ///< the stochastic search beat the deterministic polish
};

/// Multi-start projected supergradient ascent over the admissible product of
/// simplices, then an exhaustive search over deterministic kernels. The
/// stochastic result is kept only when it is better by more than 1e-12.
/// Equal deterministic optima prefer idle mass, then the smallest choice vector.
StageSolution optimize_stage(const StageObjective& objective, const OptimizerConfig& config,
                             std::uint64_t seed);

/// Euclidean projection of v onto the probability simplex restricted to the
/// entries where mask is non-zero.
void project_to_simplex(std::span<double> v, std::span<const std::uint8_t> mask);

struct SuccessorEntry {
  std::size_t x;           ///< realized demand index
  std::size_t y_request;   ///< requested output index
  std::size_t y;           ///< output index after the clip
  double probability;
  std::size_t next_belief;
  std::size_t next_energy;
};

/// P(x_k, y_k | pi, z, mu) = P(x_k | pi) * sum_x' p(x' | pi) mu(y | x'),
/// with the requested output clipped against x_k before the energy step.
std::vector<SuccessorEntry> successor_distribution(const Problem& problem, std::size_t b,
                                                   std::size_t z, const Matrix& kernel);

struct PolicyTable {
  std::size_t horizon = 0;
  std::size_t belief_count = 0;
  std::size_t energy_count = 0;
  std::size_t obs_count = 0;
  std::size_t action_count = 0;
  std::size_t hypotheses = 0;
  std::size_t belief_resolution = 0;
  double q = 0.0;
  double e = 0.0;
  std::vector<double> actions;
  std::string model_digest;
  std::string ess_digest;
  std::vector<double> data;  ///< [k][b][z][x][y], stage k = 1..N stored at k-1

  std::size_t kernel_size() const { return obs_count * action_count; }
  std::span<const double> kernel(std::size_t k, std::size_t b, std::size_t z) const;
  std::span<double> kernel(std::size_t k, std::size_t b, std::size_t z);
  Matrix kernel_matrix(std::size_t k, std::size_t b, std::size_t z) const;
  std::string shape() const;

  friend bool operator==(const PolicyTable&, const PolicyTable&) = default;
};

struct ValueTable {
  std::size_t horizon = 0;
  std::size_t belief_count = 0;
  std::size_t energy_count = 0;
  std::vector<double> data;  ///< [k][b][z]

  double operator()(std::size_t k, std::size_t b, std::size_t z) const {
    return data[((k - 1) * belief_count + b) * energy_count + z];
  }
  double& operator()(std::size_t k, std::size_t b, std::size_t z) {
    return data[((k - 1) * belief_count + b) * energy_count + z];
  }
};

struct SynthesisResult {
  PolicyTable policy;
  ValueTable values;
  std::size_t stochastic_wins = 0;  ///< grid points where a mixed kernel was kept
};

/// V_N = max R*_N, then V_k = max_mu [R*_k + E V_{k+1}] for k = N-1 ... 1.
SynthesisResult backward_recursion(const Problem& problem, const OptimizerConfig& config);

/// Exhaustive expectimax over deterministic kernels at every visited state,
/// with no memoization. Returns the stage-1 values for every start state.
/// Throws std::length_error when |Y|^|X| ^ N * |grid| exceeds 1e7.
ValueTable brute_force_policy_search(const Problem& problem);

/// Binary policy file: magic, version, JSON header, sparse kernel rows and a
/// trailing checksum.
void save_policy(const std::filesystem::path& path, const PolicyTable& table);
PolicyTable load_policy(const std::filesystem::path& path);

/// Throws ShapeMismatch naming both shapes, or IntegrityError on a digest
/// mismatch, when the table was not synthesized for this problem.
void check_compatible(const PolicyTable& table, const Problem& problem);

}  // namespace ppsm::synthesis
