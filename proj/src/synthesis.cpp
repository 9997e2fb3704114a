#include "ppsm/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "ppsm/digest.hpp"
#include "ppsm/error.hpp"
#include "ppsm/rng.hpp"

namespace ppsm::synthesis {

using inference::Belief;

std::size_t EnergyGrid::size() const {
  if (!(e > 0.0) || !(z_max > 0.0)) throw std::invalid_argument("energy grid needs e > 0 and z_max > 0");
  return static_cast<std::size_t>(std::floor(z_max / e + 1e-9)) + 1;
}

std::size_t EnergyGrid::project(double z) const {
  const double top = static_cast<double>(size() - 1);
  const double i = std::floor(z / e + 0.5);
  return static_cast<std::size_t>(std::clamp(i, 0.0, top));
}

std::vector<double> action_grid(const household::PowerGrid& x_grid, double d_grid_min,
                                double d_grid_max) {
  const double q = x_grid.q;
  if (d_grid_min > 0.0 || d_grid_max < 0.0)
    throw std::invalid_argument("action offsets must satisfy d_grid_min <= 0 <= d_grid_max");
  const double lo = std::round(d_grid_min / q);
  const double hi = std::round((x_grid.top() + d_grid_max) / q);
  if (std::abs(lo * q - d_grid_min) > 1e-9 * q || std::abs(hi * q - x_grid.top() - d_grid_max) > 1e-9 * q)
    throw std::invalid_argument("action offsets must be multiples of q");
  std::vector<double> out;
  for (double i = lo; i <= hi; i += 1.0) out.push_back(i * q);
  return out;
}

Problem::Problem(household::HouseholdModel model, ess::EssParams ess_params,
                 inference::CostMatrix costs, const GridConfig& grids)
    : model_(std::move(model)),
      ess_(std::move(ess_params)),
      costs_(std::move(costs)),
      grids_(grids),
      actions_(action_grid(model_.grid, grids.d_grid_min, grids.d_grid_max)),
      energy_{grids.e, ess_.z_max},
      beliefs_(model_.hypothesis_count(), grids.belief_resolution) {
  model_.validate();
  ess_.validate();
  costs_.validate();
  if (costs_.size() != model_.hypothesis_count())
    throw std::invalid_argument("cost matrix size differs from the hypothesis count");
  if (grids_.horizon < 1) throw std::invalid_argument("horizon N must be >= 1");

  const std::size_t nx = obs_count();
  const std::size_t ny = action_count();
  const double q = this->q();
  const double y0 = actions_.front();
  auto y_index = [&](double y) {
    return static_cast<std::size_t>(std::llround((y - y0) / q));
  };

  idle_.resize(nx);
  for (std::size_t x = 0; x < nx; ++x) {
    const double xv = model_.grid.value(x);
    if (xv >= y0 - 1e-9 * q && xv <= actions_.back() + 1e-9 * q) idle_[x] = y_index(xv);
  }

  energy_cells_.resize(energy_.size());
  for (std::size_t z = 0; z < energy_cells_.size(); ++z) {
    auto& cell = energy_cells_[z];
    const ess::EssState s{energy_.value(z)};
    cell.env = ess::state_bounds(s, ess_).snapped(q);
    cell.env.d_lo = std::max(cell.env.d_lo, grids_.d_grid_min);
    cell.env.d_hi = std::min(cell.env.d_hi, grids_.d_grid_max);
    cell.admissible.assign(nx * ny, 0);
    cell.clip.assign(nx * ny, 0);
    cell.next_z.assign(nx * ny, 0);
    for (std::size_t x = 0; x < nx; ++x) {
      const double xv = model_.grid.value(x);
      for (std::size_t y = 0; y < ny; ++y) {
        const double d = actions_[y] - xv;
        const double tol = 1e-9 * q;
        cell.admissible[x * ny + y] = d >= cell.env.d_lo - tol && d <= cell.env.d_hi + tol;
        const double dc = std::clamp(d, cell.env.d_lo, cell.env.d_hi);
        cell.clip[x * ny + y] = y_index(xv + dc);
        cell.next_z[x * ny + y] = energy_.project(ess::step(s, dc, ess_).z);
      }
    }
  }

  const std::size_t nh = hypotheses();
  belief_cells_.resize(beliefs_.size());
  for (std::size_t b = 0; b < beliefs_.size(); ++b) {
    auto& cell = belief_cells_[b];
    const Belief& pi = beliefs_.point(b);
    const Belief pred = inference::predict(pi, model_);
    cell.p_now.assign(nx, 0.0);
    cell.next.assign(nx, 0);
    cell.p_prev.assign(nx, 0.0);
    cell.joint.assign(nx * nx * nh, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t h = 0; h < nh; ++h) cell.p_now[x] += model_.emission(x, h) * pred.probs[h];
      cell.next[x] = beliefs_.project(inference::belief_update(pi, x, model_).belief);
      for (std::size_t g = 0; g < nh; ++g) cell.p_prev[x] += model_.emission(x, g) * pi.probs[g];
    }
    for (std::size_t g = 0; g < nh; ++g)
      for (std::size_t xp = 0; xp < nx; ++xp) {
        const double a = pi.probs[g] * model_.emission(xp, g);
        if (a == 0.0) continue;
        for (std::size_t h = 0; h < nh; ++h) {
          const double ah = a * model_.transition(h, g);
          for (std::size_t x = 0; x < nx; ++x)
            cell.joint[(xp * nx + x) * nh + h] += ah * model_.emission(x, h);
        }
      }
  }
}

std::string Problem::digest() const {
  Digest d;
  d.str("problem/v1").str(model_.digest()).str(ess_.digest()).f64s(costs_.c.data());
  d.f64(grids_.d_grid_min).f64(grids_.d_grid_max).f64(grids_.e);
  d.u64(grids_.belief_resolution).u64(grids_.horizon);
  return d.hex();
}

double StageObjective::value_deterministic(std::span<const std::size_t> choice) const {
  Matrix mu(rows(), cols(), 0.0);
  for (std::size_t x = 0; x < rows(); ++x) mu(x, choice[x]) = 1.0;
  return value(mu);
}

DpObjective::DpObjective(const Problem& problem, std::size_t b, std::size_t z,
                         const double* v_next)
    : problem_(problem),
      z_(z),
      nx_(problem.obs_count()),
      ny_(problem.action_count()),
      nh_(problem.hypotheses()) {
  const auto& cell = problem.belief_cell(b);
  p_prev_ = cell.p_prev;
  cont_.assign(ny_, 0.0);
  if (v_next) {
    const std::size_t nz = problem.energy().size();
    for (std::size_t y = 0; y < ny_; ++y)
      for (std::size_t x = 0; x < nx_; ++x) {
        if (cell.p_now[x] == 0.0) continue;
        cont_[y] += cell.p_now[x] * v_next[cell.next[x] * nz + problem.next_energy(z, x, y)];
      }
  }
  out_.assign(nx_ * ny_ * ny_ * nh_, 0.0);
  for (std::size_t xp = 0; xp < nx_; ++xp)
    for (std::size_t y = 0; y < ny_; ++y) {
      if (!problem.admissible(z, xp, y)) continue;
      double* blk = out_.data() + (xp * ny_ + y) * ny_ * nh_;
      for (std::size_t x = 0; x < nx_; ++x) {
        const std::size_t col = problem.clipped(z, x, y);
        for (std::size_t h = 0; h < nh_; ++h) blk[col * nh_ + h] += cell.joint[(xp * nx_ + x) * nh_ + h];
      }
    }
}

double DpObjective::risk_of(const std::vector<double>& joint) const {
  const auto& c = problem_.costs().c;
  double r = 0.0;
  for (std::size_t y = 0; y < ny_; ++y) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t d = 0; d < nh_; ++d) {
      double s = 0.0;
      for (std::size_t h = 0; h < nh_; ++h) s += c(d, h) * joint[y * nh_ + h];
      best = std::min(best, s);
    }
    r += best;
  }
  return r;
}

inference::StageRisk DpObjective::risk(const Matrix& mu) const {
  Matrix joint(ny_, nh_, 0.0);
  for (std::size_t xp = 0; xp < nx_; ++xp)
    for (std::size_t y = 0; y < ny_; ++y) {
      const double m = mu(xp, y);
      if (m == 0.0) continue;
      const double* blk = block(xp, y);
      for (std::size_t i = 0; i < ny_ * nh_; ++i) joint.data()[i] += m * blk[i];
    }
  return inference::min_risk_from_joint(joint, problem_.costs());
}

double DpObjective::continuation(const Matrix& mu) const {
  double s = 0.0;
  for (std::size_t xp = 0; xp < nx_; ++xp)
    for (std::size_t y = 0; y < ny_; ++y) s += p_prev_[xp] * mu(xp, y) * cont_[y];
  return s;
}

double DpObjective::value(const Matrix& mu) const { return risk(mu).value + continuation(mu); }

void DpObjective::supergradient(const Matrix& mu, Matrix& grad) const {
  const auto best = risk(mu);
  const auto& c = problem_.costs().c;
  grad = Matrix(nx_, ny_, 0.0);
  for (std::size_t xp = 0; xp < nx_; ++xp)
    for (std::size_t y = 0; y < ny_; ++y) {
      if (!admissible(xp, y)) continue;
      const double* blk = block(xp, y);
      double g = p_prev_[xp] * cont_[y];
      for (std::size_t col = 0; col < ny_; ++col)
        for (std::size_t h = 0; h < nh_; ++h) g += c(best.decision[col], h) * blk[col * nh_ + h];
      grad(xp, y) = g;
    }
}

double DpObjective::value_deterministic(std::span<const std::size_t> choice) const {
  std::vector<double> joint(ny_ * nh_, 0.0);
  double cont = 0.0;
  for (std::size_t xp = 0; xp < nx_; ++xp) {
    const double* blk = block(xp, choice[xp]);
    for (std::size_t i = 0; i < joint.size(); ++i) joint[i] += blk[i];
    cont += p_prev_[xp] * cont_[choice[xp]];
  }
  return risk_of(joint) + cont;
}

void project_to_simplex(std::span<double> v, std::span<const std::uint8_t> mask) {
  std::vector<double> u;
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) u.push_back(v[i]);
  if (u.empty()) throw std::invalid_argument("simplex projection over an empty support");
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cumulative += u[j];
    const double t = (cumulative - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0.0) theta = t;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = mask[i] ? std::max(v[i] - theta, 0.0) : 0.0;
    total += v[i];
  }
  for (double& x : v) x /= total;
}

StageSolution optimize_stage(const StageObjective& objective, const OptimizerConfig& config,
                             std::uint64_t seed) {
  const std::size_t nx = objective.rows();
  const std::size_t ny = objective.cols();
  std::vector<std::vector<std::size_t>> options(nx);
  std::vector<std::size_t> idle(nx, ny);
  for (std::size_t x = 0; x < nx; ++x) {
    for (std::size_t y = 0; y < ny; ++y)
      if (objective.admissible(x, y)) options[x].push_back(y);
    if (options[x].empty())
      throw std::runtime_error("no admissible output for conditioning observation " + std::to_string(x));
    if (auto i = objective.idle_action(x); i && objective.admissible(x, *i)) idle[x] = *i;
  }

  // Deterministic polish: kernels are visited in lexicographic order, so an
  // equal-value kernel replaces the incumbent only with strictly more idle rows.
  std::vector<std::size_t> pos(nx, 0), choice(nx), best_choice;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_idle = 0;
  for (bool more = true; more;) {
    std::size_t idle_rows = 0;
    for (std::size_t x = 0; x < nx; ++x) {
      choice[x] = options[x][pos[x]];
      idle_rows += choice[x] == idle[x];
    }
    const double v = objective.value_deterministic(choice);
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    if (best_choice.empty() || v > best + tol || (v >= best - tol && idle_rows > best_idle)) {
      best = v;
      best_choice = choice;
      best_idle = idle_rows;
    }
    more = false;
    for (std::size_t r = nx; r-- > 0;) {
      if (++pos[r] < options[r].size()) {
        more = true;
        break;
      }
      pos[r] = 0;
    }
  }

  StageSolution sol{Matrix(nx, ny, 0.0), best, false};
  for (std::size_t x = 0; x < nx; ++x) sol.kernel(x, best_choice[x]) = 1.0;

  bool branching = false;
  for (const auto& o : options) branching |= o.size() > 1;
  if (!branching || config.starts == 0) return sol;

  std::vector<std::uint8_t> mask(nx * ny, 0);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y : options[x]) mask[x * ny + y] = 1;
  auto project = [&](Matrix& mu) {
    for (std::size_t x = 0; x < nx; ++x)
      project_to_simplex(mu.row(x), std::span<const std::uint8_t>(mask).subspan(x * ny, ny));
  };

  Matrix best_mu;
  double best_stochastic = -std::numeric_limits<double>::infinity();
  Matrix grad;
  for (std::size_t s = 0; s < config.starts; ++s) {
    Rng rng(mix_seed(seed, s));
    Matrix mu(nx, ny, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
      double total = 0.0;
      for (std::size_t y : options[x]) total += (mu(x, y) = rng.exponential());
      for (std::size_t y : options[x]) mu(x, y) /= total;
    }
    for (std::size_t t = 0; t < config.iterations; ++t) {
      const double v = objective.value(mu);
      if (v > best_stochastic) {
        best_stochastic = v;
        best_mu = mu;
      }
      objective.supergradient(mu, grad);
      const double eta = config.step / std::sqrt(static_cast<double>(t + 1));
      for (std::size_t i = 0; i < mu.data().size(); ++i) mu.data()[i] += eta * grad.data()[i];
      project(mu);
    }
    const double v = objective.value(mu);
    if (v > best_stochastic) {
      best_stochastic = v;
      best_mu = mu;
    }
  }
  if (best_stochastic > best + 1e-12 * std::max(1.0, std::abs(best))) {
    sol.kernel = best_mu;
    sol.value = best_stochastic;
    sol.stochastic = true;
  }
  return sol;
}

std::vector<SuccessorEntry> successor_distribution(const Problem& problem, std::size_t b,
                                                   std::size_t z, const Matrix& kernel) {
  const auto& cell = problem.belief_cell(b);
  const std::size_t nx = problem.obs_count();
  const std::size_t ny = problem.action_count();
  std::vector<double> request(ny, 0.0);
  for (std::size_t xp = 0; xp < nx; ++xp)
    for (std::size_t y = 0; y < ny; ++y) request[y] += cell.p_prev[xp] * kernel(xp, y);
  std::vector<SuccessorEntry> out;
  for (std::size_t x = 0; x < nx; ++x) {
    if (cell.p_now[x] == 0.0) continue;
    for (std::size_t y = 0; y < ny; ++y) {
      if (request[y] == 0.0) continue;
      out.push_back({x, y, problem.clipped(z, x, y), cell.p_now[x] * request[y], cell.next[x],
                     problem.next_energy(z, x, y)});
    }
  }
  return out;
}

std::span<const double> PolicyTable::kernel(std::size_t k, std::size_t b, std::size_t z) const {
  const std::size_t n = kernel_size();
  return {data.data() + (((k - 1) * belief_count + b) * energy_count + z) * n, n};
}

std::span<double> PolicyTable::kernel(std::size_t k, std::size_t b, std::size_t z) {
  const std::size_t n = kernel_size();
  return {data.data() + (((k - 1) * belief_count + b) * energy_count + z) * n, n};
}

Matrix PolicyTable::kernel_matrix(std::size_t k, std::size_t b, std::size_t z) const {
  Matrix m(obs_count, action_count);
  const auto src = kernel(k, b, z);
  std::copy(src.begin(), src.end(), m.data().begin());
  return m;
}

std::string PolicyTable::shape() const {
  std::ostringstream os;
  os << "N=" << horizon << " |Pi|=" << belief_count << " |Z|=" << energy_count
     << " |X|=" << obs_count << " |Y|=" << action_count;
  return os.str();
}

namespace {

// Runs work(i) for i in [0, n) on `threads` workers with a static
// interleaved split; the first exception is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& work) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, std::max<std::size_t>(n, 1));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::exception_ptr error;
  std::mutex lock;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) work(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(lock);
        if (!error) error = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

SynthesisResult backward_recursion(const Problem& problem, const OptimizerConfig& config) {
  const std::size_t n = problem.grids().horizon;
  const std::size_t nb = problem.beliefs().size();
  const std::size_t nz = problem.energy().size();

  SynthesisResult r;
  auto& p = r.policy;
  p.horizon = n;
  p.belief_count = nb;
  p.energy_count = nz;
  p.obs_count = problem.obs_count();
  p.action_count = problem.action_count();
  p.hypotheses = problem.hypotheses();
  p.belief_resolution = problem.grids().belief_resolution;
  p.q = problem.q();
  p.e = problem.grids().e;
  p.actions = problem.actions();
  p.model_digest = problem.model().digest();
  p.ess_digest = problem.ess().digest();
  p.data.assign(n * nb * nz * p.kernel_size(), 0.0);
  r.values = ValueTable{n, nb, nz, std::vector<double>(n * nb * nz, 0.0)};

  std::vector<std::uint8_t> won(nb * nz);
  for (std::size_t k = n; k >= 1; --k) {
    const double* v_next = k < n ? &r.values(k + 1, 0, 0) : nullptr;
    std::fill(won.begin(), won.end(), 0);
    parallel_for(nb * nz, config.threads, [&](std::size_t i) {
      const std::size_t b = i / nz, z = i % nz;
      try {
        const DpObjective obj(problem, b, z, v_next);
        const auto sol = optimize_stage(obj, config, mix_seed(config.seed, k, b, z));
        r.values(k, b, z) = sol.value;
        std::copy(sol.kernel.data().begin(), sol.kernel.data().end(), p.kernel(k, b, z).begin());
        won[i] = sol.stochastic;
      } catch (const std::exception& e) {
        throw std::runtime_error("synthesis failed at stage " + std::to_string(k) + ", belief " +
                                 std::to_string(b) + ", energy " + std::to_string(z) + ": " +
                                 e.what());
      }
    });
    for (auto w : won) r.stochastic_wins += w;
  }
  return r;
}

namespace {

// Oracle recursion. It re-derives envelopes, clipping, risks and successors
// from the model tables and the ess and inference primitives, sharing none of
// the Problem precomputation.
class BruteForce {
 public:
  explicit BruteForce(const Problem& p) : p_(p) {}

  double value(std::size_t k, std::size_t b, std::size_t z) const {
    const auto& m = p_.model();
    const std::size_t nx = m.observation_count();
    const std::size_t nh = m.hypothesis_count();
    const std::size_t ny = p_.actions().size();
    const double q = m.grid.q;
    const Belief& pi = p_.beliefs().point(b);
    const ess::EssState s{p_.energy().value(z)};
    auto env = ess::state_bounds(s, p_.ess()).snapped(q);
    const double lo = std::max(env.d_lo, p_.grids().d_grid_min);
    const double hi = std::min(env.d_hi, p_.grids().d_grid_max);

    std::vector<std::vector<std::size_t>> options(nx);
    for (std::size_t xp = 0; xp < nx; ++xp)
      for (std::size_t y = 0; y < ny; ++y) {
        const double d = p_.actions()[y] - m.grid.value(xp);
        if (d >= lo - 1e-6 && d <= hi + 1e-6) options[xp].push_back(y);
      }
    auto out_index = [&](double y) {
      for (std::size_t i = 0; i < ny; ++i)
        if (std::abs(p_.actions()[i] - y) < 1e-6) return i;
      throw std::logic_error("clipped output is off the action grid");
    };

    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> pick(nx, 0);
    while (true) {
      std::vector<double> joint(ny * nh, 0.0);
      for (std::size_t g = 0; g < nh; ++g)
        for (std::size_t h = 0; h < nh; ++h)
          for (std::size_t xp = 0; xp < nx; ++xp)
            for (std::size_t x = 0; x < nx; ++x) {
              const double pr = pi[g] * m.emission(xp, g) * m.transition(h, g) * m.emission(x, h);
              const double xv = m.grid.value(x);
              const double d = std::clamp(p_.actions()[options[xp][pick[xp]]] - xv, lo, hi);
              joint[out_index(xv + d) * nh + h] += pr;
            }
      double risk = 0.0;
      for (std::size_t y = 0; y < ny; ++y) {
        double r = std::numeric_limits<double>::infinity();
        for (std::size_t dec = 0; dec < nh; ++dec) {
          double c = 0.0;
          for (std::size_t h = 0; h < nh; ++h) c += p_.costs().c(dec, h) * joint[y * nh + h];
          r = std::min(r, c);
        }
        risk += r;
      }

      double cont = 0.0;
      if (k < p_.grids().horizon) {
        for (std::size_t x = 0; x < nx; ++x) {
          double px = 0.0;
          for (std::size_t g = 0; g < nh; ++g)
            for (std::size_t h = 0; h < nh; ++h) px += pi[g] * m.transition(h, g) * m.emission(x, h);
          if (px == 0.0) continue;
          const auto nb = p_.beliefs().project(inference::belief_update(pi, x, m).belief);
          for (std::size_t xp = 0; xp < nx; ++xp) {
            double pxp = 0.0;
            for (std::size_t g = 0; g < nh; ++g) pxp += pi[g] * m.emission(xp, g);
            if (pxp == 0.0) continue;
            const double xv = m.grid.value(x);
            const double d = std::clamp(p_.actions()[options[xp][pick[xp]]] - xv, lo, hi);
            const auto nz = p_.energy().project(ess::step(s, d, p_.ess()).z);
            cont += px * pxp * value(k + 1, nb, nz);
          }
        }
      }
      best = std::max(best, risk + cont);

      std::size_t r = nx;
      bool done = true;
      while (r > 0) {
        --r;
        if (++pick[r] < options[r].size()) {
          done = false;
          break;
        }
        pick[r] = 0;
      }
      if (done) break;
    }
    return best;
  }

 private:
  const Problem& p_;
};

}  // namespace

ValueTable brute_force_policy_search(const Problem& problem) {
  const std::size_t n = problem.grids().horizon;
  const std::size_t nb = problem.beliefs().size();
  const std::size_t nz = problem.energy().size();
  const double kernels = std::pow(static_cast<double>(problem.action_count()),
                                  static_cast<double>(problem.obs_count()));
  const double size = std::pow(kernels, static_cast<double>(n)) * static_cast<double>(nb * nz);
  if (size > 1e7) {
    std::ostringstream os;
    os << "instance too large for exhaustive search: " << kernels << " deterministic kernels, N = "
       << n << ", " << nb * nz << " grid points, size " << size << " > 1e7";
    throw std::length_error(os.str());
  }
  const BruteForce bf(problem);
  ValueTable v{n, nb, nz, std::vector<double>(n * nb * nz, 0.0)};
  for (std::size_t k = 1; k <= n; ++k)
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t z = 0; z < nz; ++z) v(k, b, z) = bf.value(k, b, z);
  return v;
}

void check_compatible(const PolicyTable& table, const Problem& problem) {
  PolicyTable want;
  want.horizon = problem.grids().horizon;
  want.belief_count = problem.beliefs().size();
  want.energy_count = problem.energy().size();
  want.obs_count = problem.obs_count();
  want.action_count = problem.action_count();
  if (table.shape() != want.shape())
    throw ShapeMismatch("policy shape " + table.shape() + " does not match configuration shape " +
                        want.shape());
  if (table.model_digest != problem.model().digest())
    throw IntegrityError("policy was synthesized for household model " + table.model_digest +
                         ", not " + problem.model().digest());
  if (table.ess_digest != problem.ess().digest())
    throw IntegrityError("policy was synthesized for ESS parameters " + table.ess_digest +
                         ", not " + problem.ess().digest());
}

}  // namespace ppsm::synthesis
