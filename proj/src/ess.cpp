#include "ppsm/ess.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ppsm/digest.hpp"
#include "ppsm/error.hpp"

namespace ppsm::ess {

namespace {

constexpr double kHoursPerMonth = 720.0;

// DC terminal power that drives current i through the series resistance.
double terminal_power(double i, const EssParams& p) { return p.v_oc * i + p.r_internal * i * i; }

// Residue allowed on the capacity clamp; anything larger is a real violation.
double capacity_residue(const EssParams& p) { return 1e-9 * p.z_max; }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void EssParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("invalid ESS parameters: ") + what);
  };
  require(eta_c > 0.0 && eta_c <= 1.0, "eta_c must lie in (0, 1]");
  require(eta_d > 0.0 && eta_d <= 1.0, "eta_d must lie in (0, 1]");
  require(gamma_step >= 0.0 && gamma_step < 1.0, "gamma_step must lie in [0, 1)");
  require(r_internal >= 0.0, "r_internal must be non-negative");
  require(v_oc > 0.0, "v_oc must be positive");
  require(z_max > 0.0, "z_max must be positive");
  require(dt > 0.0, "dt must be positive");
  require(beta > 0.0 && beta <= dt * (1.0 + 1e-12), "beta must lie in (0, dt]");
  require(i_max >= 0.0 && i_min_mag >= 0.0, "current limits must be non-negative");
}

std::string EssParams::digest() const {
  Digest d;
  d.str("ess/v1");
  for (double v : {v_oc, r_internal, eta_c, eta_d, gamma_step, beta, i_max, i_min_mag, z_max, dt})
    d.f64(v);
  return d.hex();
}

ActionBounds ActionBounds::snapped(double q) const {
  // A relative nudge keeps exact multiples that picked up rounding residue.
  const double lo = std::ceil(d_lo / q - 1e-9) * q;
  const double hi = std::floor(d_hi / q + 1e-9) * q;
  return {std::min(0.0, lo), std::max(0.0, hi)};
}

StepParams derive_step_params(double gamma_month, double dt_hours) {
  if (!(gamma_month >= 0.0 && gamma_month < 1.0))
    throw std::invalid_argument("gamma_month must lie in [0, 1), got " + fmt(gamma_month));
  if (!(dt_hours > 0.0)) throw std::invalid_argument("dt must be positive, got " + fmt(dt_hours));
  const double gamma = -std::expm1((dt_hours / kHoursPerMonth) * std::log1p(-gamma_month));
  if (gamma == 0.0) return {0.0, dt_hours};
  return {gamma, -gamma * dt_hours / std::log1p(-gamma)};
}

StepParams step_params_from_rc(double rc_hours, double dt_hours) {
  if (!(rc_hours > 0.0)) throw std::invalid_argument("RC product must be positive");
  if (!(dt_hours > 0.0)) throw std::invalid_argument("dt must be positive");
  const double gamma = -std::expm1(-dt_hours / rc_hours);
  if (gamma == 0.0) return {0.0, dt_hours};
  return {gamma, -gamma * dt_hours / std::log1p(-gamma)};
}

double battery_current(double p, const EssParams& params) {
  const double v = params.v_oc;
  const double r = params.r_internal;
  const double radicand = v * v + 4.0 * r * p;
  if (radicand < 0.0)
    throw InfeasibleAction("terminal power " + fmt(p) + " W exceeds the deliverable discharge power " +
                           fmt(-v * v / (4.0 * r)) + " W");
  // Rationalized form of (sqrt(v^2 + 4rp) - v) / 2r; exact at r = 0 and free
  // of cancellation for small r.
  return 2.0 * p / (std::sqrt(radicand) + v);
}

double converter_factor(double d, const EssParams& params) {
  return d >= 0.0 ? params.eta_c : 1.0 / params.eta_d;
}

double converter_power(double d, const EssParams& params) { return d * converter_factor(d, params); }

namespace {

double stored_increment(double d, const EssParams& params) {
  return params.beta * params.v_oc * battery_current(converter_power(d, params), params);
}

EssState settle(double z_next, const EssParams& params, double d) {
  const double tol = capacity_residue(params);
  if (z_next < -tol || z_next > params.z_max + tol)
    throw InfeasibleAction("action " + fmt(d) + " W drives stored energy to " + fmt(z_next) +
                           " Wh outside [0, " + fmt(params.z_max) + "]");
  return {std::clamp(z_next, 0.0, params.z_max)};
}

}  // namespace

EssState step(EssState state, double d, const EssParams& params) {
  const ActionBounds env = state_bounds(state, params);
  if (!env.contains(d))
    throw InfeasibleAction("action " + fmt(d) + " W outside envelope [" + fmt(env.d_lo) + ", " +
                           fmt(env.d_hi) + "] at z = " + fmt(state.z) + " Wh");
  const double z_next = (1.0 - params.gamma_step) * state.z + stored_increment(d, params);
  return settle(z_next, params, d);
}

EssState ideal_step(EssState state, double d, double dt, double z_max) {
  const double z_next = state.z + d * dt;
  const double tol = std::isfinite(z_max) ? 1e-9 * z_max : 0.0;
  if (z_next < -tol || z_next > z_max + tol)
    throw InfeasibleAction("action " + fmt(d) + " W drives ideal store to " + fmt(z_next) + " Wh");
  return {std::clamp(z_next, 0.0, z_max)};
}

double energy_loss(EssState state, double d, const EssParams& params) {
  return state.z + d * params.dt - step(state, d, params).z;
}

ActionBounds rate_bounds(const EssParams& params) {
  double discharge_current = params.i_min_mag;
  if (params.r_internal > 0.0)
    discharge_current = std::min(discharge_current, params.v_oc / (2.0 * params.r_internal));
  // Converter roles as printed in the source model: eta_d on the charge
  // limit, eta_c on the discharge limit.
  const double hi = terminal_power(params.i_max, params) / params.eta_d;
  const double lo = params.eta_c * terminal_power(-discharge_current, params);
  return {std::min(0.0, lo), std::max(0.0, hi)};
}

ActionBounds state_bounds(EssState state, const EssParams& params) {
  const double retained = (1.0 - params.gamma_step) * state.z;
  const double scale = params.beta * params.v_oc;

  // Largest admissible charge current fills the store exactly.
  const double i_fill = std::max(0.0, params.z_max - retained) / scale;
  // Largest admissible discharge current empties it, limited by the
  // radicand (the [x]^+ clamp).
  double i_drain = -retained / scale;
  if (params.r_internal > 0.0)
    i_drain = std::max(i_drain, -params.v_oc / (2.0 * params.r_internal));

  const double cap_hi = terminal_power(i_fill, params) / params.eta_c;
  const double cap_lo = terminal_power(i_drain, params) * params.eta_d;

  const ActionBounds rate = rate_bounds(params);
  return {std::min(0.0, std::max(rate.d_lo, cap_lo)), std::max(0.0, std::min(rate.d_hi, cap_hi))};
}

std::vector<double> feasible_actions(EssState state, const EssParams& params,
                                     std::span<const double> action_grid) {
  const ActionBounds env = state_bounds(state, params);
  std::vector<double> out;
  for (double d : action_grid)
    if (d == 0.0 || env.contains(d)) out.push_back(d);
  return out;
}

namespace {

// Series wiring: the grid draw y enters through the charger, the house
// demand x leaves through the inverter, the battery carries the difference.
EssState series_step(EssState state, double x, double y, const EssParams& params) {
  const double p = converter_power(y, params) - x / params.eta_d;
  const double i = battery_current(p, params);
  if (i > params.i_max * (1.0 + 1e-12) || -i > params.i_min_mag * (1.0 + 1e-12))
    throw InfeasibleAction("series battery current " + fmt(i) + " A exceeds the current limits");
  const double z_next = (1.0 - params.gamma_step) * state.z + params.beta * params.v_oc * i;
  return settle(z_next, params, y - x);
}

}  // namespace

ConfigurationLosses compare_configurations(std::span<const double> demand, const EssParams& params,
                                           std::span<const double> policy, double z0) {
  if (demand.size() != policy.size())
    throw std::invalid_argument("demand and policy lengths differ");
  ConfigurationLosses out;
  EssState parallel{z0};
  EssState series{z0};
  for (std::size_t k = 0; k < demand.size(); ++k) {
    const double x = demand[k];
    const double d = policy[k];
    if (x < 0.0) throw std::invalid_argument("negative demand at step " + std::to_string(k));
    try {
      const EssState p_next = step(parallel, d, params);
      out.parallel += parallel.z + d * params.dt - p_next.z;
      parallel = p_next;
    } catch (const InfeasibleAction& e) {
      throw InfeasibleAction("parallel wiring, step " + std::to_string(k) + ": " + e.what());
    }
    try {
      const EssState s_next = series_step(series, x, x + d, params);
      out.series += series.z + d * params.dt - s_next.z;
      series = s_next;
    } catch (const InfeasibleAction& e) {
      throw InfeasibleAction("series wiring, step " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DivergenceRow> model_divergence(double z, std::span<const double> actions,
                                            const EssParams& params) {
  std::vector<DivergenceRow> rows;
  rows.reserve(actions.size());
  const EssState s{z};
  for (double d : actions) {
    const double lossy = step(s, d, params).z - z;
    const double ideal = ideal_step(s, d, params.dt, params.z_max).z - z;
    rows.push_back({d, 100.0 * lossy / params.z_max, 100.0 * ideal / params.z_max});
  }
  return rows;
}

EssParams params_from_json(const nlohmann::json& j) {
  static const char* keys[] = {"v_oc_volts", "r_ohms",     "eta_c",       "eta_d",     "gamma_per_month",
                               "i_max_amps", "i_min_amps", "capacity_ah", "dt_seconds"};
  if (!j.is_object()) throw ParseError("ESS parameters must be a key/value object");
  for (const char* k : keys)
    if (!j.contains(k) || !j.at(k).is_number())
      throw ParseError(std::string("ESS parameters: missing numeric key '") + k + "'");
  for (const auto& [k, v] : j.items()) {
    bool known = k == "rc_hours";
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ParseError("ESS parameters: unknown key '" + k + "'");
  }

  EssParams p;
  p.v_oc = j.at("v_oc_volts").get<double>();
  p.r_internal = j.at("r_ohms").get<double>();
  p.eta_c = j.at("eta_c").get<double>();
  p.eta_d = j.at("eta_d").get<double>();
  p.i_max = j.at("i_max_amps").get<double>();
  p.i_min_mag = std::abs(j.at("i_min_amps").get<double>());
  p.z_max = p.v_oc * j.at("capacity_ah").get<double>();
  p.dt = j.at("dt_seconds").get<double>() / 3600.0;
  p.gamma_month = j.at("gamma_per_month").get<double>();

  StepParams sp{};
  if (j.contains("rc_hours")) {
    p.rc_product = j.at("rc_hours").get<double>();
    sp = step_params_from_rc(*p.rc_product, p.dt);
  } else {
    sp = derive_step_params(*p.gamma_month, p.dt);
  }
  p.gamma_step = sp.gamma_step;
  p.beta = sp.beta;
  p.validate();
  return p;
}

nlohmann::json params_to_json(const EssParams& p) {
  nlohmann::json j = {
      {"v_oc_volts", p.v_oc},
      {"r_ohms", p.r_internal},
      {"eta_c", p.eta_c},
      {"eta_d", p.eta_d},
      {"gamma_per_month",
       p.gamma_month.value_or(-std::expm1((kHoursPerMonth / p.dt) * std::log1p(-p.gamma_step)))},
      {"i_max_amps", p.i_max},
      {"i_min_amps", p.i_min_mag},
      {"capacity_ah", p.z_max / p.v_oc},
      {"dt_seconds", p.dt * 3600.0},
  };
  if (p.rc_product) j["rc_hours"] = *p.rc_product;
  return j;
}

EssParams reference_params() {
  EssParams p;
  p.v_oc = 12.0;
  p.r_internal = 0.006;
  p.eta_c = p.eta_d = 0.95;
  p.i_max = p.i_min_mag = 80.0;
  p.z_max = 12.0 * 100.0;
  p.dt = 60.0 / 3600.0;
  p.gamma_month = 0.03;
  const StepParams sp = derive_step_params(0.03, p.dt);
  p.gamma_step = sp.gamma_step;
  p.beta = sp.beta;
  return p;
}

EssParams load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ESS parameter file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("ESS parameter file " + path.string() + ": " + e.what());
  }
  return params_from_json(j);
}

}  // namespace ppsm::ess
