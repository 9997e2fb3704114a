#pragma once

// Three-circuit energy storage model: RC self-dissipation, internal series
// resistance and constant-efficiency power converters, plus the lossless
// reference model and the admissible-power envelopes.
//
// Units throughout: hours, W, Wh, A, V, ohm. Negative power is discharge.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ppsm::ess {

struct EssParams {
  double v_oc = 12.0;          ///< open-circuit voltage (V)
  double r_internal = 0.006;   ///< series resistance (ohm)
  double eta_c = 0.95;         ///< AC->DC (charging) converter efficiency
  double eta_d = 0.95;         ///< DC->AC (discharging) converter efficiency
  double gamma_step = 0.0;     ///< self-discharge fraction per slot
  double beta = 1.0 / 60.0;    ///< charge-integration coefficient (h)
  double i_max = 80.0;         ///< max charge current (A)
  double i_min_mag = 80.0;     ///< max discharge current magnitude (A)
  double z_max = 1200.0;       ///< capacity (Wh)
  double dt = 1.0 / 60.0;      ///< slot length (h)
  std::optional<double> rc_product;   ///< R*C (h), only used to derive gamma_step
  std::optional<double> gamma_month;  ///< source monthly self-discharge, when loaded from file

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  /// Digest over every field that influences the dynamics.
  std::string digest() const;
};

struct EssState {
  double z = 0.0;  ///< stored energy (Wh)
};

/// Admissible AC-side battery power interval, d_lo <= 0 <= d_hi.
struct ActionBounds {
  double d_lo = 0.0;
  double d_hi = 0.0;

  bool contains(double d, double tol = 1e-9) const {
    return d >= d_lo - tol * std::max(1.0, -d_lo) && d <= d_hi + tol * std::max(1.0, d_hi);
  }
  /// Shrinks both ends toward zero onto multiples of q.
  ActionBounds snapped(double q) const;
};

struct StepParams {
  double gamma_step;
  double beta;
};

/// Per-slot self-discharge and integration coefficient from a monthly
/// (30-day) self-discharge fraction, compounding geometrically.
StepParams derive_step_params(double gamma_month, double dt_hours);

/// Same from an explicit RC time constant: gamma = 1 - exp(-dt/RC).
StepParams step_params_from_rc(double rc_hours, double dt_hours);

/// Current into the battery for DC terminal power p (A).
double battery_current(double p, const EssParams& params);

/// Direction-dependent converter multiplier: eta_c for d >= 0, 1/eta_d otherwise.
double converter_factor(double d, const EssParams& params);

/// DC power at the battery terminals for AC-side demand d.
double converter_power(double d, const EssParams& params);

/// One slot of the three-circuit model. Throws InfeasibleAction when d is
/// outside state_bounds(state).
EssState step(EssState state, double d, const EssParams& params);

/// Lossless reference: z + d*dt. Throws InfeasibleAction if the result
/// leaves [0, z_max].
EssState ideal_step(EssState state, double d, double dt,
                    double z_max = std::numeric_limits<double>::infinity());

/// Energy lost relative to the lossless model over one slot (Wh).
double energy_loss(EssState state, double d, const EssParams& params);

/// Current-limited envelope.
ActionBounds rate_bounds(const EssParams& params);

/// Current- and capacity-limited envelope at the given energy state.
ActionBounds state_bounds(EssState state, const EssParams& params);

/// Grid actions admissible at `state`; always includes 0 when the grid does.
std::vector<double> feasible_actions(EssState state, const EssParams& params,
                                     std::span<const double> action_grid);

struct ConfigurationLosses {
  double parallel = 0.0;
  double series = 0.0;
};

/// Accumulated losses of one control sequence applied to the same demand in
/// the parallel wiring (only the battery action crosses the converters) and
/// in the series wiring (the whole grid draw crosses the charger and the
/// whole house demand crosses the inverter). Both runs start at z0.
ConfigurationLosses compare_configurations(std::span<const double> demand,
                                           const EssParams& params,
                                           std::span<const double> policy, double z0);

struct DivergenceRow {
  double d;
  double soc_change_three_circuit;  ///< percent of z_max
  double soc_change_ideal;          ///< percent of z_max
  double difference() const { return std::abs(soc_change_ideal - soc_change_three_circuit); }
};

/// Per-action one-slot SOC change under both models.
std::vector<DivergenceRow> model_divergence(double z, std::span<const double> actions,
                                            const EssParams& params);

/// Parameter file keys: v_oc_volts, r_ohms, eta_c, eta_d, gamma_per_month,
/// i_max_amps, i_min_amps, capacity_ah, dt_seconds.
EssParams params_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const EssParams& p);
EssParams load_params(const std::filesystem::path& path);

/// 12 V / 100 Ah lithium-ion pack with 60 s slots, 3 %/month self-discharge,
/// 95 % converters, 80 A current limits and 6 mOhm series resistance.
EssParams reference_params();

}  // namespace ppsm::ess
