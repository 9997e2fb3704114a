#pragma once

// Appliance hypothesis chain, quantized power observations, estimation from
// labeled traces, synthetic trace generation and CSV ingestion.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppsm/matrix.hpp"

namespace ppsm::household {

/// Meter power grid {0, q, 2q, ..., floor(x_max/q)*q}.
struct PowerGrid {
  double q = 500.0;
  double x_max = 1700.0;

  std::size_t size() const;
  double value(std::size_t i) const { return static_cast<double>(i) * q; }
  double top() const { return value(size() - 1); }
  /// Index of an exact grid value; throws std::out_of_range for off-grid input.
  std::size_t index_of(double grid_value) const;
  std::vector<double> values() const;
};

/// Nearest multiple of q (ties up), clamped to the top of the grid.
double quantize_power(double watts, double q, double x_max);

struct HouseholdModel {
  std::vector<std::string> names;  ///< hypothesis names, index 0 = all appliances off
  std::vector<double> prior;
  Matrix transition;  ///< transition(i, j) = P(H_k = i | H_{k-1} = j)
  Matrix emission;    ///< emission(x, h) = P(X_k = grid[x] | H_k = h)
  PowerGrid grid;

  std::size_t hypothesis_count() const { return prior.size(); }
  std::size_t observation_count() const { return emission.rows(); }

  /// Throws std::invalid_argument when shapes disagree or a distribution is
  /// not normalized within 1e-9.
  void validate() const;
  std::string digest() const;
};

/// Builds a model from printed tables. Columns (and the prior) whose mass is
/// within [0.4, 1.05] are rescaled to unit mass; anything else is rejected.
HouseholdModel model_from_tables(std::vector<double> prior, Matrix transition, Matrix emission,
                                 PowerGrid grid, std::vector<std::string> names = {});

/// Binary kettle model: pi0 = [0.95, 0.05], P(H_k|H_{k-1}) = [[0.98, 0.34],
/// [0.02, 0.65]], P(X|OFF) = [1, 0, 0, 0], P(X|ON) ~ [0, 0.17, 0.14, 0.17],
/// on the q = 500 W, x_max = 1700 W grid, renormalized.
HouseholdModel reference_model();

struct Trace {
  std::vector<std::size_t> slots;
  std::vector<double> x_watts;
  std::optional<std::vector<std::size_t>> h_labels;
  std::vector<std::string> alphabet;  ///< label names, when known

  std::size_t size() const { return x_watts.size(); }
  void validate() const;
  /// Contiguous slice [begin, begin + n).
  Trace slice(std::size_t begin, std::size_t n) const;
};

/// Laplace-smoothed (pseudocount 1) estimates of the chain and the emission
/// matrix from a labeled trace. With day_length > 0 the trace is treated as
/// consecutive days: transitions never cross a day boundary and the prior is
/// the distribution of first-slot labels; otherwise the prior is the label
/// frequency.
HouseholdModel estimate_model(const Trace& labeled, const PowerGrid& grid,
                              std::size_t hypothesis_count, std::size_t day_length = 0);

/// Forward simulation: labels from prior/transition, watts from emission.
Trace sample_trace(const HouseholdModel& model, std::size_t n, std::uint64_t seed);

/// `days` independent traces of `slots_per_day`, each starting from the prior.
std::vector<Trace> sample_days(const HouseholdModel& model, std::size_t days,
                               std::size_t slots_per_day, std::uint64_t seed);

/// Concatenates traces, renumbering slots consecutively.
Trace concatenate(const std::vector<Trace>& parts);

struct TraceSchema {
  /// Names accepted in a symbolic label column (case-insensitive).
  std::vector<std::string> alphabet = {"OFF", "ON"};
};

/// CSV with optional header `slot,watts[,label]`. Headerless files may hold
/// one column (watts), two (slot,watts) or three (slot,watts,label).
Trace load_trace(const std::filesystem::path& path, const TraceSchema& schema = {});
void save_trace(const std::filesystem::path& path, const Trace& trace);

/// One label name per line.
std::vector<std::string> load_alphabet(const std::filesystem::path& path);

nlohmann::json model_to_json(const HouseholdModel& model);
HouseholdModel model_from_json(const nlohmann::json& j);
HouseholdModel load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const HouseholdModel& model);

}  // namespace ppsm::household
