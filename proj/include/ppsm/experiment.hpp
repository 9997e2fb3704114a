#pragma once

// Experiment configuration and the staged pipeline behind the command line:
// estimate -> synthesize -> run -> attack -> report. Every stage reads and
// writes files under the output directory so stages can be rerun alone.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppsm/adversary.hpp"
#include "ppsm/ess.hpp"
#include "ppsm/household.hpp"
#include "ppsm/inference.hpp"
#include "ppsm/runtime.hpp"
#include "ppsm/synthesis.hpp"

namespace ppsm::experiment {

struct DataConfig {
  std::optional<std::filesystem::path> train_trace;       ///< labeled CSV; synthetic when absent
  std::optional<std::filesystem::path> validation_trace;  ///< labeled CSV; synthetic when absent
  std::size_t train_days = 30;
  std::size_t validation_days = 30;
  std::size_t slots_per_day = 60;
};

struct Seeds {
  std::uint64_t train = 1;
  std::uint64_t validation = 2;
  std::uint64_t optimizer = 3;
  std::uint64_t runtime = 4;
};

struct ExperimentConfig {
  ess::EssParams ess = ess::reference_params();
  /// "reference" for the built-in kettle model, otherwise a model file. It
  /// generates the synthetic traces.
  std::string source_model = "reference";
  /// Use this model for synthesis instead of estimating one from training data.
  std::optional<std::filesystem::path> model_file;
  std::size_t hypotheses = 2;
  double q = 500.0;
  double x_max = 1700.0;
  DataConfig data;
  synthesis::GridConfig grids;
  inference::CostMatrix costs = inference::CostMatrix::zero_one(2);
  std::vector<double> z0_fractions = {0.0, 0.25, 0.5, 0.75, 0.9, 1.0};
  Seeds seeds;
  synthesis::OptimizerConfig optimizer;
  adversary::AttackerConfig attacker;
  runtime::Mode mode = runtime::Mode::modal;
  std::filesystem::path output_dir = "out";

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Relative paths inside the document resolve against base_dir.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

struct Cardinalities {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;
  std::size_t pi = 0;
};

Cardinalities echo_cardinalities(const ExperimentConfig& c);

/// A failure inside one pipeline stage.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct ReportRow {
  std::string label;
  std::optional<double> z0_fraction;  ///< empty for the no-battery baseline
  double f_score = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0;
  double energy_loss_wh = 0.0;
  double ambr_total = 0.0;    ///< summed over every validation slot
  double ambr_per_day = 0.0;  ///< ambr_total / days
  double clip_rate = 0.0;     ///< clipped slots / slots
  double final_soc_mean = 0.0;
  std::string soc_file;       ///< relative to the output directory
};

struct ExperimentReport {
  std::size_t days = 0;
  std::size_t slots_per_day = 0;
  std::vector<ReportRow> rows;  ///< baseline first, then one per z0
  nlohmann::json echo;          ///< resolved config, model and cardinalities
};

nlohmann::json report_to_json(const ExperimentReport& r);

/// Label of a run directory under logs/, e.g. "z0_0.50", or "baseline".
std::string run_label(std::optional<double> z0_fraction);

// Individual stages. Each throws StageError.
void stage_estimate(const ExperimentConfig& c);
void stage_synthesize(const ExperimentConfig& c);
void stage_run(const ExperimentConfig& c);
void stage_attack(const ExperimentConfig& c);
ExperimentReport stage_report(const ExperimentConfig& c);

/// Stages in order; the name accepted by `until` is one of estimate,
/// synthesize, run, attack, report.
const std::vector<std::string>& stage_names();

/// Runs every stage (or up to `until`). On failure a STALE marker naming the
/// stage is left in the output directory; success removes it.
ExperimentReport run_experiment(const ExperimentConfig& c, const std::string& until = "report");

/// Parallel vs series wiring trials and the one-slot model divergence table.
nlohmann::json compare_ess(const ExperimentConfig& c, std::size_t trials, std::uint64_t seed);

}  // namespace ppsm::experiment
