#pragma once

// The real-time controller: kernel lookup at the projected state, clipping
// against the live envelope, belief tracking and continuous ESS propagation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppsm/ess.hpp"
#include "ppsm/household.hpp"
#include "ppsm/inference.hpp"
#include "ppsm/synthesis.hpp"

namespace ppsm::runtime {

enum class Mode { modal, sample };
Mode parse_mode(const std::string& s);
std::string to_string(Mode m);

/// Meter output after clipping the requested y_star into
/// [x + d_lo, x + d_hi], the envelope at continuous z snapped inward to q.
double clip_action(double y_star, double x, double z, const ess::EssParams& params, double q);

struct ControlStep {
  std::size_t slot = 0;
  double x = 0.0;       ///< quantized demand (W)
  double y_star = 0.0;  ///< requested output (W)
  double y = 0.0;       ///< meter output after the clip (W)
  double d = 0.0;       ///< battery action y - x (W)
  double z = 0.0;       ///< stored energy after the slot (Wh)
  bool clipped = false;
  double loss = 0.0;    ///< energy lost against the lossless model (Wh)
  inference::Belief belief;  ///< belief after observing x
  double risk = 0.0;    ///< clip-aware stage risk of the kernel used
};

struct ControlLog {
  double z0 = 0.0;
  std::vector<ControlStep> steps;
};

struct RunOptions {
  Mode mode = Mode::modal;
  std::uint64_t seed = 0;  ///< used by Mode::sample
};

/// Runs the stored policy over a demand trace. The kernel at slot k is read at
/// (projected pi_{k-1}, projected z_{k-1}) in the row of the previous quantized
/// reading, with x_0 = 0. Throws std::invalid_argument when the trace is
/// longer than the policy horizon and IntegrityError/ShapeMismatch when the
/// policy does not belong to the problem.
ControlLog run_controller(const synthesis::PolicyTable& policy, const synthesis::Problem& problem,
                          const household::Trace& trace, double z0, const inference::Belief& pi0,
                          const RunOptions& options = {});

struct Summary {
  double total_loss = 0.0;
  std::size_t clip_count = 0;
  std::vector<double> soc;  ///< z_k / z_max after each slot
  double final_z = 0.0;
  double ambr = 0.0;
};

Summary summarize(const ControlLog& log, double z_max);

/// CSV with header slot,x,y_star,y,d,z,clipped,loss,belief_0..belief_{n-1},risk.
void save_log(const std::filesystem::path& path, const ControlLog& log);
ControlLog load_log(const std::filesystem::path& path);

}  // namespace ppsm::runtime
