#pragma once

// Edge-based load monitoring attacker: switching events from the meter
// series, appliance signatures learned from labeled data, nearest-signature
// assignment and onset-matched detection scoring.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ppsm/household.hpp"

namespace ppsm::adversary {

struct EdgeEvent {
  std::size_t slot = 0;  ///< index of the reading after the change
  double delta = 0.0;    ///< y[slot] - y[slot-1] (W)
};

/// Every slot whose step from the previous reading is at least `threshold`.
std::vector<EdgeEvent> extract_events(std::span<const double> y, double threshold);

struct Signature {
  std::string name;
  double on_delta_mean = 0.0;
  double off_delta_mean = 0.0;
  double tolerance = 0.0;
};

struct SignatureDb {
  std::vector<Signature> appliances;
  void validate() const;
};

/// One signature per appliance hypothesis (every label except 0). Means are
/// taken over the label transitions into and out of the appliance state whose
/// step clears `threshold`; the tolerance is max(q/2, 2 * sample std).
/// Throws std::invalid_argument naming an appliance with no ON or no OFF edge.
SignatureDb build_signatures(const household::Trace& labeled, double q, double threshold);

struct Interval {
  std::size_t appliance = 0;  ///< index into the signature db
  std::size_t start = 0;      ///< first slot
  std::size_t end = 0;        ///< one past the last slot
};

struct Assignment {
  EdgeEvent event;
  int appliance = -1;  ///< -1 when out of every tolerance
  bool on = false;
};

struct Detection {
  std::vector<Interval> intervals;
  std::vector<Assignment> assignments;
};

/// Assigns each event to the nearest signature edge (ties to the lower
/// appliance index) when within tolerance. ON edges open an interval for
/// their appliance, the next OFF edge of that appliance closes it, and
/// intervals still open close at `length`.
Detection match_and_detect(std::span<const EdgeEvent> events, const SignatureDb& db,
                           std::size_t length);

/// ON intervals of each appliance in a label sequence (appliance index = label - 1).
std::vector<Interval> truth_intervals(std::span<const std::size_t> labels);

struct DetectionReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double f_score = 1.0;
  std::vector<std::pair<std::size_t, std::size_t>> matches;  ///< (detected, truth) indices
};

/// 1 / (1 + (fn + fp) / (2 tp)); 0 when tp = 0 and anything was missed or
/// invented; 1 when there was nothing to find and nothing was found.
double f_score(std::size_t tp, std::size_t fp, std::size_t fn);

/// Greedy onset matching in detection order: each detection takes the nearest
/// unmatched truth onset of the same appliance within slot_tolerance.
DetectionReport score(std::span<const Interval> detected, std::span<const Interval> truth,
                      std::size_t slot_tolerance);

struct AttackerConfig {
  double threshold = 250.0;
  std::size_t slot_tolerance = 1;
};

nlohmann::json to_json(const SignatureDb& db);
SignatureDb signatures_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DetectionReport& r);
nlohmann::json to_json(const Detection& d);

}  // namespace ppsm::adversary
