#include "ppsm/adversary.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ppsm::adversary {

std::vector<EdgeEvent> extract_events(std::span<const double> y, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("event threshold must be positive");
  std::vector<EdgeEvent> out;
  for (std::size_t k = 1; k < y.size(); ++k) {
    const double d = y[k] - y[k - 1];
    if (std::abs(d) >= threshold) out.push_back({k, d});
  }
  return out;
}

void SignatureDb::validate() const {
  for (const auto& s : appliances) {
    if (!(s.on_delta_mean > 0.0 && s.off_delta_mean < 0.0))
      throw std::invalid_argument("signature for '" + s.name + "' needs on > 0 > off");
    if (!(s.tolerance > 0.0)) throw std::invalid_argument("signature for '" + s.name + "' needs a positive tolerance");
  }
}

namespace {

struct Moments {
  double n = 0.0, sum = 0.0, sq = 0.0;
  void add(double v) {
    n += 1.0;
    sum += v;
    sq += v * v;
  }
  double mean() const { return sum / n; }
  double sample_std() const {
    if (n < 2.0) return 0.0;
    return std::sqrt(std::max(0.0, (sq - sum * sum / n) / (n - 1.0)));
  }
};

}  // namespace

SignatureDb build_signatures(const household::Trace& labeled, double q, double threshold) {
  if (!labeled.h_labels) throw std::invalid_argument("signature training data must be labeled");
  const auto& h = *labeled.h_labels;
  std::size_t appliances = 0;
  for (auto v : h) appliances = std::max(appliances, v);
  if (!labeled.alphabet.empty()) appliances = std::max(appliances, labeled.alphabet.size() - 1);
  std::vector<Moments> on(appliances), off(appliances);
  std::vector<double> x(labeled.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = labeled.x_watts[k];
  for (std::size_t k = 1; k < h.size(); ++k) {
    if (h[k] == h[k - 1]) continue;
    const double d = x[k] - x[k - 1];
    if (std::abs(d) < threshold) continue;
    if (h[k] != 0 && d > 0.0) on[h[k] - 1].add(d);
    if (h[k - 1] != 0 && d < 0.0) off[h[k - 1] - 1].add(d);
  }
  SignatureDb db;
  for (std::size_t a = 0; a < appliances; ++a) {
    const std::string name = a + 1 < labeled.alphabet.size() ? labeled.alphabet[a + 1]
                                                             : "appliance " + std::to_string(a + 1);
    if (on[a].n == 0.0) throw std::invalid_argument("no ON transitions for appliance '" + name + "'");
    if (off[a].n == 0.0) throw std::invalid_argument("no OFF transitions for appliance '" + name + "'");
    const double spread = std::max(on[a].sample_std(), off[a].sample_std());
    db.appliances.push_back({name, on[a].mean(), off[a].mean(), std::max(q / 2.0, 2.0 * spread)});
  }
  return db;
}

Detection match_and_detect(std::span<const EdgeEvent> events, const SignatureDb& db,
                           std::size_t length) {
  Detection out;
  std::vector<long> open(db.appliances.size(), -1);
  for (const auto& e : events) {
    Assignment a{e, -1, false};
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < db.appliances.size(); ++i) {
      const auto& s = db.appliances[i];
      const double d_on = std::abs(e.delta - s.on_delta_mean);
      const double d_off = std::abs(e.delta - s.off_delta_mean);
      const double d = std::min(d_on, d_off);
      if (d > s.tolerance || d >= best) continue;
      best = d;
      a.appliance = static_cast<int>(i);
      a.on = d_on <= d_off;
    }
    if (a.appliance >= 0) {
      auto& slot = open[static_cast<std::size_t>(a.appliance)];
      if (a.on && slot < 0) {
        slot = static_cast<long>(e.slot);
      } else if (!a.on && slot >= 0) {
        out.intervals.push_back({static_cast<std::size_t>(a.appliance), static_cast<std::size_t>(slot), e.slot});
        slot = -1;
      }
    }
    out.assignments.push_back(a);
  }
  for (std::size_t i = 0; i < open.size(); ++i)
    if (open[i] >= 0) out.intervals.push_back({i, static_cast<std::size_t>(open[i]), length});
  return out;
}

std::vector<Interval> truth_intervals(std::span<const std::size_t> labels) {
  std::vector<Interval> out;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] == 0 || (k > 0 && labels[k - 1] == labels[k])) continue;
    std::size_t end = k + 1;
    while (end < labels.size() && labels[end] == labels[k]) ++end;
    out.push_back({labels[k] - 1, k, end});
  }
  return out;
}

double f_score(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp == 0) return fp + fn == 0 ? 1.0 : 0.0;
  return 1.0 / (1.0 + static_cast<double>(fn + fp) / (2.0 * static_cast<double>(tp)));
}

DetectionReport score(std::span<const Interval> detected, std::span<const Interval> truth,
                      std::size_t slot_tolerance) {
  DetectionReport r;
  std::vector<bool> used(truth.size(), false);
  for (std::size_t i = 0; i < detected.size(); ++i) {
    std::size_t best = truth.size();
    std::size_t best_gap = slot_tolerance + 1;
    for (std::size_t j = 0; j < truth.size(); ++j) {
      if (used[j] || truth[j].appliance != detected[i].appliance) continue;
      const std::size_t gap = detected[i].start > truth[j].start ? detected[i].start - truth[j].start
                                                                 : truth[j].start - detected[i].start;
      if (gap < best_gap) {
        best_gap = gap;
        best = j;
      }
    }
    if (best < truth.size()) {
      used[best] = true;
      r.matches.emplace_back(i, best);
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = truth.size() - r.tp;
  r.f_score = f_score(r.tp, r.fp, r.fn);
  return r;
}

nlohmann::json to_json(const SignatureDb& db) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& s : db.appliances)
    a.push_back({{"name", s.name},
                 {"on_delta_mean", s.on_delta_mean},
                 {"off_delta_mean", s.off_delta_mean},
                 {"tolerance", s.tolerance}});
  return {{"appliances", a}};
}

SignatureDb signatures_from_json(const nlohmann::json& j) {
  SignatureDb db;
  for (const auto& s : j.at("appliances"))
    db.appliances.push_back({s.at("name").get<std::string>(), s.at("on_delta_mean").get<double>(),
                             s.at("off_delta_mean").get<double>(), s.at("tolerance").get<double>()});
  db.validate();
  return db;
}

nlohmann::json to_json(const DetectionReport& r) {
  nlohmann::json m = nlohmann::json::array();
  for (const auto& [d, t] : r.matches) m.push_back({d, t});
  return {{"tp", r.tp}, {"fp", r.fp}, {"fn", r.fn}, {"f_score", r.f_score}, {"matches", m}};
}

nlohmann::json to_json(const Detection& d) {
  nlohmann::json iv = nlohmann::json::array();
  for (const auto& i : d.intervals) iv.push_back({{"appliance", i.appliance}, {"start", i.start}, {"end", i.end}});
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& a : d.assignments)
    ev.push_back({{"slot", a.event.slot}, {"delta", a.event.delta}, {"appliance", a.appliance},
                  {"edge", a.appliance < 0 ? "none" : (a.on ? "on" : "off")}});
  return {{"intervals", iv}, {"events", ev}};
}

}  // namespace ppsm::adversary
