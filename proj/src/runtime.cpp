#include "ppsm/runtime.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ppsm/error.hpp"
#include "ppsm/rng.hpp"

namespace ppsm::runtime {

Mode parse_mode(const std::string& s) {
  if (s == "modal" || s == "mode") return Mode::modal;
  if (s == "sample") return Mode::sample;
  throw std::invalid_argument("unknown mode '" + s + "' (expected modal or sample)");
}

std::string to_string(Mode m) { return m == Mode::modal ? "modal" : "sample"; }

double clip_action(double y_star, double x, double z, const ess::EssParams& params, double q) {
  const auto env = ess::state_bounds(ess::EssState{z}, params).snapped(q);
  if (y_star < x + env.d_lo) return x + env.d_lo;
  if (y_star > x + env.d_hi) return x + env.d_hi;
  return y_star;
}

ControlLog run_controller(const synthesis::PolicyTable& policy, const synthesis::Problem& problem,
                          const household::Trace& trace, double z0, const inference::Belief& pi0,
                          const RunOptions& options) {
  synthesis::check_compatible(policy, problem);
  if (trace.size() > policy.horizon)
    throw std::invalid_argument("trace of " + std::to_string(trace.size()) +
                                " slots exceeds the policy horizon " + std::to_string(policy.horizon));
  const auto& params = problem.ess();
  if (!(z0 >= 0.0 && z0 <= params.z_max))
    throw std::invalid_argument("initial energy must lie in [0, z_max]");
  pi0.validate();

  const auto& model = problem.model();
  const double q = problem.q();
  const std::size_t ny = problem.action_count();
  Rng rng(options.seed);

  ControlLog log;
  log.z0 = z0;
  log.steps.reserve(trace.size());
  inference::Belief pi = pi0;
  double z = z0;
  std::size_t x_prev = 0;
  for (std::size_t k = 1; k <= trace.size(); ++k) {
    const std::size_t b = problem.beliefs().project(pi);
    const std::size_t zi = problem.energy().project(z);
    const auto kernel = policy.kernel_matrix(k, b, zi);
    const auto row = kernel.row(x_prev);
    std::size_t pick = 0;
    if (options.mode == Mode::sample) {
      pick = rng.categorical(row);
    } else {
      for (std::size_t y = 1; y < ny; ++y)
        if (row[y] > row[pick]) pick = y;
    }

    ControlStep s;
    s.slot = k;
    s.x = household::quantize_power(trace.x_watts[k - 1], q, model.grid.x_max);
    const std::size_t xi = model.grid.index_of(s.x);
    s.y_star = policy.actions[pick];
    s.y = clip_action(s.y_star, s.x, z, params, q);
    s.clipped = s.y != s.y_star;
    s.d = s.y - s.x;
    s.loss = ess::energy_loss(ess::EssState{z}, s.d, params);
    s.z = ess::step(ess::EssState{z}, s.d, params).z;
    s.risk = synthesis::DpObjective(problem, b, zi, nullptr).risk(kernel).value;
    pi = inference::belief_update(pi, xi, model).belief;
    s.belief = pi;
    z = s.z;
    x_prev = xi;
    log.steps.push_back(std::move(s));
  }
  return log;
}

Summary summarize(const ControlLog& log, double z_max) {
  if (log.steps.empty()) throw std::invalid_argument("cannot summarize an empty control log");
  Summary s;
  for (const auto& st : log.steps) {
    s.total_loss += st.loss;
    s.clip_count += st.clipped;
    s.soc.push_back(st.z / z_max);
    s.ambr += st.risk;
  }
  s.final_z = log.steps.back().z;
  return s;
}

void save_log(const std::filesystem::path& path, const ControlLog& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write control log " + path.string());
  const std::size_t n = log.steps.empty() ? 0 : log.steps.front().belief.size();
  out << "slot,x,y_star,y,d,z,clipped,loss";
  for (std::size_t i = 0; i < n; ++i) out << ",belief_" << i;
  out << ",risk\n";
  // A slot-0 row carries z0 so the log is self-contained.
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "0,0,0,0,0," << num(log.z0) << ",0,0";
  for (std::size_t i = 0; i < n; ++i) out << ",";
  out << ",0\n";
  for (const auto& s : log.steps) {
    out << s.slot << ',' << num(s.x) << ',' << num(s.y_star) << ',' << num(s.y) << ',' << num(s.d)
        << ',' << num(s.z) << ',' << (s.clipped ? 1 : 0) << ',' << num(s.loss);
    for (double p : s.belief.probs) out << ',' << num(p);
    out << ',' << num(s.risk) << '\n';
  }
}

ControlLog load_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open control log " + path.string());
  std::string line;
  std::getline(in, line);
  std::size_t columns = 1;
  for (char c : line) columns += c == ',';
  if (line.rfind("slot,x,y_star,y,d,z,clipped,loss", 0) != 0 || columns < 9)
    throw ParseError("control log header not recognized", 1);
  const std::size_t nb = columns - 9;
  ControlLog log;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != columns) throw ParseError("control log row has the wrong column count", lineno);
    try {
      if (f[0] == "0") {
        log.z0 = std::stod(f[5]);
        continue;
      }
      ControlStep s;
      s.slot = std::stoul(f[0]);
      s.x = std::stod(f[1]);
      s.y_star = std::stod(f[2]);
      s.y = std::stod(f[3]);
      s.d = std::stod(f[4]);
      s.z = std::stod(f[5]);
      s.clipped = f[6] == "1";
      s.loss = std::stod(f[7]);
      for (std::size_t i = 0; i < nb; ++i) s.belief.probs.push_back(std::stod(f[8 + i]));
      s.risk = std::stod(f[8 + nb]);
      log.steps.push_back(std::move(s));
    } catch (const std::logic_error&) {
      throw ParseError("control log row is not numeric", lineno);
    }
  }
  return log;
}

}  // namespace ppsm::runtime
