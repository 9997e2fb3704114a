#include "ppsm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ppsm/error.hpp"
#include "ppsm/rng.hpp"

namespace ppsm::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ParseError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing " + path.string() + " (run the earlier stage first)");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

template <class F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

household::HouseholdModel source_model(const ExperimentConfig& c) {
  if (c.source_model == "reference") return household::reference_model();
  return household::load_model(c.source_model);
}

household::Trace labeled_trace(const fs::path& path, const std::vector<std::string>& names) {
  household::TraceSchema schema;
  if (!names.empty()) schema.alphabet = names;
  auto t = household::load_trace(path, schema);
  if (!t.h_labels) throw std::invalid_argument(path.string() + " has no label column");
  if (t.alphabet.empty()) t.alphabet = names;
  return t;
}

std::vector<household::Trace> split_days(const household::Trace& t, std::size_t slots) {
  if (t.size() % slots != 0)
    throw std::invalid_argument("trace of " + std::to_string(t.size()) + " slots is not a whole number of " +
                                std::to_string(slots) + "-slot days");
  std::vector<household::Trace> days;
  for (std::size_t b = 0; b < t.size(); b += slots) days.push_back(t.slice(b, slots));
  return days;
}

fs::path data_dir(const ExperimentConfig& c) { return c.output_dir / "data"; }

std::vector<household::Trace> validation_days(const ExperimentConfig& c,
                                              const household::HouseholdModel& model) {
  auto t = labeled_trace(data_dir(c) / "validation.csv", model.names);
  return split_days(t, c.data.slots_per_day);
}

household::HouseholdModel synthesis_model(const ExperimentConfig& c) {
  return household::load_model(c.output_dir / "model.json");
}

synthesis::Problem make_problem(const ExperimentConfig& c, household::HouseholdModel model) {
  return synthesis::Problem(std::move(model), c.ess, c.costs, c.grids);
}

std::vector<std::optional<double>> run_rows(const ExperimentConfig& c) {
  std::vector<std::optional<double>> rows{std::nullopt};
  for (double f : c.z0_fractions) rows.emplace_back(f);
  return rows;
}

std::string day_file(std::size_t d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "day_%02zu.csv", d);
  return buf;
}

/// The grid-visible trace without storage: y = x, and the adversary's risk
/// is that of reading x_k directly under the filtered belief.
runtime::ControlLog baseline_log(const household::Trace& day, const household::HouseholdModel& model,
                                 const inference::CostMatrix& costs) {
  runtime::ControlLog log;
  inference::Belief pi{model.prior};
  for (std::size_t k = 1; k <= day.size(); ++k) {
    runtime::ControlStep s;
    s.slot = k;
    s.x = household::quantize_power(day.x_watts[k - 1], model.grid.q, model.grid.x_max);
    s.y_star = s.x;
    s.y = s.x;
    s.risk = inference::direct_observation_risk(pi, model, costs);
    pi = inference::belief_update(pi, model.grid.index_of(s.x), model).belief;
    s.belief = pi;
    log.steps.push_back(std::move(s));
  }
  return log;
}

}  // namespace

// ---- configuration --------------------------------------------------------

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  ess.validate();
  if (!(q > 0.0)) fail("q must be positive");
  if (!(x_max >= q)) fail("x_max must be at least q");
  if (hypotheses < 2) fail("hypotheses must be at least 2");
  if (!(grids.e > 0.0)) fail("grids.e must be positive");
  if (grids.horizon < 1) fail("grids.horizon must be at least 1");
  if (grids.belief_resolution < 2) fail("grids.belief_resolution must be at least 2");
  if (!(grids.d_grid_min <= 0.0 && grids.d_grid_max >= 0.0)) fail("grids must contain d = 0");
  if (data.slots_per_day < 1) fail("data.slots_per_day must be at least 1");
  if (data.slots_per_day > grids.horizon) fail("data.slots_per_day exceeds grids.horizon");
  if (!data.train_trace && data.train_days < 1) fail("data.train_days must be at least 1");
  if (!data.validation_trace && data.validation_days < 1) fail("data.validation_days must be at least 1");
  if (costs.c.rows() != hypotheses || costs.c.cols() != hypotheses)
    fail("costs must be " + std::to_string(hypotheses) + "x" + std::to_string(hypotheses));
  costs.validate();
  for (double f : z0_fractions)
    if (!(f >= 0.0 && f <= 1.0)) fail("z0_fractions must lie in [0, 1]");
  std::set<std::string> labels;
  for (double f : z0_fractions)
    if (!labels.insert(run_label(f)).second) fail("z0_fractions repeat " + run_label(f));
  if (!(attacker.threshold > 0.0)) fail("attacker.threshold must be positive");
  if (optimizer.iterations < 1 && optimizer.starts > 0) fail("optimizer.iterations must be at least 1");
  // Training and validation must not share data.
  if (data.train_trace && data.validation_trace) {
    std::error_code ec;
    if (*data.train_trace == *data.validation_trace ||
        fs::equivalent(*data.train_trace, *data.validation_trace, ec))
      fail("training and validation traces are the same file");
  } else if (!data.train_trace && !data.validation_trace && seeds.train == seeds.validation) {
    fail("seeds.train and seeds.validation must differ");
  }
}

ExperimentConfig config_from_json(const json& j, const fs::path& base) {
  check_keys(j, "config", {"ess", "source_model", "model_file", "hypotheses", "q", "x_max", "data", "grids",
                           "costs", "z0_fractions", "seeds", "optimizer", "attacker", "mode", "output_dir"});
  ExperimentConfig c;
  if (j.contains("ess")) {
    const auto& e = j.at("ess");
    c.ess = e.is_string() ? ess::load_params(resolve(base, e.get<std::string>())) : ess::params_from_json(e);
  }
  if (j.contains("source_model")) {
    c.source_model = j.at("source_model").get<std::string>();
    if (c.source_model != "reference") c.source_model = resolve(base, c.source_model).string();
  }
  if (j.contains("model_file") && !j.at("model_file").is_null())
    c.model_file = resolve(base, j.at("model_file").get<std::string>());
  read(j, "hypotheses", c.hypotheses);
  read(j, "q", c.q);
  read(j, "x_max", c.x_max);
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, "data", {"train_trace", "validation_trace", "train_days", "validation_days", "slots_per_day"});
    if (d.contains("train_trace") && !d.at("train_trace").is_null())
      c.data.train_trace = resolve(base, d.at("train_trace").get<std::string>());
    if (d.contains("validation_trace") && !d.at("validation_trace").is_null())
      c.data.validation_trace = resolve(base, d.at("validation_trace").get<std::string>());
    read(d, "train_days", c.data.train_days);
    read(d, "validation_days", c.data.validation_days);
    read(d, "slots_per_day", c.data.slots_per_day);
  }
  if (j.contains("grids")) {
    const auto& g = j.at("grids");
    check_keys(g, "grids", {"d_grid_min", "d_grid_max", "e", "belief_resolution", "horizon"});
    read(g, "d_grid_min", c.grids.d_grid_min);
    read(g, "d_grid_max", c.grids.d_grid_max);
    read(g, "e", c.grids.e);
    read(g, "belief_resolution", c.grids.belief_resolution);
    read(g, "horizon", c.grids.horizon);
  }
  if (j.contains("costs")) {
    const auto rows = j.at("costs").get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw ParseError("costs must be a non-empty square matrix");
    Matrix m(rows.size(), rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw ParseError("costs must be a square matrix");
      for (std::size_t k = 0; k < rows.size(); ++k) m(r, k) = rows[r][k];
    }
    c.costs = inference::CostMatrix{m};
  } else {
    c.costs = inference::CostMatrix::zero_one(c.hypotheses);
  }
  read(j, "z0_fractions", c.z0_fractions);
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    check_keys(s, "seeds", {"train", "validation", "optimizer", "runtime"});
    read(s, "train", c.seeds.train);
    read(s, "validation", c.seeds.validation);
    read(s, "optimizer", c.seeds.optimizer);
    read(s, "runtime", c.seeds.runtime);
  }
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, "optimizer", {"starts", "iterations", "step", "threads"});
    read(o, "starts", c.optimizer.starts);
    read(o, "iterations", c.optimizer.iterations);
    read(o, "step", c.optimizer.step);
    read(o, "threads", c.optimizer.threads);
  }
  if (j.contains("attacker")) {
    const auto& a = j.at("attacker");
    check_keys(a, "attacker", {"threshold", "slot_tolerance"});
    read(a, "threshold", c.attacker.threshold);
    read(a, "slot_tolerance", c.attacker.slot_tolerance);
  }
  if (j.contains("mode")) c.mode = runtime::parse_mode(j.at("mode").get<std::string>());
  if (j.contains("output_dir")) c.output_dir = resolve(base, j.at("output_dir").get<std::string>());
  c.optimizer.seed = c.seeds.optimizer;
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  auto opt = [](const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); };
  json costs = json::array();
  for (std::size_t r = 0; r < c.costs.c.rows(); ++r) {
    auto row = c.costs.c.row(r);
    costs.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return {
      {"ess", ess::params_to_json(c.ess)},
      {"source_model", c.source_model},
      {"model_file", opt(c.model_file)},
      {"hypotheses", c.hypotheses},
      {"q", c.q},
      {"x_max", c.x_max},
      {"data",
       {{"train_trace", opt(c.data.train_trace)},
        {"validation_trace", opt(c.data.validation_trace)},
        {"train_days", c.data.train_days},
        {"validation_days", c.data.validation_days},
        {"slots_per_day", c.data.slots_per_day}}},
      {"grids",
       {{"d_grid_min", c.grids.d_grid_min},
        {"d_grid_max", c.grids.d_grid_max},
        {"e", c.grids.e},
        {"belief_resolution", c.grids.belief_resolution},
        {"horizon", c.grids.horizon}}},
      {"costs", costs},
      {"z0_fractions", c.z0_fractions},
      {"seeds",
       {{"train", c.seeds.train},
        {"validation", c.seeds.validation},
        {"optimizer", c.seeds.optimizer},
        {"runtime", c.seeds.runtime}}},
      {"optimizer",
       {{"starts", c.optimizer.starts},
        {"iterations", c.optimizer.iterations},
        {"step", c.optimizer.step},
        {"threads", c.optimizer.threads}}},
      {"attacker", {{"threshold", c.attacker.threshold}, {"slot_tolerance", c.attacker.slot_tolerance}}},
      {"mode", runtime::to_string(c.mode)},
  };
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path.string() + ": " + e.what());
  }
  auto c = config_from_json(j, path.parent_path());
  if (!j.contains("output_dir")) c.output_dir = path.parent_path() / "out";
  return c;
}

Cardinalities echo_cardinalities(const ExperimentConfig& c) {
  const household::PowerGrid x{c.q, c.x_max};
  const synthesis::EnergyGrid z{c.grids.e, c.ess.z_max};
  const inference::BeliefGrid pi(c.hypotheses, c.grids.belief_resolution);
  return {x.size(), synthesis::action_grid(x, c.grids.d_grid_min, c.grids.d_grid_max).size(), z.size(),
          pi.size()};
}

std::string run_label(std::optional<double> z0_fraction) {
  return z0_fraction ? "z0_" + fixed2(*z0_fraction) : "baseline";
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"estimate", "synthesize", "run", "attack", "report"};
  return names;
}

// ---- stages -------------------------------------------------------------

void stage_estimate(const ExperimentConfig& c) {
  in_stage("estimate", [&] {
    c.validate();
    fs::create_directories(data_dir(c));
    const household::PowerGrid grid{c.q, c.x_max};
    household::HouseholdModel src;
    if (!c.data.train_trace || !c.data.validation_trace) {
      src = source_model(c);
      if (src.grid.q != c.q || src.grid.x_max != c.x_max)
        throw std::invalid_argument("source model grid differs from the configured q/x_max");
    }
    const std::vector<std::string> names = src.names.empty() ? std::vector<std::string>{} : src.names;

    household::Trace train = c.data.train_trace
                                 ? labeled_trace(*c.data.train_trace, names)
                                 : household::concatenate(household::sample_days(
                                       src, c.data.train_days, c.data.slots_per_day, c.seeds.train));
    household::Trace validation =
        c.data.validation_trace
            ? labeled_trace(*c.data.validation_trace, names)
            : household::concatenate(household::sample_days(src, c.data.validation_days, c.data.slots_per_day,
                                                            c.seeds.validation));
    split_days(validation, c.data.slots_per_day);
    household::save_trace(data_dir(c) / "train.csv", train);
    household::save_trace(data_dir(c) / "validation.csv", validation);

    household::HouseholdModel model =
        c.model_file ? household::load_model(*c.model_file)
                     : household::estimate_model(train, grid, c.hypotheses,
                                                 c.data.train_trace ? 0 : c.data.slots_per_day);
    if (model.hypothesis_count() != c.hypotheses)
      throw std::invalid_argument("model has " + std::to_string(model.hypothesis_count()) +
                                  " hypotheses, config says " + std::to_string(c.hypotheses));
    if (model.grid.q != c.q || model.grid.x_max != c.x_max)
      throw std::invalid_argument("model grid differs from the configured q/x_max");
    household::save_model(c.output_dir / "model.json", model);

    if (train.alphabet.empty()) train.alphabet = model.names;
    const auto db = adversary::build_signatures(train, c.q, c.attacker.threshold);
    write_json(c.output_dir / "signatures.json", adversary::to_json(db));
  });
}

void stage_synthesize(const ExperimentConfig& c) {
  in_stage("synthesize", [&] {
    c.validate();
    const auto problem = make_problem(c, synthesis_model(c));
    auto cfg = c.optimizer;
    cfg.seed = c.seeds.optimizer;
    const auto result = synthesis::backward_recursion(problem, cfg);
    synthesis::save_policy(c.output_dir / "policy.bin", result.policy);
    double v1 = 0.0;
    for (double v : std::span(result.values.data).first(problem.point_count())) v1 += v;
    write_json(c.output_dir / "synthesis.json",
               {{"policy_file", "policy.bin"},
                {"shape", result.policy.shape()},
                {"stochastic_wins", result.stochastic_wins},
                {"mean_stage1_value", v1 / static_cast<double>(problem.point_count())}});
  });
}

void stage_run(const ExperimentConfig& c) {
  in_stage("run", [&] {
    c.validate();
    auto model = synthesis_model(c);
    const auto days = validation_days(c, model);
    const auto problem = make_problem(c, model);
    const auto policy = synthesis::load_policy(c.output_dir / "policy.bin");
    synthesis::check_compatible(policy, problem);
    for (const auto& row : run_rows(c)) {
      const fs::path dir = c.output_dir / "logs" / run_label(row);
      fs::create_directories(dir);
      std::ofstream soc(dir / "soc.csv");
      if (!soc) throw std::runtime_error("cannot write " + (dir / "soc.csv").string());
      soc << "day,slot,soc\n";
      for (std::size_t d = 0; d < days.size(); ++d) {
        runtime::ControlLog log;
        if (row) {
          runtime::RunOptions opts{c.mode, mix_seed(c.seeds.runtime, d)};
          try {
            log = runtime::run_controller(policy, problem, days[d], *row * c.ess.z_max,
                                          inference::Belief{problem.model().prior}, opts);
          } catch (const std::exception& e) {
            throw std::runtime_error(run_label(row) + " day " + std::to_string(d) + ": " + e.what());
          }
        } else {
          log = baseline_log(days[d], problem.model(), c.costs);
        }
        runtime::save_log(dir / day_file(d), log);
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", log.z0 / c.ess.z_max);
        soc << d << ",0," << buf << '\n';
        for (const auto& s : log.steps) {
          std::snprintf(buf, sizeof buf, "%.17g", s.z / c.ess.z_max);
          soc << d << ',' << s.slot << ',' << buf << '\n';
        }
      }
    }
  });
}

void stage_attack(const ExperimentConfig& c) {
  in_stage("attack", [&] {
    c.validate();
    const auto model = synthesis_model(c);
    const auto days = validation_days(c, model);
    const auto db = adversary::signatures_from_json(read_json(c.output_dir / "signatures.json"));
    json runs = json::array();
    for (const auto& row : run_rows(c)) {
      const fs::path dir = c.output_dir / "logs" / run_label(row);
      std::size_t tp = 0, fp = 0, fn = 0;
      json per_day = json::array();
      for (std::size_t d = 0; d < days.size(); ++d) {
        const auto log = runtime::load_log(dir / day_file(d));
        if (log.steps.size() != days[d].size())
          throw std::runtime_error(run_label(row) + " day " + std::to_string(d) + " log has " +
                                   std::to_string(log.steps.size()) + " slots, expected " +
                                   std::to_string(days[d].size()));
        std::vector<double> y;
        for (const auto& s : log.steps) y.push_back(s.y);
        const auto det = adversary::match_and_detect(adversary::extract_events(y, c.attacker.threshold), db,
                                                     y.size());
        const auto rep = adversary::score(det.intervals, adversary::truth_intervals(*days[d].h_labels),
                                          c.attacker.slot_tolerance);
        tp += rep.tp;
        fp += rep.fp;
        fn += rep.fn;
        per_day.push_back({{"day", d}, {"report", adversary::to_json(rep)}, {"detection", adversary::to_json(det)}});
      }
      runs.push_back({{"label", run_label(row)},
                      {"tp", tp},
                      {"fp", fp},
                      {"fn", fn},
                      {"f_score", adversary::f_score(tp, fp, fn)},
                      {"days", per_day}});
    }
    write_json(c.output_dir / "attack.json",
               {{"attacker", {{"threshold", c.attacker.threshold}, {"slot_tolerance", c.attacker.slot_tolerance}}},
                {"signatures", adversary::to_json(db)},
                {"runs", runs}});
  });
}

ExperimentReport stage_report(const ExperimentConfig& c) {
  return in_stage("report", [&] {
    c.validate();
    const auto model = synthesis_model(c);
    const auto attack = read_json(c.output_dir / "attack.json");
    const auto synth = read_json(c.output_dir / "synthesis.json");
    const auto days = validation_days(c, model);

    ExperimentReport r;
    r.days = days.size();
    r.slots_per_day = c.data.slots_per_day;
    for (const auto& row : run_rows(c)) {
      ReportRow out;
      out.label = run_label(row);
      out.z0_fraction = row;
      const json* a = nullptr;
      for (const auto& run : attack.at("runs"))
        if (run.at("label") == out.label) a = &run;
      if (!a) throw std::runtime_error("attack.json has no run " + out.label);
      out.tp = a->at("tp").get<std::size_t>();
      out.fp = a->at("fp").get<std::size_t>();
      out.fn = a->at("fn").get<std::size_t>();
      out.f_score = adversary::f_score(out.tp, out.fp, out.fn);

      const fs::path dir = c.output_dir / "logs" / out.label;
      std::size_t slots = 0, clips = 0;
      double final_soc = 0.0;
      for (std::size_t d = 0; d < days.size(); ++d) {
        const auto log = runtime::load_log(dir / day_file(d));
        const auto s = runtime::summarize(log, c.ess.z_max);
        out.energy_loss_wh += s.total_loss;
        out.ambr_total += s.ambr;
        clips += s.clip_count;
        slots += log.steps.size();
        final_soc += s.final_z / c.ess.z_max;
      }
      out.ambr_per_day = out.ambr_total / static_cast<double>(days.size());
      out.clip_rate = static_cast<double>(clips) / static_cast<double>(slots);
      out.final_soc_mean = final_soc / static_cast<double>(days.size());
      if (row) out.soc_file = (fs::path("logs") / out.label / "soc.csv").generic_string();
      r.rows.push_back(std::move(out));
    }

    const auto card = echo_cardinalities(c);
    r.echo = {{"config", config_to_json(c)},
              {"model", household::model_to_json(model)},
              {"cardinalities", {{"X", card.x}, {"Y", card.y}, {"Z", card.z}, {"Pi", card.pi}}},
              {"attacker", attack.at("attacker")},
              {"signatures", attack.at("signatures")},
              {"synthesis", synth}};
    write_json(c.output_dir / "report.json", report_to_json(r));
    return r;
  });
}

json report_to_json(const ExperimentReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"label", row.label},
                    {"z0_fraction", row.z0_fraction ? json(*row.z0_fraction) : json(nullptr)},
                    {"f_score", row.f_score},
                    {"tp", row.tp},
                    {"fp", row.fp},
                    {"fn", row.fn},
                    {"energy_loss_wh", row.energy_loss_wh},
                    {"ambr_total", row.ambr_total},
                    {"ambr_per_day", row.ambr_per_day},
                    {"clip_rate", row.clip_rate},
                    {"final_soc_mean", row.final_soc_mean},
                    {"soc_file", row.soc_file.empty() ? json(nullptr) : json(row.soc_file)},
                    {"log_dir", "logs/" + row.label}});
  return {{"horizon",
           {{"days", r.days},
            {"slots_per_day", r.slots_per_day},
            {"ambr_total", "sum of per-slot risk over all days"},
            {"ambr_per_day", "ambr_total / days"}}},
          {"rows", rows},
          {"echo", r.echo}};
}

ExperimentReport run_experiment(const ExperimentConfig& c, const std::string& until) {
  const auto& names = stage_names();
  const auto last = std::find(names.begin(), names.end(), until);
  if (last == names.end()) throw std::invalid_argument("unknown stage '" + until + "'");
  fs::create_directories(c.output_dir);
  const fs::path marker = c.output_dir / "STALE";
  fs::remove(c.output_dir / "report.json");
  {
    std::ofstream m(marker);
    m << "running\n";
  }
  ExperimentReport report;
  try {
    for (auto it = names.begin(); it <= last; ++it) {
      if (*it == "estimate") stage_estimate(c);
      if (*it == "synthesize") stage_synthesize(c);
      if (*it == "run") stage_run(c);
      if (*it == "attack") stage_attack(c);
      if (*it == "report") report = stage_report(c);
    }
  } catch (const StageError& e) {
    std::ofstream m(marker);
    m << "failed in stage " << e.stage() << ": " << e.what() << '\n';
    throw;
  }
  fs::remove(marker);
  return report;
}

json compare_ess(const ExperimentConfig& c, std::size_t trials, std::uint64_t seed) {
  return in_stage("compare-ess", [&] {
    c.ess.validate();
    Rng rng(seed);
    const double z0 = 0.5 * c.ess.z_max;
    std::size_t parallel_wins = 0;
    json rows = json::array();
    for (std::size_t t = 0; t < trials; ++t) {
      std::vector<double> demand(c.data.slots_per_day), policy(c.data.slots_per_day);
      for (auto& x : demand) x = c.q * (1.0 + std::floor(3.0 * rng.uniform()));
      // Actions within +-q keep both wirings inside the envelope for a day.
      for (auto& d : policy) d = c.q * (std::floor(3.0 * rng.uniform()) - 1.0);
      const auto l = ess::compare_configurations(demand, c.ess, policy, z0);
      parallel_wins += l.parallel < l.series;
      rows.push_back({{"trial", t}, {"loss_parallel_wh", l.parallel}, {"loss_series_wh", l.series}});
    }
    std::vector<double> d_grid;
    for (double d = c.grids.d_grid_min; d <= c.grids.d_grid_max + 1e-9; d += c.q) d_grid.push_back(d);
    const auto feasible = ess::feasible_actions(ess::EssState{z0}, c.ess, d_grid);
    json div = json::array();
    for (const auto& r : ess::model_divergence(z0, feasible, c.ess))
      div.push_back({{"d", r.d},
                     {"soc_change_three_circuit_pct", r.soc_change_three_circuit},
                     {"soc_change_ideal_pct", r.soc_change_ideal},
                     {"difference_pct", r.difference()}});
    return json{{"z0_wh", z0},
                {"trials", trials},
                {"parallel_strictly_lower", parallel_wins},
                {"configurations", rows},
                {"divergence", div}};
  });
}

}  // namespace ppsm::experiment
