#include "ppsm/household.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ppsm/digest.hpp"
#include "ppsm/error.hpp"
#include "ppsm/rng.hpp"

namespace ppsm::household {

std::size_t PowerGrid::size() const {
  return static_cast<std::size_t>(std::floor(x_max / q + 1e-9)) + 1;
}

std::size_t PowerGrid::index_of(double grid_value) const {
  const double r = grid_value / q;
  const double i = std::round(r);
  if (std::abs(r - i) > 1e-9 || i < 0.0 || i >= static_cast<double>(size()))
    throw std::out_of_range("power " + std::to_string(grid_value) + " W is not on the meter grid");
  return static_cast<std::size_t>(i);
}

std::vector<double> PowerGrid::values() const {
  std::vector<double> v(size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = value(i);
  return v;
}

double quantize_power(double watts, double q, double x_max) {
  if (watts < 0.0) throw std::invalid_argument("negative power " + std::to_string(watts) + " W");
  const PowerGrid grid{q, x_max};
  const double steps = std::min(std::floor(watts / q + 0.5), static_cast<double>(grid.size() - 1));
  return steps * q;
}

namespace {

constexpr double kNormTol = 1e-9;

void check_distribution(std::span<const double> p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw std::invalid_argument(what + " has a negative or NaN entry");
    s += v;
  }
  if (std::abs(s - 1.0) > kNormTol)
    throw std::invalid_argument(what + " sums to " + std::to_string(s) + ", not 1");
}

void check_columns(const Matrix& m, const std::string& what) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    std::vector<double> col(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) col[r] = m(r, c);
    check_distribution(col, what + " column " + std::to_string(c));
  }
}

// Printed tables carry rounding and truncation; rescale near-unit columns.
void renormalize(std::span<double> v, const std::string& what) {
  double s = 0.0;
  for (double x : v) {
    if (!(x >= 0.0)) throw std::invalid_argument(what + " has a negative or NaN entry");
    s += x;
  }
  if (s < 0.4 || s > 1.05)
    throw std::invalid_argument(what + " has mass " + std::to_string(s) +
                                ", outside the renormalizable range [0.4, 1.05]");
  if (std::abs(s - 1.0) <= 1e-12) return;  // keep already-normalized input bit-exact
  for (double& x : v) x /= s;
}

void renormalize_columns(Matrix& m, const std::string& what) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    std::vector<double> col(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) col[r] = m(r, c);
    renormalize(col, what + " column " + std::to_string(c));
    for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) = col[r];
  }
}

std::vector<std::string> default_names(std::size_t n) {
  if (n == 2) return {"OFF", "ON"};
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = "H" + std::to_string(i);
  return names;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

void HouseholdModel::validate() const {
  const std::size_t n = prior.size();
  if (n == 0) throw std::invalid_argument("household model has no hypotheses");
  if (transition.rows() != n || transition.cols() != n)
    throw std::invalid_argument("transition matrix must be " + std::to_string(n) + "x" +
                                std::to_string(n));
  if (emission.cols() != n || emission.rows() != grid.size())
    throw std::invalid_argument("emission matrix must be " + std::to_string(grid.size()) + "x" +
                                std::to_string(n));
  if (!names.empty() && names.size() != n)
    throw std::invalid_argument("hypothesis name count does not match the prior");
  if (!(grid.q > 0.0) || !(grid.x_max >= 0.0))
    throw std::invalid_argument("power grid needs q > 0 and x_max >= 0");
  check_distribution(prior, "prior");
  check_columns(transition, "transition");
  check_columns(emission, "emission");
}

std::string HouseholdModel::digest() const {
  Digest d;
  d.str("household/v1");
  d.f64s(prior).f64s(transition.data()).f64s(emission.data()).f64(grid.q).f64(grid.x_max);
  return d.hex();
}

HouseholdModel model_from_tables(std::vector<double> prior, Matrix transition, Matrix emission,
                                 PowerGrid grid, std::vector<std::string> names) {
  HouseholdModel m;
  renormalize(prior, "prior");
  renormalize_columns(transition, "transition");
  renormalize_columns(emission, "emission");
  m.names = names.empty() ? default_names(prior.size()) : std::move(names);
  m.prior = std::move(prior);
  m.transition = std::move(transition);
  m.emission = std::move(emission);
  m.grid = grid;
  m.validate();
  return m;
}

HouseholdModel reference_model() {
  return model_from_tables({0.95, 0.05}, Matrix{{0.98, 0.34}, {0.02, 0.65}},
                           Matrix{{1.0, 0.0}, {0.0, 0.17}, {0.0, 0.14}, {0.0, 0.17}},
                           PowerGrid{500.0, 1700.0}, {"OFF", "ON"});
}

void Trace::validate() const {
  if (slots.size() != x_watts.size()) throw std::invalid_argument("trace slot/watts lengths differ");
  if (h_labels && h_labels->size() != x_watts.size())
    throw std::invalid_argument("trace label/watts lengths differ");
  for (std::size_t i = 0; i < x_watts.size(); ++i)
    if (!(x_watts[i] >= 0.0))
      throw std::invalid_argument("negative power at slot " + std::to_string(slots[i]));
}

Trace Trace::slice(std::size_t begin, std::size_t n) const {
  if (begin + n > size()) throw std::out_of_range("trace slice beyond end");
  Trace t;
  t.alphabet = alphabet;
  t.slots.assign(slots.begin() + begin, slots.begin() + begin + n);
  t.x_watts.assign(x_watts.begin() + begin, x_watts.begin() + begin + n);
  if (h_labels) t.h_labels.emplace(h_labels->begin() + begin, h_labels->begin() + begin + n);
  return t;
}

HouseholdModel estimate_model(const Trace& labeled, const PowerGrid& grid,
                              std::size_t hypothesis_count, std::size_t day_length) {
  labeled.validate();
  if (labeled.size() < 2) throw std::invalid_argument("estimation needs at least two slots");
  if (!labeled.h_labels) throw std::invalid_argument("estimation needs a labeled trace");
  if (hypothesis_count == 0) throw std::invalid_argument("hypothesis_count must be positive");
  const auto& h = *labeled.h_labels;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (h[i] >= hypothesis_count)
      throw std::invalid_argument("label " + std::to_string(h[i]) + " at slot " +
                                  std::to_string(labeled.slots[i]) + " exceeds hypothesis count " +
                                  std::to_string(hypothesis_count));

  const std::size_t n = hypothesis_count;
  const std::size_t nx = grid.size();
  std::vector<double> prior(n, 1.0);
  Matrix trans(n, n, 1.0);
  Matrix emit(nx, n, 1.0);

  for (std::size_t k = 0; k < h.size(); ++k) {
    const bool day_start = day_length > 0 ? k % day_length == 0 : k == 0;
    if (day_length > 0) {
      if (day_start) prior[h[k]] += 1.0;
    } else {
      prior[h[k]] += 1.0;
    }
    if (!day_start) trans(h[k], h[k - 1]) += 1.0;
    const double xq = quantize_power(labeled.x_watts[k], grid.q, grid.x_max);
    emit(grid.index_of(xq), h[k]) += 1.0;
  }

  auto normalize_columns = [](Matrix& m) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double s = m.column_sum(c);
      for (std::size_t r = 0; r < m.rows(); ++r) m(r, c) /= s;
    }
  };
  normalize_columns(trans);
  normalize_columns(emit);
  double ps = 0.0;
  for (double v : prior) ps += v;
  for (double& v : prior) v /= ps;

  HouseholdModel m;
  m.names = labeled.alphabet.size() == n ? labeled.alphabet : default_names(n);
  m.prior = std::move(prior);
  m.transition = std::move(trans);
  m.emission = std::move(emit);
  m.grid = grid;
  m.validate();
  return m;
}

namespace {

std::vector<double> column(const Matrix& m, std::size_t c) {
  std::vector<double> v(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m(r, c);
  return v;
}

void sample_into(const HouseholdModel& model, std::size_t n, Rng& rng, std::size_t first_slot,
                 Trace& t) {
  std::size_t h = 0;
  for (std::size_t k = 0; k < n; ++k) {
    h = k == 0 ? rng.categorical(model.prior) : rng.categorical(column(model.transition, h));
    const std::size_t x = rng.categorical(column(model.emission, h));
    t.slots.push_back(first_slot + k);
    t.x_watts.push_back(model.grid.value(x));
    t.h_labels->push_back(h);
  }
}

}  // namespace

Trace sample_trace(const HouseholdModel& model, std::size_t n, std::uint64_t seed) {
  model.validate();
  Rng rng(seed);
  Trace t;
  t.alphabet = model.names;
  t.h_labels.emplace();
  sample_into(model, n, rng, 0, t);
  return t;
}

std::vector<Trace> sample_days(const HouseholdModel& model, std::size_t days,
                               std::size_t slots_per_day, std::uint64_t seed) {
  model.validate();
  std::vector<Trace> out;
  out.reserve(days);
  for (std::size_t d = 0; d < days; ++d) {
    Rng rng(mix_seed(seed, d));
    Trace t;
    t.alphabet = model.names;
    t.h_labels.emplace();
    sample_into(model, slots_per_day, rng, 0, t);
    out.push_back(std::move(t));
  }
  return out;
}

Trace concatenate(const std::vector<Trace>& parts) {
  Trace t;
  bool labeled = !parts.empty();
  for (const auto& p : parts) labeled = labeled && p.h_labels.has_value();
  if (labeled) t.h_labels.emplace();
  for (const auto& p : parts) {
    if (t.alphabet.empty()) t.alphabet = p.alphabet;
    for (std::size_t i = 0; i < p.size(); ++i) {
      t.slots.push_back(t.slots.size());
      t.x_watts.push_back(p.x_watts[i]);
      if (labeled) t.h_labels->push_back((*p.h_labels)[i]);
    }
  }
  return t;
}

Trace load_trace(const std::filesystem::path& path, const TraceSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open trace " + path.string());

  Trace t;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  bool symbolic = false;

  auto parse_double = [&](const std::string& s, const char* what) {
    double v = 0.0;
    const auto* b = s.data();
    const auto* e = s.data() + s.size();
    const auto res = std::from_chars(b, e, v);
    if (s.empty() || res.ec != std::errc() || res.ptr != e)
      throw ParseError(path.string() + ": cannot parse " + what + " '" + s + "'", line_no);
    return v;
  };
  auto parse_label = [&](const std::string& s) -> std::size_t {
    std::size_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (!s.empty() && res.ec == std::errc() && res.ptr == s.data() + s.size()) return v;
    const std::string key = lower(s);
    for (std::size_t i = 0; i < schema.alphabet.size(); ++i)
      if (lower(schema.alphabet[i]) == key) {
        symbolic = true;
        return i;
      }
    throw ParseError(path.string() + ": unknown label '" + s + "'", line_no);
  };

  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed.front() == '#') continue;
    auto cells = split_csv(trimmed);
    if (columns == 0 && t.size() == 0 && lower(cells[0]) == "slot") {
      if (cells.size() < 2 || lower(cells[1]) != "watts" ||
          (cells.size() == 3 && lower(cells[2]) != "label") || cells.size() > 3)
        throw ParseError(path.string() + ": header must be slot,watts[,label]", line_no);
      columns = cells.size();
      continue;
    }
    if (columns == 0) columns = cells.size() > 3 ? 0 : cells.size();
    if (columns == 0 || cells.size() != columns)
      throw ParseError(path.string() + ": expected " + std::to_string(columns) + " columns, got " +
                           std::to_string(cells.size()),
                       line_no);

    double watts = 0.0;
    std::size_t slot = t.size();
    if (columns == 1) {
      watts = parse_double(cells[0], "watts");
    } else {
      const double s = parse_double(cells[0], "slot");
      if (s < 0.0 || s != std::floor(s))
        throw ParseError(path.string() + ": slot must be a non-negative integer", line_no);
      slot = static_cast<std::size_t>(s);
      watts = parse_double(cells[1], "watts");
    }
    if (watts < 0.0) throw ParseError(path.string() + ": negative watts", line_no);
    t.slots.push_back(slot);
    t.x_watts.push_back(watts);
    if (columns == 3) {
      if (!t.h_labels) t.h_labels.emplace();
      t.h_labels->push_back(parse_label(cells[2]));
    }
  }
  if (t.h_labels) {
    std::size_t max_label = 0;
    for (auto l : *t.h_labels) max_label = std::max(max_label, l);
    if (symbolic || max_label < schema.alphabet.size()) t.alphabet = schema.alphabet;
  }
  return t;
}

void save_trace(const std::filesystem::path& path, const Trace& trace) {
  trace.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace " + path.string());
  out << (trace.h_labels ? "slot,watts,label\n" : "slot,watts\n");
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", trace.x_watts[i]);
    out << trace.slots[i] << ',' << buf;
    if (trace.h_labels) out << ',' << (*trace.h_labels)[i];
    out << '\n';
  }
}

std::vector<std::string> load_alphabet(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open alphabet file " + path.string());
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    const std::string s = trim(line);
    if (!s.empty()) names.push_back(s);
  }
  if (names.empty()) throw ParseError("alphabet file " + path.string() + " is empty");
  return names;
}

nlohmann::json model_to_json(const HouseholdModel& model) {
  auto rows = [](const Matrix& m) {
    nlohmann::json a = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      auto row = m.row(r);
      a.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return a;
  };
  return {{"hypotheses", model.names}, {"prior", model.prior},
          {"transition", rows(model.transition)}, {"emission", rows(model.emission)},
          {"q", model.grid.q},          {"x_max", model.grid.x_max}};
}

HouseholdModel model_from_json(const nlohmann::json& j) {
  auto matrix = [](const nlohmann::json& a, const char* what) {
    if (!a.is_array() || a.empty() || !a[0].is_array())
      throw ParseError(std::string("model field '") + what + "' must be a non-empty array of rows");
    Matrix m(a.size(), a[0].size());
    for (std::size_t r = 0; r < a.size(); ++r) {
      if (a[r].size() != m.cols())
        throw ParseError(std::string("model field '") + what + "' has ragged rows");
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = a[r][c].get<double>();
    }
    return m;
  };
  try {
    std::vector<std::string> names;
    if (j.contains("hypotheses")) names = j.at("hypotheses").get<std::vector<std::string>>();
    return model_from_tables(j.at("prior").get<std::vector<double>>(),
                             matrix(j.at("transition"), "transition"),
                             matrix(j.at("emission"), "emission"),
                             PowerGrid{j.at("q").get<double>(), j.at("x_max").get<double>()},
                             std::move(names));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("household model: ") + e.what());
  }
}

HouseholdModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model file " + path.string());
  try {
    return model_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("model file " + path.string() + ": " + e.what());
  }
}

void save_model(const std::filesystem::path& path, const HouseholdModel& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model " + path.string());
  out << model_to_json(model).dump(2) << '\n';
}

}  // namespace ppsm::household
