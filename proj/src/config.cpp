#include "qkfmag/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace qkfmag {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ConfigError::ConfigError(std::string message, std::string field, int line)
    : std::runtime_error(std::move(message)), field_(std::move(field)), line_(line) {}

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what, field);
}

const std::map<std::string, std::map<std::string, double>>& unit_tables() {
  static const std::map<std::string, std::map<std::string, double>> tables{
      {"time", {{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"µs", 1e-6}, {"ns", 1e-9}}},
      {"field", {{"G", 1.0}, {"mG", 1e-3}, {"uG", 1e-6}, {"µG", 1e-6}, {"nG", 1e-9}}},
      {"field2",
       {{"G2", 1.0}, {"G^2", 1.0}, {"mG2", 1e-6}, {"mG^2", 1e-6}, {"uG2", 1e-12}, {"uG^2", 1e-12},
        {"µG2", 1e-12}, {"µG^2", 1e-12}, {"nG2", 1e-18}, {"nG^2", 1e-18}}},
      {"rate", {{"Hz", 1.0}, {"1/s", 1.0}, {"s^-1", 1.0}, {"kHz", 1e3}, {"MHz", 1e6}}},
      {"gamma", {{"kHz/mG", 1.0}, {"Hz/G", 1e-6}, {"MHz/G", 1.0}}},
      {"count", {}},
  };
  return tables;
}

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

// Key checker for one JSON object level.
class Section {
public:
  Section(const json& node, std::string path, std::set<std::string> allowed)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
    for (const auto& [key, _] : node_.items())
      if (!allowed.count(key)) fail(join(key), "unknown key");
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const { return node_.contains(key); }
  const json& at(const std::string& key) const { return node_.at(key); }

  double quantity(const std::string& key, std::string_view dimension) const {
    const json& v = node_.at(key);
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_quantity(v.get<std::string>(), dimension, join(key));
    fail(join(key), "expected a number or a quantity string");
  }

  double quantity_or(const std::string& key, std::string_view dimension, double fallback) const {
    return has(key) ? quantity(key, dimension) : fallback;
  }

  std::uint64_t count_or(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
    if (v.is_number_float()) {
      const double d = v.get<double>();
      if (d >= 0 && d == std::floor(d) && d < 1.8e19) return static_cast<std::uint64_t>(d);
    }
    fail(join(key), "expected a non-negative integer");
  }

  int int_or(const std::string& key, int fallback) const {
    const auto v = count_or(key, static_cast<std::uint64_t>(std::max(fallback, 0)));
    if (v > 1000000) fail(join(key), "out of range");
    return static_cast<int>(v);
  }

  bool bool_or(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_boolean()) fail(join(key), "expected true or false");
    return node_.at(key).get<bool>();
  }

  std::string string_or(const std::string& key, std::string fallback) const {
    if (!has(key)) return fallback;
    if (!node_.at(key).is_string()) fail(join(key), "expected a string");
    return node_.at(key).get<std::string>();
  }

  std::vector<double> quantities_or(const std::string& key, std::string_view dimension,
                                    std::vector<double> fallback) const {
    if (!has(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_array()) fail(join(key), "expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const std::string item = join(key) + "[" + std::to_string(i) + "]";
      if (v[i].is_number())
        out.push_back(v[i].get<double>());
      else if (v[i].is_string())
        out.push_back(parse_quantity(v[i].get<std::string>(), dimension, item));
      else
        fail(item, "expected a number or a quantity string");
    }
    return out;
  }

private:
  const json& node_;
  std::string path_;
};

int line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

Estimator parse_estimator(const std::string& name, const std::string& field) {
  if (name == "qkf") return Estimator::qkf;
  if (name == "regression") return Estimator::regression;
  fail(field, "unknown estimator '" + name + "' (expected qkf or regression)");
}

RegressionAbscissa parse_abscissa(const std::string& name, const std::string& field) {
  if (name == "decay_compensated") return RegressionAbscissa::decay_compensated;
  if (name == "elapsed_time") return RegressionAbscissa::elapsed_time;
  fail(field, "unknown abscissa '" + name + "'");
}

void require_positive(double v, const std::string& field) {
  if (!(v > 0.0) || !std::isfinite(v)) fail(field, "must be positive");
}

}  // namespace

double parse_quantity(std::string_view text, std::string_view dimension, std::string_view field) {
  const std::string f(field);
  const auto& tables = unit_tables();
  const auto table = tables.find(std::string(dimension));
  if (table == tables.end()) fail(f, "unknown dimension");
  const std::string s = trim(text);
  if (dimension == "field2" && (s == "infinite" || s == "inf"))
    return std::numeric_limits<double>::infinity();

  double value = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr == begin) fail(f, "cannot read a number from '" + s + "'");
  const std::string unit = trim(std::string_view(ptr, static_cast<std::size_t>(end - ptr)));
  if (unit.empty()) return value;
  const auto it = table->second.find(unit);
  if (it == table->second.end()) fail(f, "unknown unit '" + unit + "' for " + std::string(dimension));
  return value * it->second;
}

GammaConvention parse_gamma_convention(std::string_view name) {
  if (name == "angular") return GammaConvention::angular;
  if (name == "cycles") return GammaConvention::cycles;
  fail("gamma_convention", "expected 'angular' or 'cycles'");
}

std::string_view to_string(GammaConvention c) {
  return c == GammaConvention::angular ? "angular" : "cycles";
}

void set_gamma_convention(RunConfig& cfg, GammaConvention convention) {
  cfg.gamma_convention = convention;
  cfg.params.gamma = gamma_from_config(cfg.gamma_khz_per_mg, convention);
}

RunConfig parse_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const int line = line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ConfigError("line " + std::to_string(line) + ": " + e.what(), "", line);
  }

  RunConfig cfg;
  const Section root(doc, "",
                     {"name", "j_total", "gamma", "gamma_convention", "b_true", "meas_strength",
                      "efficiency", "prior_b_variance", "t_total", "seed", "threads", "grid",
                      "simulate", "ensemble", "scaling", "oracle"});

  for (const char* key : {"j_total", "gamma", "b_true", "meas_strength", "t_total"})
    if (!root.has(key)) fail(key, "missing required field");

  cfg.name = root.string_or("name", "");
  cfg.params.j_total = root.quantity("j_total", "count");
  cfg.gamma_khz_per_mg = root.quantity("gamma", "gamma");
  if (!(cfg.gamma_khz_per_mg > 0.0)) fail("gamma", "must be positive");
  cfg.gamma_convention = parse_gamma_convention(root.string_or("gamma_convention", "cycles"));
  cfg.params.gamma = gamma_from_config(cfg.gamma_khz_per_mg, cfg.gamma_convention);
  cfg.params.b_true = root.quantity("b_true", "field");
  cfg.params.meas_strength = root.quantity("meas_strength", "rate");
  cfg.params.efficiency = root.quantity_or("efficiency", "count", 1.0);
  cfg.params.t_total = root.quantity("t_total", "time");
  const double prior = root.quantity_or("prior_b_variance", "field2",
                                        std::numeric_limits<double>::infinity());
  cfg.params.prior_b_variance =
      std::isinf(prior) && prior > 0 ? PriorVariance::infinite() : PriorVariance::of(prior);
  cfg.seed = root.count_or("seed", 0);
  const auto threads = root.count_or("threads", 0);
  if (threads > 4096) fail("threads", "out of range");
  cfg.threads = static_cast<unsigned>(threads);

  const auto violations = param_violations(cfg.params);
  if (!violations.empty()) {
    const std::string& first = violations.front();
    throw ConfigError(first, first.substr(0, first.find(':')));
  }

  if (root.has("grid")) {
    const Section g(root.at("grid"), "grid", {"dt_max", "points_per_decade", "decades_below"});
    cfg.grid.dt_max = g.quantity_or("dt_max", "time", 0.0);
    if (cfg.grid.dt_max < 0.0) fail("grid.dt_max", "must be non-negative");
    cfg.grid.points_per_decade = g.int_or("points_per_decade", cfg.grid.points_per_decade);
    cfg.grid.decades_below = g.int_or("decades_below", cfg.grid.decades_below);
    if (cfg.grid.points_per_decade < 1) fail("grid.points_per_decade", "must be >= 1");
  }

  if (root.has("simulate")) {
    const Section s(root.at("simulate"), "simulate", {"zero_noise", "cutoff", "stream"});
    cfg.simulate.zero_noise = s.bool_or("zero_noise", false);
    cfg.simulate.cutoff_hz = s.quantity_or("cutoff", "rate", 0.0);
    if (cfg.simulate.cutoff_hz < 0.0) fail("simulate.cutoff", "must be positive");
    cfg.simulate.stream = s.count_or("stream", 0);
  }

  if (root.has("ensemble")) {
    const Section e(root.at("ensemble"), "ensemble",
                    {"n_traj", "estimators", "checkpoints_per_decade", "t_from", "check_times",
                     "optimality_tolerance", "abscissa"});
    cfg.ensemble.n_traj = e.count_or("n_traj", cfg.ensemble.n_traj);
    if (e.has("estimators")) {
      const json& list = e.at("estimators");
      if (!list.is_array() || list.empty()) fail("ensemble.estimators", "expected a non-empty array");
      cfg.ensemble.estimators.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        const std::string item = "ensemble.estimators[" + std::to_string(i) + "]";
        if (!list[i].is_string()) fail(item, "expected a string");
        const auto est = parse_estimator(list[i].get<std::string>(), item);
        if (std::find(cfg.ensemble.estimators.begin(), cfg.ensemble.estimators.end(), est) ==
            cfg.ensemble.estimators.end())
          cfg.ensemble.estimators.push_back(est);
      }
    }
    cfg.ensemble.checkpoints_per_decade = e.int_or("checkpoints_per_decade", 10);
    cfg.ensemble.t_from = e.quantity_or("t_from", "time", 0.0);
    if (cfg.ensemble.t_from < 0.0) fail("ensemble.t_from", "must be non-negative");
    cfg.ensemble.check_times = e.quantities_or("check_times", "time", cfg.ensemble.check_times);
    cfg.ensemble.optimality_tolerance = e.quantity_or("optimality_tolerance", "count", 0.1);
    require_positive(cfg.ensemble.optimality_tolerance, "ensemble.optimality_tolerance");
    cfg.ensemble.abscissa =
        parse_abscissa(e.string_or("abscissa", "decay_compensated"), "ensemble.abscissa");
  }
  if (cfg.ensemble.n_traj < 2) fail("ensemble.n_traj", "need at least 2 trajectories");

  if (root.has("scaling")) {
    const Section s(root.at("scaling"), "scaling",
                    {"j_values", "t_check", "n_traj", "slope_target", "slope_tolerance"});
    cfg.scaling.j_values = s.quantities_or("j_values", "count", cfg.scaling.j_values);
    cfg.scaling.t_check = s.quantity_or("t_check", "time", cfg.scaling.t_check);
    require_positive(cfg.scaling.t_check, "scaling.t_check");
    cfg.scaling.n_traj = s.count_or("n_traj", cfg.scaling.n_traj);
    if (cfg.scaling.n_traj < 2) fail("scaling.n_traj", "need at least 2 trajectories");
    cfg.scaling.slope_target = s.quantity_or("slope_target", "count", -1.0);
    cfg.scaling.slope_tolerance = s.quantity_or("slope_tolerance", "count", 0.05);
    require_positive(cfg.scaling.slope_tolerance, "scaling.slope_tolerance");
    for (std::size_t i = 0; i < cfg.scaling.j_values.size(); ++i)
      require_positive(cfg.scaling.j_values[i], "scaling.j_values[" + std::to_string(i) + "]");
  }

  if (root.has("oracle")) {
    const Section o(root.at("oracle"), "oracle",
                    {"t_end", "n_seeds", "dephasing_check", "dephasing_j", "dephasing_t_end",
                     "dephasing_tolerance"});
    cfg.oracle.t_end = o.quantity_or("t_end", "time", 0.0);
    if (cfg.oracle.t_end < 0.0) fail("oracle.t_end", "must be non-negative");
    cfg.oracle.n_seeds = o.count_or("n_seeds", 1);
    if (cfg.oracle.n_seeds < 1) fail("oracle.n_seeds", "must be >= 1");
    cfg.oracle.dephasing_check = o.bool_or("dephasing_check", true);
    cfg.oracle.dephasing_j = o.quantity_or("dephasing_j", "count", 5.0);
    cfg.oracle.dephasing_t_end = o.quantity_or("dephasing_t_end", "time", 0.0);
    cfg.oracle.dephasing_tolerance = o.quantity_or("dephasing_tolerance", "count", 0.01);
    require_positive(cfg.oracle.dephasing_tolerance, "oracle.dephasing_tolerance");
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'", "");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string resolved_json(const RunConfig& cfg, int indent) {
  const auto& p = cfg.params;
  ordered_json j;
  j["name"] = cfg.name;
  j["j_total"] = p.j_total;
  j["gamma_khz_per_mg"] = cfg.gamma_khz_per_mg;
  j["gamma_convention"] = std::string(to_string(cfg.gamma_convention));
  j["gamma_rad_per_s_per_g"] = p.gamma;
  j["b_true_g"] = p.b_true;
  j["meas_strength_per_s"] = p.meas_strength;
  j["efficiency"] = p.efficiency;
  if (p.prior_b_variance.is_infinite())
    j["prior_b_variance_g2"] = "infinite";
  else
    j["prior_b_variance_g2"] = p.prior_b_variance.value();
  j["t_total_s"] = p.t_total;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["grid"] = {{"dt_max_s", cfg.grid.dt_max},
               {"points_per_decade", cfg.grid.points_per_decade},
               {"decades_below", cfg.grid.decades_below}};
  j["simulate"] = {{"zero_noise", cfg.simulate.zero_noise},
                   {"cutoff_hz", cfg.simulate.cutoff_hz},
                   {"stream", cfg.simulate.stream}};
  ordered_json ests = ordered_json::array();
  for (auto e : cfg.ensemble.estimators) ests.push_back(std::string(to_string(e)));
  j["ensemble"] = {{"n_traj", cfg.ensemble.n_traj},
                   {"estimators", ests},
                   {"checkpoints_per_decade", cfg.ensemble.checkpoints_per_decade},
                   {"t_from_s", cfg.ensemble.t_from},
                   {"check_times_s", cfg.ensemble.check_times},
                   {"optimality_tolerance", cfg.ensemble.optimality_tolerance},
                   {"abscissa", std::string(to_string(cfg.ensemble.abscissa))}};
  j["scaling"] = {{"j_values", cfg.scaling.j_values},
                  {"t_check_s", cfg.scaling.t_check},
                  {"n_traj", cfg.scaling.n_traj},
                  {"slope_target", cfg.scaling.slope_target},
                  {"slope_tolerance", cfg.scaling.slope_tolerance}};
  j["oracle"] = {{"t_end_s", cfg.oracle.t_end},
                 {"n_seeds", cfg.oracle.n_seeds},
                 {"dephasing_check", cfg.oracle.dephasing_check},
                 {"dephasing_j", cfg.oracle.dephasing_j},
                 {"dephasing_t_end_s", cfg.oracle.dephasing_t_end},
                 {"dephasing_tolerance", cfg.oracle.dephasing_tolerance}};
  return j.dump(indent);
}

}  // namespace qkfmag
