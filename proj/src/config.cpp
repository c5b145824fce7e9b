#include "icr/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <istream>
#include <sstream>

#include "icr/errors.hpp"
#include "icr/io.hpp"

namespace icr {

std::string_view to_string(ChartChoice c) {
  switch (c) {
    case ChartChoice::Identity: return "identity";
    case ChartChoice::Affine: return "affine";
    case ChartChoice::LogSpaced: return "log";
    case ChartChoice::LogExperiment: return "log-experiment";
  }
  return "?";
}

ChartChoice parse_chart_choice(std::string_view name) {
  if (name == "identity") return ChartChoice::Identity;
  if (name == "affine") return ChartChoice::Affine;
  if (name == "log") return ChartChoice::LogSpaced;
  if (name == "log-experiment") return ChartChoice::LogExperiment;
  throw InputError("unknown chart '" + std::string(name) +
                   "' (expected identity, affine, log or log-experiment)");
}

RefinementSpecd ExperimentConfig::refinement_spec() const {
  RefinementSpecd spec;
  spec.n_csz = n_csz;
  spec.n_fsz = n_fsz;
  spec.n_lvl = n_lvl;
  spec.n0 = n0;
  spec.jitter = jitter;
  spec.strategy = strategy;
  return spec;
}

Chartd ExperimentConfig::fixed_chart() const {
  switch (chart) {
    case ChartChoice::Identity: return Chartd::identity();
    case ChartChoice::Affine: return Chartd::affine(chart_scale, chart_offset);
    case ChartChoice::LogSpaced: return Chartd::log_spaced(chart_r0, chart_a);
    case ChartChoice::LogExperiment: break;
  }
  throw InputError("the log-experiment chart is resolved per hierarchy");
}

void ExperimentConfig::validate() const {
  kernel.validate();
  if (chart != ChartChoice::LogExperiment) fixed_chart().validate();
  if (!(spacing_ratio > 1.0))
    throw InputError("chart.spacing_ratio must exceed 1");
  if (n < 0 || n0 < 0) throw InputError("spec.n and spec.n0 must be nonnegative");
  if (n == 0 && n0 == 0) throw InputError("set either spec.n or spec.n0");
  if (candidates.empty()) throw InputError("select.candidates is empty");
  if (kiss_m < 0 || kiss_m == 1) throw InputError("kiss.m must be 0 or at least 2");
  if (!(kiss_padding >= 0) || !(kiss_jitter >= 0))
    throw InputError("kiss.padding and kiss.jitter must be nonnegative");
  if (kiss_cg_iters < 1 || kiss_probes < 1 || kiss_lanczos_iters < 1)
    throw InputError("kiss iteration counts must be positive");
  if (bench_reps < 3) throw InputError("bench.reps must be at least 3");
  if (bench_threads < 1) throw InputError("bench.threads must be positive");
  if (bench_max_n0 < 1) throw InputError("bench.max_n0 must be positive");
  for (long s : bench_sizes)
    if (s < 1) throw InputError("bench.sizes must be positive");
  if (sample_count < 1) throw InputError("sample.count must be positive");
}

namespace {

struct KeyHandler {
  std::string key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

int to_int(std::string_view v) {
  const long x = parse_integer(v);
  if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
    throw InputError("integer out of range: " + std::string(v));
  return static_cast<int>(x);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
KeyHandler int_key(std::string key, T ExperimentConfig::*field) {
  return {std::move(key),
          [field](ExperimentConfig& c, std::string_view v) { c.*field = to_int(v); },
          [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
}

KeyHandler real_key(std::string key, double ExperimentConfig::*field) {
  return {std::move(key),
          [field](ExperimentConfig& c, std::string_view v) { c.*field = parse_number(v); },
          [field](const ExperimentConfig& c) { return format_number(c.*field); }};
}

KeyHandler string_key(std::string key, std::string ExperimentConfig::*field) {
  return {std::move(key),
          [field](ExperimentConfig& c, std::string_view v) { c.*field = std::string(v); },
          [field](const ExperimentConfig& c) { return c.*field; }};
}

const std::vector<KeyHandler>& handlers() {
  static const std::vector<KeyHandler> table = [] {
    using C = ExperimentConfig;
    std::vector<KeyHandler> t;
    t.push_back({"kernel.family",
                 [](C& c, std::string_view v) { c.kernel.family = parse_kernel_family(v); },
                 [](const C& c) { return std::string(to_string(c.kernel.family)); }});
    t.push_back({"kernel.rho",
                 [](C& c, std::string_view v) { c.kernel.rho = parse_number(v); },
                 [](const C& c) { return format_number(c.kernel.rho); }});
    t.push_back({"kernel.amplitude",
                 [](C& c, std::string_view v) { c.kernel.amplitude = parse_number(v); },
                 [](const C& c) { return format_number(c.kernel.amplitude); }});
    const auto chart_set = [](C& c, std::string_view v) { c.chart = parse_chart_choice(v); };
    const auto chart_get = [](const C& c) { return std::string(to_string(c.chart)); };
    t.push_back({"chart", chart_set, chart_get});
    t.push_back({"chart.family", chart_set, chart_get});
    t.push_back(real_key("chart.scale", &C::chart_scale));
    t.push_back(real_key("chart.offset", &C::chart_offset));
    t.push_back(real_key("chart.r0", &C::chart_r0));
    t.push_back(real_key("chart.a", &C::chart_a));
    t.push_back(real_key("chart.spacing_ratio", &C::spacing_ratio));
    t.push_back(int_key("spec.n_csz", &C::n_csz));
    t.push_back(int_key("spec.n_fsz", &C::n_fsz));
    t.push_back(int_key("spec.n_lvl", &C::n_lvl));
    t.push_back(int_key("spec.n", &C::n));
    t.push_back(int_key("spec.n0", &C::n0));
    t.push_back({"spec.strategy",
                 [](C& c, std::string_view v) { c.strategy = parse_fine_strategy(v); },
                 [](const C& c) { return std::string(to_string(c.strategy)); }});
    t.push_back({"spec.size_policy",
                 [](C& c, std::string_view v) { c.size_policy = parse_size_policy(v); },
                 [](const C& c) { return std::string(to_string(c.size_policy)); }});
    t.push_back(real_key("spec.jitter", &C::jitter));
    t.push_back({"select.candidates",
                 [](C& c, std::string_view v) {
                   std::vector<std::pair<int, int>> out;
                   for (auto item : split(v, ',')) {
                     const auto parts = split(trim(item), ':');
                     if (parts.size() != 2)
                       throw InputError("candidate '" + std::string(item) +
                                        "' is not of the form n_csz:n_fsz");
                     out.emplace_back(to_int(trim(parts[0])), to_int(trim(parts[1])));
                   }
                   c.candidates = std::move(out);
                 },
                 [](const C& c) {
                   std::string s;
                   for (const auto& [a, b] : c.candidates)
                     s += (s.empty() ? "" : ",") + std::to_string(a) + ":" +
                          std::to_string(b);
                   return s;
                 }});
    t.push_back(int_key("kiss.m", &C::kiss_m));
    t.push_back(real_key("kiss.padding", &C::kiss_padding));
    t.push_back(real_key("kiss.jitter", &C::kiss_jitter));
    t.push_back(int_key("kiss.cg_iters", &C::kiss_cg_iters));
    t.push_back(int_key("kiss.probes", &C::kiss_probes));
    t.push_back(int_key("kiss.lanczos_iters", &C::kiss_lanczos_iters));
    t.push_back({"bench.sizes",
                 [](C& c, std::string_view v) {
                   std::vector<long> out;
                   for (auto item : split(v, ',')) out.push_back(parse_integer(trim(item)));
                   c.bench_sizes = std::move(out);
                 },
                 [](const C& c) {
                   std::string s;
                   for (long n : c.bench_sizes)
                     s += (s.empty() ? "" : ",") + std::to_string(n);
                   return s;
                 }});
    t.push_back(int_key("bench.reps", &C::bench_reps));
    t.push_back(int_key("bench.threads", &C::bench_threads));
    t.push_back(int_key("bench.max_n0", &C::bench_max_n0));
    t.push_back(int_key("sample.count", &C::sample_count));
    t.push_back({"seed",
                 [](C& c, std::string_view v) {
                   const long s = parse_integer(v);
                   if (s < 0) throw InputError("seed must be nonnegative");
                   c.seed = static_cast<std::uint64_t>(s);
                 },
                 [](const C& c) { return std::to_string(c.seed); }});
    t.push_back(string_key("out", &C::out));
    t.push_back(string_key("debug.dump_matrices", &C::dump_matrices));
    return t;
  }();
  return table;
}

const KeyHandler& find_handler(std::string_view key) {
  for (const auto& h : handlers())
    if (h.key == key) return h;
  std::string msg = "unknown config key '" + std::string(key) + "'; valid keys:";
  for (const auto& h : handlers()) msg += " " + h.key;
  throw InputError(msg);
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& h : handlers()) k.push_back(h.key);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, std::string_view key,
                      std::string_view value) {
  const auto& h = find_handler(key);
  try {
    h.set(cfg, trim(value));
  } catch (const InputError& e) {
    throw InputError("bad value for " + std::string(key) + ": " + e.what());
  }
}

std::string get_config_value(const ExperimentConfig& cfg, std::string_view key) {
  return find_handler(key).get(cfg);
}

void apply_override(ExperimentConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw InputError("override '" + std::string(assignment) +
                     "' is not of the form key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

ExperimentConfig parse_config(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos)
      s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) continue;
    try {
      if (s.find('=') == std::string_view::npos)
        throw InputError("expected key = value");
      apply_override(cfg, s);
    } catch (const InputError& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in, path);
}

std::string format_config(const ExperimentConfig& cfg) {
  std::ostringstream os;
  for (const auto& h : handlers()) {
    if (h.key == "chart.family") continue;
    os << h.key << " = " << h.get(cfg) << '\n';
  }
  return os.str();
}

}  // namespace icr
