#include "icr/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <new>
#include <iostream>
#include <ostream>

#include "icr/parallel.hpp"

namespace icr {

namespace fs = std::filesystem;

std::string_view to_string(Method m) { return m == Method::Icr ? "icr" : "kiss"; }

Method parse_method(std::string_view name) {
  if (name == "icr") return Method::Icr;
  if (name == "kiss") return Method::Kiss;
  throw InputError("unknown method '" + std::string(name) + "' (expected icr or kiss)");
}

ExperimentSetup<double> experiment_setup(const ExperimentConfig& cfg) {
  ExperimentSetup<double> s;
  s.kernel = cfg.kernel;
  s.chart = cfg.chart == ChartChoice::LogExperiment
                ? ChartRule<double>::log_spaced_experiment(cfg.spacing_ratio)
                : ChartRule<double>::fixed_chart(cfg.fixed_chart());
  s.n = cfg.n;
  s.n_lvl = cfg.n_lvl;
  s.strategy = cfg.strategy;
  s.size_policy = cfg.size_policy;
  s.jitter = cfg.jitter;
  return s;
}

IcrModeld build_icr_model(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto setup = experiment_setup(cfg);
  IcrModeld model = [&] {
    if (cfg.n > 0) return build_experiment_model(setup, cfg.n_csz, cfg.n_fsz);
    const auto spec = cfg.refinement_spec();
    const auto chart = setup.chart.resolve(build_hierarchy(spec), cfg.kernel.rho);
    return build_model(cfg.kernel, chart, spec);
  }();
  if (!cfg.dump_matrices.empty()) dump_refinement_matrices(model, cfg.dump_matrices);
  return model;
}

KissModeld build_kiss_model(const ExperimentConfig& cfg,
                            const Eigen::VectorXd& modeled) {
  if (modeled.size() > 1 && modeled(1) < modeled(0))
    throw InputError("KISS needs increasing modeled coordinates; use a chart "
                     "with positive orientation");
  const Eigen::Index m = cfg.kiss_m > 0 ? cfg.kiss_m : modeled.size();
  return build_kiss(cfg.kernel, modeled, std::max<Eigen::Index>(m, 2),
                    cfg.kiss_padding, cfg.kiss_jitter * cfg.kernel.amplitude);
}

void dump_refinement_matrices(const IcrModeld& model, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
  write_matrix_csv((fs::path(dir) / "base.csv").string(), model.hierarchy.levels[0],
                   model.sqrtK0);
  for (std::size_t l = 0; l < model.levels.size(); ++l) {
    const auto& lm = model.levels[l];
    CsvTable t;
    t.header = {"window", "fine"};
    for (int j = 0; j < lm.n_csz; ++j) t.header.push_back("R_" + std::to_string(j));
    for (int j = 0; j < lm.n_fsz; ++j) t.header.push_back("sqrtD_" + std::to_string(j));
    for (int b = 0; b < lm.blocks(); ++b)
      for (int f = 0; f < lm.n_fsz; ++f) {
        const Eigen::Index r = Eigen::Index(b) * lm.n_fsz + f;
        std::vector<std::string> row{lm.broadcast ? "*" : std::to_string(b),
                                     std::to_string(f)};
        for (int j = 0; j < lm.n_csz; ++j) row.push_back(format_number(lm.R(r, j)));
        for (int j = 0; j < lm.n_fsz; ++j) row.push_back(format_number(lm.sqrtD(r, j)));
        t.rows.push_back(std::move(row));
      }
    write_csv((fs::path(dir) / ("level_" + std::to_string(l + 1) + ".csv")).string(), t);
  }
}

namespace {

void require_out(const ExperimentConfig& cfg) {
  if (cfg.out.empty()) throw InputError("no output path; pass --out or set out=");
}

nlohmann::json icr_params(const IcrModeld& m) {
  return {{"n_csz", m.spec.n_csz},
          {"n_fsz", m.spec.n_fsz},
          {"n_lvl", m.spec.n_lvl},
          {"n0", m.spec.n0},
          {"strategy", std::string(to_string(m.spec.strategy))}};
}

nlohmann::json kiss_params(const KissModeld& k) {
  return {{"m", k.m},
          {"padding", k.padding_factor},
          {"jitter", k.diag_jitter},
          {"clipped", k.clipped_count}};
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

nlohmann::json metrics_json(const CovarianceComparison& c, Method method,
                            nlohmann::json params) {
  return {{"n", c.n},
          {"method", std::string(to_string(method))},
          {"mae", c.mae},
          {"max_abs_err", c.max_abs_err},
          {"max_diag_err", c.max_diag_err},
          {"kl", number_or_null(c.kl_true_from_approx)},
          {"kl_jitter", c.kl_jitter},
          {"params", std::move(params)}};
}

struct Approximation {
  IcrModeld model;
  Eigen::MatrixXd cov;
  nlohmann::json params;
};

Approximation approximate(const ExperimentConfig& cfg, Method method) {
  Approximation a{build_icr_model(cfg), {}, {}};
  if (method == Method::Icr) {
    a.cov = implicit_covariance(a.model);
    a.params = icr_params(a.model);
  } else {
    const auto k = build_kiss_model(cfg, a.model.modeled_coords());
    a.cov = kiss_covariance(k, kDenseGuard);
    a.params = kiss_params(k);
  }
  return a;
}

std::string sibling(const std::string& out, const std::string& suffix) {
  const fs::path p(out);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

template <typename F>
std::vector<double> time_reps(int reps, F&& body) {
  body();
  std::vector<double> ms;
  ms.reserve(reps);
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return ms;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void fill_stats(BenchRow& row, const std::vector<double>& ms) {
  row.median_ms = median(ms);
  row.min_ms = *std::min_element(ms.begin(), ms.end());
  row.max_ms = *std::max_element(ms.begin(), ms.end());
}

Eigen::VectorXd standard_normal(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace

void cmd_sample(const ExperimentConfig& cfg) {
  require_out(cfg);
  const auto model = build_icr_model(cfg);
  Eigen::MatrixXd values(model.output_size(), cfg.sample_count);
  for (int s = 0; s < cfg.sample_count; ++s)
    values.col(s) = sample(model, cfg.seed + static_cast<std::uint64_t>(s));
  write_samples_csv(cfg.out, model.euclidean_coords(), model.modeled_coords(), values);
}

void cmd_covariance(const ExperimentConfig& cfg, Method method) {
  require_out(cfg);
  const auto a = approximate(cfg, method);
  write_matrix_csv(cfg.out, a.model.modeled_coords(), a.cov);
}

nlohmann::json cmd_compare(const ExperimentConfig& cfg, Method method) {
  require_out(cfg);
  const auto a = approximate(cfg, method);
  const Eigen::MatrixXd truth = true_covariance(a.model);
  const auto metrics = compare_covariances(truth, a.cov);
  const auto coords = a.model.modeled_coords();
  write_matrix_csv(sibling(cfg.out, "_true.csv"), coords, truth);
  write_matrix_csv(sibling(cfg.out, "_approx.csv"), coords, a.cov);
  write_matrix_csv(sibling(cfg.out, "_delta.csv"), coords, (truth - a.cov).cwiseAbs());
  auto j = metrics_json(metrics, method, a.params);
  write_json(cfg.out, j);
  return j;
}

nlohmann::json cmd_select_params(const ExperimentConfig& cfg) {
  require_out(cfg);
  cfg.validate();
  const auto setup = experiment_setup(cfg);
  if (setup.n <= 0) throw InputError("select-params needs spec.n");
  const auto sel = select_refinement_params(setup, cfg.candidates);
  nlohmann::json table = nlohmann::json::array();
  const CandidateResult* winner = nullptr;
  for (const auto& row : sel.table) {
    if (row.reachable && row.n_csz == sel.n_csz && row.n_fsz == sel.n_fsz) winner = &row;
    nlohmann::json r = {{"n_csz", row.n_csz},
                        {"n_fsz", row.n_fsz},
                        {"reachable", row.reachable}};
    if (row.reachable) {
      r["kl"] = number_or_null(row.metrics.kl_true_from_approx);
      r["mae"] = row.metrics.mae;
      r["n0"] = row.n0;
    } else {
      r["kl"] = nullptr;
      r["mae"] = nullptr;
      r["reason"] = row.reason;
    }
    table.push_back(std::move(r));
  }
  nlohmann::json params = {{"n_csz", winner->n_csz},
                           {"n_fsz", winner->n_fsz},
                           {"n_lvl", cfg.n_lvl},
                           {"n0", winner->n0},
                           {"strategy", std::string(to_string(cfg.strategy))}};
  auto j = metrics_json(winner->metrics, Method::Icr, std::move(params));
  j["candidates"] = std::move(table);
  write_json(cfg.out, j);
  return j;
}

int auto_levels(long n, int max_n0, int n_csz, int n_fsz, FineStrategy strategy) {
  for (int lvl = 0; lvl < 64; ++lvl) {
    try {
      const auto r = resolve_target_size(static_cast<int>(n), lvl, n_csz, n_fsz,
                                         strategy, SizePolicy::Crop);
      if (r.n0 <= max_n0) return lvl;
    } catch (const SpecError&) {
    }
  }
  throw SpecError("no level count brings the base of " + std::to_string(n) +
                  " points below " + std::to_string(max_n0) + " pixels");
}

std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, Method method,
                                std::ostream* log) {
  cfg.validate();
  set_num_threads(cfg.bench_threads);
  std::vector<BenchRow> rows;
  for (long n : cfg.bench_sizes) {
    BenchRow row;
    row.method = std::string(to_string(method));
    row.n = n;
    row.threads = num_threads();
    ExperimentConfig c = cfg;
    c.n = static_cast<int>(n);
    c.size_policy = SizePolicy::Crop;
    c.n_lvl = auto_levels(n, cfg.bench_max_n0, cfg.n_csz, cfg.n_fsz, cfg.strategy);
    c.dump_matrices.clear();
    try {
      const auto b0 = std::chrono::steady_clock::now();
      const auto model = build_icr_model(c);
      const auto b1 = std::chrono::steady_clock::now();
      if (method == Method::Icr) {
        row.params = "n_csz=" + std::to_string(c.n_csz) + ";n_fsz=" +
                     std::to_string(c.n_fsz) + ";n_lvl=" + std::to_string(c.n_lvl) +
                     ";n0=" + std::to_string(model.spec.n0);
        row.build_ms = std::chrono::duration<double, std::milli>(b1 - b0).count();
        auto xi = model.make_latent();
        draw_standard_normal(xi, cfg.seed);
        Eigen::VectorXd s;
        fill_stats(row, time_reps(cfg.bench_reps, [&] { s = apply_sqrt(model, xi); }));
      } else {
        const auto k0 = std::chrono::steady_clock::now();
        const auto kiss = build_kiss_model(c, model.modeled_coords());
        const auto k1 = std::chrono::steady_clock::now();
        row.params = "m=" + std::to_string(kiss.m) +
                     ";padding=" + format_number(kiss.padding_factor);
        row.build_ms = std::chrono::duration<double, std::milli>(k1 - k0).count();
        const Eigen::VectorXd s = standard_normal(kiss.n(), cfg.seed);
        KissForwardPass<double> fp;
        fill_stats(row, time_reps(cfg.bench_reps, [&] {
                     fp = kiss_forward_pass(kiss, s, cfg.kiss_cg_iters,
                                            cfg.kiss_probes, cfg.kiss_lanczos_iters,
                                            cfg.seed);
                   }));
      }
    } catch (const std::bad_alloc&) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      row.params += (row.params.empty() ? "" : ";") + std::string("skipped=out_of_memory");
      row.build_ms = row.median_ms = row.min_ms = row.max_ms = nan;
      if (log) *log << "warning: " << row.method << " N=" << n << " ran out of memory\n";
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  CsvTable t;
  t.header = {"method", "n", "params", "build_ms", "median_ms", "min_ms", "max_ms", "threads"};
  for (const auto& r : rows)
    t.rows.push_back({r.method, std::to_string(r.n), r.params, format_number(r.build_ms),
                      format_number(r.median_ms), format_number(r.min_ms),
                      format_number(r.max_ms), std::to_string(r.threads)});
  write_csv(path, t);
}

std::vector<BenchRow> read_bench_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto c = [&](const char* name) { return t.column(name); };
  const auto cm = c("method"), cn = c("n"), cp = c("params"), cb = c("build_ms"),
             cmed = c("median_ms"), cmin = c("min_ms"), cmax = c("max_ms"),
             ct = c("threads");
  std::vector<BenchRow> rows;
  for (const auto& r : t.rows) {
    BenchRow b;
    b.method = r[cm];
    b.n = parse_integer(r[cn]);
    b.params = r[cp];
    b.build_ms = parse_number(r[cb]);
    b.median_ms = parse_number(r[cmed]);
    b.min_ms = parse_number(r[cmin]);
    b.max_ms = parse_number(r[cmax]);
    b.threads = static_cast<int>(parse_integer(r[ct]));
    rows.push_back(std::move(b));
  }
  return rows;
}

void cmd_bench(const ExperimentConfig& cfg, Method method) {
  require_out(cfg);
  write_bench_csv(cfg.out, run_bench(cfg, method, &std::cerr));
}

}  // namespace icr
