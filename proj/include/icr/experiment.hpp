#ifndef ICR_EXPERIMENT_HPP
#define ICR_EXPERIMENT_HPP

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "icr/config.hpp"
#include "icr/exactgp.hpp"
#include "icr/generate.hpp"
#include "icr/io.hpp"
#include "icr/kiss.hpp"

namespace icr {

enum class Method { Icr, Kiss };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

ExperimentSetup<double> experiment_setup(const ExperimentConfig& cfg);
/// ICR model for the configured shape and size. Dumps the refinement
/// matrices when `cfg.dump_matrices` is set.
IcrModeld build_icr_model(const ExperimentConfig& cfg);
/// KISS model on the given modeled points; `kiss.m = 0` uses one inducing
/// point per modeled point.
KissModeld build_kiss_model(const ExperimentConfig& cfg,
                            const Eigen::VectorXd& modeled);

/// Base factor as `base.csv` and one `level_<l>.csv` per level with columns
/// window, fine, R_0.., sqrtD_0.. (window `*` marks a broadcast pair).
void dump_refinement_matrices(const IcrModeld& model, const std::string& dir);

/// Writes `sample.count` realizations to `cfg.out`.
void cmd_sample(const ExperimentConfig& cfg);

/// Writes the approximate covariance of `method` to `cfg.out`.
void cmd_covariance(const ExperimentConfig& cfg, Method method);

/// Metrics JSON at `cfg.out` plus `<stem>_true.csv`, `<stem>_approx.csv` and
/// `<stem>_delta.csv` next to it. Returns the JSON.
nlohmann::json cmd_compare(const ExperimentConfig& cfg, Method method);

nlohmann::json cmd_select_params(const ExperimentConfig& cfg);

struct BenchRow {
  std::string method;
  long n = 0;
  std::string params;
  double build_ms = 0;
  double median_ms = 0;
  double min_ms = 0;
  double max_ms = 0;
  int threads = 1;
};

/// Smallest n_lvl whose base level for `n` points has at most `max_n0`
/// pixels.
int auto_levels(long n, int max_n0, int n_csz, int n_fsz, FineStrategy strategy);

/// Timings for every size in `cfg.bench_sizes`. Sizes that run out of memory
/// produce a row with NaN timings and a warning on `log`.
std::vector<BenchRow> run_bench(const ExperimentConfig& cfg, Method method,
                                std::ostream* log = nullptr);
void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);
std::vector<BenchRow> read_bench_csv(const std::string& path);
void cmd_bench(const ExperimentConfig& cfg, Method method);

}  // namespace icr

#endif  // ICR_EXPERIMENT_HPP
