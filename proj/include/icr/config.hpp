#ifndef ICR_CONFIG_HPP
#define ICR_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "icr/charts.hpp"
#include "icr/kernels.hpp"
#include "icr/refine_spec.hpp"

namespace icr {

/// How the modeled coordinates are chosen.
enum class ChartChoice { Identity, Affine, LogSpaced, LogExperiment };

std::string_view to_string(ChartChoice c);
ChartChoice parse_chart_choice(std::string_view name);

/// Everything a harness run needs. Read from a flat `key = value` file,
/// `#` starts a comment.
struct ExperimentConfig {
  Kerneld kernel{KernelFamily::Matern32, 1.0, 1.0};

  ChartChoice chart = ChartChoice::LogExperiment;
  double chart_scale = 1.0;
  double chart_offset = 0.0;
  double chart_r0 = 1.0;
  double chart_a = 1.0;
  double spacing_ratio = 50.0;

  int n_csz = 5;
  int n_fsz = 4;
  int n_lvl = 5;
  /// Target number of modeled points; 0 means "whole final level of n0".
  int n = 200;
  int n0 = 0;
  FineStrategy strategy = FineStrategy::Extend;
  SizePolicy size_policy = SizePolicy::Crop;
  double jitter = 1e-12;

  std::vector<std::pair<int, int>> candidates{{3, 2}, {3, 4}, {5, 2}, {5, 4}, {5, 6}};

  /// Inducing points; 0 means one per modeled point.
  int kiss_m = 0;
  double kiss_padding = 0.5;
  double kiss_jitter = 1e-6;
  int kiss_cg_iters = 40;
  int kiss_probes = 10;
  int kiss_lanczos_iters = 15;

  std::vector<long> bench_sizes{1 << 14, 1 << 15, 1 << 16};
  int bench_reps = 5;
  int bench_threads = 1;
  /// Benchmarks pick the smallest n_lvl whose base has at most this many
  /// pixels.
  int bench_max_n0 = 64;

  int sample_count = 1;
  std::uint64_t seed = 0;
  std::string out;
  /// Directory receiving per-level refinement matrices; empty disables.
  std::string dump_matrices;

  /// ICR-side settings shared by every command.
  RefinementSpecd refinement_spec() const;
  /// Chart for a fixed chart choice. Throws for LogExperiment, which depends
  /// on the hierarchy.
  Chartd fixed_chart() const;
  void validate() const;
};

/// Every accepted key in file order.
const std::vector<std::string>& config_keys();

/// Sets one key; throws InputError naming the key on a bad value and listing
/// the valid keys for an unknown one.
void set_config_value(ExperimentConfig& cfg, std::string_view key,
                      std::string_view value);
/// `key=value` as given on the command line.
void apply_override(ExperimentConfig& cfg, std::string_view assignment);
std::string get_config_value(const ExperimentConfig& cfg, std::string_view key);

ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);
/// Serializes every key; parse_config reads it back to an equal config.
std::string format_config(const ExperimentConfig& cfg);

}  // namespace icr

#endif  // ICR_CONFIG_HPP
