#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icr/experiment.hpp"
#include "icr/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Iterative charted refinement: sampling, accuracy and timing harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::string method_name = "icr";
  std::string dump_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::vector<std::string> overrides;

  app.add_option("--config", config_path, "Flat key=value configuration file")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out, "Output file");
  app.add_option("--method", method_name, "Approximation to evaluate")
      ->check(CLI::IsMember({"icr", "kiss"}));
  app.add_option("--threads", threads, "Worker threads (falls back to ICR_THREADS)")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "Override a config key, e.g. --set spec.n_lvl=5");
  app.add_option("--dump-matrices", dump_dir,
                 "Write base factor and refinement matrices as CSV into this directory");

  auto* sample = app.add_subcommand("sample", "Draw ICR samples");
  auto* covariance = app.add_subcommand("covariance", "Write the approximate covariance");
  auto* compare = app.add_subcommand("compare", "Compare against the exact covariance");
  auto* select = app.add_subcommand("select-params", "KL-driven choice of (n_csz, n_fsz)");
  auto* bench = app.add_subcommand("bench", "Forward-pass timings");

  CLI11_PARSE(app, argc, argv);

  try {
    icr::ExperimentConfig cfg =
        config_path.empty() ? icr::ExperimentConfig{} : icr::load_config(config_path);
    for (const auto& o : overrides) icr::apply_override(cfg, o);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.out = out;
    if (!dump_dir.empty()) cfg.dump_matrices = dump_dir;
    if (threads) {
      cfg.bench_threads = *threads;
    } else if (const char* env = std::getenv("ICR_THREADS"); env && *env) {
      const long t = icr::parse_integer(env);
      if (t < 1) throw icr::InputError("ICR_THREADS must be positive");
      cfg.bench_threads = static_cast<int>(t);
    }
    icr::set_num_threads(cfg.bench_threads);
    const auto method = icr::parse_method(method_name);

    if (sample->parsed()) {
      icr::cmd_sample(cfg);
    } else if (covariance->parsed()) {
      icr::cmd_covariance(cfg, method);
    } else if (compare->parsed()) {
      const auto j = icr::cmd_compare(cfg, method);
      std::cout << j.dump() << '\n';
    } else if (select->parsed()) {
      const auto j = icr::cmd_select_params(cfg);
      std::cout << "selected (" << j["params"]["n_csz"] << ", " << j["params"]["n_fsz"]
                << ")\n";
    } else if (bench->parsed()) {
      icr::cmd_bench(cfg, method);
    }
  } catch (const std::exception& e) {
    std::cerr << "icr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
