#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "blo/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bi-level optimization toolkit: forward-gradient hypergradient estimators"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Train from a JSON config and write run artifacts");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides output.directory)");

  std::string problem = "quadratic";
  std::size_t T = 5;
  std::uint64_t seed = 0;
  auto* grad = app.add_subcommand("gradcheck", "Cross-check exact hypergradient computations");
  grad->add_option("--problem", problem, "quadratic, distillation or corrupted-quadratic");
  grad->add_option("--T", T, "Unroll depth");
  grad->add_option("--seed", seed, "Problem and inner seed");

  std::size_t n = 50;
  std::string b_list = "1";
  std::size_t samples = 10000;
  std::string variance_out;
  auto* var = app.add_subcommand("variance", "Empirical variance ratio versus (N-1)/b");
  var->add_option("--n", n, "Meta dimension N");
  var->add_option("--b", b_list, "Comma-separated direction counts");
  var->add_option("--samples", samples, "Independent estimates per row");
  var->add_option("--out", variance_out, "CSV output path");
  var->add_option("--seed", seed, "Sampling seed");

  std::string threads_list = "1";
  std::size_t steps = 3;
  std::string bench_out;
  auto* bench = app.add_subcommand("bench", "Time meta steps across thread counts");
  bench->add_option("--config", config_path, "Experiment config (JSON)")->required();
  bench->add_option("--threads", threads_list, "Comma-separated thread counts");
  bench->add_option("--steps", steps, "Meta steps to time per thread count");
  bench->add_option("--out", bench_out, "CSV output path");

  CLI11_PARSE(app, argc, argv);

  const auto optional_path = [](const std::string& s) {
    return s.empty() ? std::nullopt : std::optional<std::filesystem::path>(s);
  };
  try {
    if (*run) return blo::cmd_run(config_path, optional_path(out_dir), std::cout, std::cerr);
    if (*grad) return blo::cmd_gradcheck(problem, T, seed, std::cout, std::cerr);
    if (*var)
      return blo::cmd_variance(n, blo::parse_size_list(b_list), samples,
                               optional_path(variance_out), seed, std::cout, std::cerr);
    if (*bench)
      return blo::cmd_bench(config_path, blo::parse_size_list(threads_list), steps,
                            optional_path(bench_out), std::cout, std::cerr);
  } catch (const blo::InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return blo::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return blo::kExitConfig;
  }
  return blo::kExitOk;
}
