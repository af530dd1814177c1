#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blo/config.hpp"

namespace blo {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitDivergence = 2,
  kExitTolerance = 3,
};

/// Runs training from a config file and writes run.csv, run_timing.csv, final_phi.bin and
/// resolved_config.json into the output directory (`out_dir` overrides the config's).
/// run.csv holds wall_seconds = 0 so identical configs give byte-identical files; the real
/// per-step timings go to run_timing.csv. Diagnostics go to `err`.
int cmd_run(const std::filesystem::path& config_path,
            const std::optional<std::filesystem::path>& out_dir, std::ostream& out,
            std::ostream& err);

/// Same as cmd_run for an already parsed config.
int run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                   std::ostream& out, std::ostream& err);

struct GradcheckEntry {
  std::string a;
  std::string b;
  double max_relative_error = 0.0;
  double threshold = 0.0;
  bool ok = true;
};

struct GradcheckReport {
  std::string problem;
  std::size_t T = 0;
  std::vector<GradcheckEntry> pairs;
  bool ok() const;
};

/// Compares fd, fgu_full, rgu, trgu(s = T) and fg2u over the full coordinate basis on a
/// small instance of `problem` ("quadratic", "distillation" or "corrupted-quadratic").
GradcheckReport gradcheck(const std::string& problem, std::size_t T, std::uint64_t seed);
void print_gradcheck(std::ostream& out, const GradcheckReport& report);
int cmd_gradcheck(const std::string& problem, std::size_t T, std::uint64_t seed,
                  std::ostream& out, std::ostream& err);

/// Rows below this many samples are reported but flagged and excluded from the pass/fail check.
inline constexpr std::size_t kVarianceMinConfidentSamples = 1000;
inline constexpr double kVarianceTolerance = 0.05;

struct VarianceRow {
  std::size_t n = 0;
  std::size_t b = 0;
  std::size_t samples = 0;
  double predicted_ratio = 0.0;
  double empirical_ratio = 0.0;
  double ratio_std_error = 0.0;
  std::string status;  // "ok", "out-of-tolerance" or "low-confidence"
};

/// The auto-constructed quadratic used by the variance study at meta dimension n.
QuadraticSpec variance_problem_spec(std::size_t n);

std::vector<VarianceRow> variance_study(std::size_t n, const std::vector<std::size_t>& bs,
                                        std::size_t samples, std::uint64_t seed,
                                        std::size_t threads);
void write_variance_csv(std::ostream& out, const std::vector<VarianceRow>& rows);
std::vector<VarianceRow> read_variance_csv(std::istream& in);
/// Writes the CSV to `out_path` (or `out` when empty) and returns 3 if a confident row misses
/// the tolerance.
int cmd_variance(std::size_t n, const std::vector<std::size_t>& bs, std::size_t samples,
                 const std::optional<std::filesystem::path>& out_path, std::uint64_t seed,
                 std::ostream& out, std::ostream& err);

struct BenchRow {
  std::size_t threads = 0;
  std::size_t b = 0;
  double seconds_per_meta_step = 0.0;
  std::int64_t peak_resident_floats = 0;
};

/// Peak number of floats allocated while computing one estimate, above the level live before.
std::int64_t estimate_footprint(const BilevelProblem& problem, const EstimatorSettings& settings,
                                const MetaVector& phi, std::uint64_t run_seed,
                                std::uint64_t directions_seed);

struct BenchResult {
  std::vector<BenchRow> rows;
  bool bit_identical = true;  // gradient bits agree across every thread count
};

/// Times `steps` meta steps of the config's main estimator at each thread count.
BenchResult bench(const ExperimentConfig& config, const std::vector<std::size_t>& threads,
                  std::size_t steps);
void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows);
std::vector<BenchRow> read_bench_csv(std::istream& in);
int cmd_bench(const std::filesystem::path& config_path, const std::vector<std::size_t>& threads,
              std::size_t steps, const std::optional<std::filesystem::path>& out_path,
              std::ostream& out, std::ostream& err);

/// Parses "1,2,4" into {1, 2, 4}. Throws InvalidArgument on anything else.
std::vector<std::size_t> parse_size_list(const std::string& text);

}  // namespace blo
