#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "blo/estimators.hpp"

namespace blo {

enum class OptimizerKind { GD, Adam };

std::string_view to_string(OptimizerKind k);
OptimizerKind optimizer_from_string(std::string_view s);

struct OptimizerSettings {
  OptimizerKind kind = OptimizerKind::Adam;
  double step_size = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Meta update map: GD (phi - beta g) or Adam with bias-corrected moments.
class MetaOptimizer {
 public:
  MetaOptimizer(const OptimizerSettings& settings, std::size_t meta_dim);

  /// Returns the updated phi; the optimizer state advances only on success.
  /// Throws DivergenceError when the update is non-finite.
  MetaVector step(const MetaVector& phi, const MetaVector& grad);

  const OptimizerSettings& settings() const noexcept { return settings_; }
  std::size_t timestep() const noexcept { return t_; }
  const MetaVector& first_moment() const noexcept { return m_; }
  const MetaVector& second_moment() const noexcept { return v_; }

 private:
  OptimizerSettings settings_;
  MetaVector m_;
  MetaVector v_;
  std::size_t t_ = 0;
};

inline MetaVector meta_step(MetaOptimizer& opt, const MetaVector& phi, const GradientEstimate& g) {
  return opt.step(phi, g.grad);
}

struct Phase {
  std::optional<EstimatorKind> estimator;  // empty means the phase is skipped
  std::size_t steps = 0;
};

/// Cheap biased estimator first, forward-gradient estimator second.
struct PhaseSchedule {
  Phase phase1{std::nullopt, 0};
  Phase phase2{EstimatorKind::Fg2u, 0};

  std::size_t total_steps() const noexcept {
    return (phase1.estimator ? phase1.steps : 0) + (phase2.estimator ? phase2.steps : 0);
  }
};

struct RunRow {
  std::size_t step = 0;
  int phase = 0;
  double meta_loss = 0.0;
  double grad_norm = 0.0;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
};

struct RunRecord {
  std::vector<RunRow> rows;
  bool diverged = false;
  std::string divergence_message;
};

/// Writes the header `step,phase,meta_loss,grad_norm,wall_seconds,seed` and one line per row.
/// Floats use the shortest representation that round-trips.
void write_run_csv(std::ostream& out, const RunRecord& record);
/// Parses what write_run_csv produces. Throws InvalidArgument on malformed input.
RunRecord read_run_csv(std::istream& in);

struct TrainingSettings {
  PhaseSchedule schedule;
  EstimatorSettings phase1;  // kind is overwritten by the schedule
  EstimatorSettings phase2;
  OptimizerSettings optimizer;
  std::size_t accumulation = 1;
  std::uint64_t master_seed = 0;
  /// Record real per-step timings; when false wall_seconds is written as 0 so reruns are
  /// byte-identical.
  bool record_wall_time = false;
};

struct TrainingResult {
  MetaVector phi;
  RunRecord record;
};

/// Seeds for meta step k and accumulation slot a; pure functions of the master seed.
std::uint64_t training_run_seed(std::uint64_t master_seed, std::size_t k, std::size_t a);
std::uint64_t training_directions_seed(std::uint64_t master_seed, std::size_t k, std::size_t a);

/// Runs phase 1 then phase 2 from phi0. Each step averages `accumulation` estimates before the
/// optimizer update. Rows record the loss observed at the pre-update phi. A DivergenceError
/// stops the run; the partial record and the last finite phi are returned with
/// `record.diverged` set. phi_ref for the Vr estimator is the previous iterate.
TrainingResult run_training(const BilevelProblem& problem, const TrainingSettings& settings,
                            const MetaVector& phi0);

}  // namespace blo
