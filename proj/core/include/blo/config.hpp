#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "blo/distillation.hpp"
#include "blo/meta_opt.hpp"
#include "blo/pde.hpp"
#include "blo/quadratic.hpp"

namespace blo {

enum class ProblemKind {
  Quadratic,
  CorruptedQuadratic,  // quadratic whose transition_jvp is deliberately wrong
  Distillation,
  Pde,
};

std::string_view to_string(ProblemKind k);
ProblemKind problem_kind_from_string(std::string_view s);

struct ProblemConfig {
  ProblemKind kind = ProblemKind::Quadratic;
  QuadraticSpec quadratic{};
  double phi_init_scale = 0.0;  // quadratic: phi_0 = scale * N(0, I); 0 gives phi_0 = 0
  double corruption = 1e-2;     // relative error injected into the corrupted jvp
  DistillationSpec distillation{};
  PdeDiscoverySpec pde{};
  /// Initial coefficient for PDE discovery: drawn uniformly from (nu_init_low, nu_init_high]
  /// unless nu_init is set. Zero bounds select the per-equation defaults.
  double nu_init_low = 0.0;
  double nu_init_high = 0.0;
  std::optional<double> nu_init;
};

/// Everything a run needs. Parsing rejects unknown keys and out-of-range values before any
/// computation; serialisation writes every field so a resolved config reproduces the run.
struct ExperimentConfig {
  ProblemConfig problem{};
  EstimatorSettings estimator{};
  std::size_t accumulation = 1;
  PhaseSchedule schedule{};
  OptimizerSettings optimizer{};
  std::uint64_t master_seed = 0;
  std::uint64_t init_seed = 0;
  std::string output_directory = "blo_out";
};

/// Default PDE initial-coefficient range for each equation.
std::pair<double, double> pde_default_init_range(PdeKind kind);

/// Parses and validates JSON text. Throws ConfigError naming the offending key.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Pretty-printed JSON with every field resolved.
std::string config_to_json(const ExperimentConfig& config);
/// Range checks shared by the parser and programmatic callers. Throws ConfigError.
void validate_config(const ExperimentConfig& config);

std::unique_ptr<BilevelProblem> make_problem(const ProblemConfig& config);
/// Initial meta parameter for a problem built by make_problem.
MetaVector initial_phi(const ProblemConfig& config, const BilevelProblem& problem,
                       std::uint64_t seed);

/// Wraps a problem and scales every transition_jvp output by (1 + relative_error). Used as a
/// negative control: forward-mode estimators go wrong while reverse mode stays correct.
class CorruptedJvpProblem : public BilevelProblem {
 public:
  CorruptedJvpProblem(std::unique_ptr<BilevelProblem> inner, double relative_error);

  std::string name() const override { return "corrupted-" + inner_->name(); }
  std::size_t meta_dim() const override { return inner_->meta_dim(); }
  std::size_t inner_dim() const override { return inner_->inner_dim(); }

  double meta_loss(const InnerVector& theta, const MetaVector& phi) const override;
  InnerVector inner_init(const MetaVector& phi) const override;
  InnerVector transition(const InnerVector& theta, const MetaVector& phi, std::size_t t,
                         std::uint64_t seed) const override;
  InnerVector partial_f_theta(const InnerVector& theta, const MetaVector& phi) const override;
  MetaVector partial_f_phi(const InnerVector& theta, const MetaVector& phi) const override;
  InnerVector init_jvp(const MetaVector& phi, const MetaVector& v) const override;
  MetaVector init_vjp(const MetaVector& phi, const InnerVector& d) const override;
  InnerVector transition_jvp(const InnerVector& theta, const MetaVector& phi, std::size_t t,
                             std::uint64_t seed, const InnerVector& y,
                             const MetaVector& v) const override;
  TransitionCotangent transition_vjp(const InnerVector& theta, const MetaVector& phi,
                                     std::size_t t, std::uint64_t seed,
                                     const InnerVector& d) const override;
  InnerVector g_hvp(const InnerVector& theta, const MetaVector& phi,
                    const InnerVector& u) const override;
  MetaVector g_cross_vjp(const InnerVector& theta, const MetaVector& phi,
                         const InnerVector& r) const override;

 private:
  std::unique_ptr<BilevelProblem> inner_;
  double relative_error_;
};

}  // namespace blo
