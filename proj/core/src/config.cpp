#include "blo/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "blo/rng.hpp"

namespace blo {
namespace {

using json = nlohmann::json;

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

/// Typed access to one JSON object that remembers which keys were read, so anything left
/// over can be reported as unknown.
class Reader {
 public:
  Reader(const json* obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (obj_ && !obj_->is_object()) throw ConfigError(path_, "expected an object");
  }

  Reader child(std::string_view key) {
    const json* v = find(key);
    return Reader(v, join(path_, key));
  }

  void get(std::string_view key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(join(path_, key), "expected a number");
      out = v->get<double>();
    }
  }
  void get(std::string_view key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned())
        throw ConfigError(join(path_, key), "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get_u64(std::string_view key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned())
        throw ConfigError(join(path_, key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(std::string_view key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(std::string_view key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(join(path_, key), "expected a string");
      out = v->get<std::string>();
    }
  }
  template <class T>
  void get(std::string_view key, std::optional<T>& out) {
    if (const json* v = find(key)) {
      if (v->is_null()) {
        out.reset();
        return;
      }
      T value{};
      get(key, value);
      out = value;
    }
  }
  /// Reads a string and maps it through `parse`, reporting parse failures against the key.
  template <class T, class Parse>
  void get_enum(std::string_view key, T& out, Parse parse) {
    std::string s;
    if (!find(key)) return;
    get(key, s);
    try {
      out = parse(s);
    } catch (const InvalidArgument& e) {
      throw ConfigError(join(path_, key), e.what());
    }
  }

  bool has(std::string_view key) const { return obj_ && obj_->contains(std::string(key)); }

  void finish() const {
    if (!obj_) return;
    for (const auto& [key, value] : obj_->items())
      if (!seen_.count(key)) throw ConfigError(join(path_, key), "unknown key");
  }

 private:
  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    if (!obj_) return nullptr;
    const auto it = obj_->find(std::string(key));
    return it == obj_->end() ? nullptr : &*it;
  }

  const json* obj_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string_view to_string(QuadraticInit i) {
  switch (i) {
    case QuadraticInit::Zero:
      return "zero";
    case QuadraticInit::FixedPoint:
      return "fixed_point";
    case QuadraticInit::Random:
      return "random";
  }
  return "zero";
}

QuadraticInit quadratic_init_from_string(std::string_view s) {
  if (s == "zero") return QuadraticInit::Zero;
  if (s == "fixed_point") return QuadraticInit::FixedPoint;
  if (s == "random") return QuadraticInit::Random;
  throw InvalidArgument("unknown quadratic init '" + std::string(s) + "'");
}

std::optional<EstimatorKind> phase_estimator_from_string(std::string_view s) {
  if (s == "none") return std::nullopt;
  return estimator_from_string(s);
}

void read_quadratic(Reader& r, ProblemConfig& p) {
  auto& q = p.quadratic;
  r.get("inner_dim", q.inner_dim);
  r.get("meta_dim", q.meta_dim);
  r.get("eig_min", q.eig_min);
  r.get("eig_max", q.eig_max);
  r.get("eta", q.eta);
  r.get("lambda", q.lambda);
  r.get_enum("init", q.init, quadratic_init_from_string);
  r.get_u64("seed", q.seed);
  r.get("phi_init_scale", p.phi_init_scale);
}

void read_distillation(Reader& r, DistillationSpec& d) {
  r.get("classes", d.classes);
  r.get("feature_dim", d.feature_dim);
  r.get("images_per_class", d.images_per_class);
  r.get("samples_per_class", d.samples_per_class);
  r.get("hidden", d.hidden);
  r.get("eta", d.eta);
  r.get("weight_decay", d.weight_decay);
  r.get("class_separation", d.class_separation);
  r.get("noise", d.noise);
  r.get("init_scale", d.init_scale);
  r.get_u64("seed", d.seed);
}

void read_pde(Reader& r, ProblemConfig& p) {
  auto& s = p.pde;
  r.get_enum("equation", s.kind, pde_kind_from_string);
  r.get("nu_true", s.nu_true);
  r.get("nx", s.grid.nx);
  r.get("nt", s.grid.nt);
  r.get("obs_x", s.obs_x);
  r.get("obs_t", s.obs_t);
  r.get("log_parameter", s.log_parameter);
  r.get("nu_init_low", p.nu_init_low);
  r.get("nu_init_high", p.nu_init_high);
  r.get("nu_init", p.nu_init);
}

json problem_to_json(const ProblemConfig& p) {
  json j;
  j["kind"] = std::string(to_string(p.kind));
  switch (p.kind) {
    case ProblemKind::Quadratic:
    case ProblemKind::CorruptedQuadratic: {
      const auto& q = p.quadratic;
      j["inner_dim"] = q.inner_dim;
      j["meta_dim"] = q.meta_dim;
      j["eig_min"] = q.eig_min;
      j["eig_max"] = q.eig_max;
      j["eta"] = q.eta;
      j["lambda"] = q.lambda;
      j["init"] = std::string(to_string(q.init));
      j["seed"] = q.seed;
      j["phi_init_scale"] = p.phi_init_scale;
      if (p.kind == ProblemKind::CorruptedQuadratic) j["corruption"] = p.corruption;
      break;
    }
    case ProblemKind::Distillation: {
      const auto& d = p.distillation;
      j["classes"] = d.classes;
      j["feature_dim"] = d.feature_dim;
      j["images_per_class"] = d.images_per_class;
      j["samples_per_class"] = d.samples_per_class;
      j["hidden"] = d.hidden;
      j["eta"] = d.eta;
      j["weight_decay"] = d.weight_decay;
      j["class_separation"] = d.class_separation;
      j["noise"] = d.noise;
      j["init_scale"] = d.init_scale;
      j["seed"] = d.seed;
      break;
    }
    case ProblemKind::Pde: {
      const auto& s = p.pde;
      j["equation"] = std::string(to_string(s.kind));
      j["nu_true"] = s.nu_true;
      j["nx"] = s.grid.nx;
      j["nt"] = s.grid.nt;
      j["obs_x"] = s.obs_x;
      j["obs_t"] = s.obs_t;
      j["log_parameter"] = s.log_parameter;
      j["nu_init_low"] = p.nu_init_low;
      j["nu_init_high"] = p.nu_init_high;
      j["nu_init"] = p.nu_init ? json(*p.nu_init) : json(nullptr);
      break;
    }
  }
  return j;
}

json phase_to_json(const Phase& ph) {
  return {{"estimator", ph.estimator ? std::string(to_string(*ph.estimator)) : "none"},
          {"steps", ph.steps}};
}

void read_phase(Reader r, Phase& ph) {
  r.get_enum("estimator", ph.estimator, phase_estimator_from_string);
  r.get("steps", ph.steps);
  r.finish();
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

}  // namespace

std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::Quadratic:
      return "quadratic";
    case ProblemKind::CorruptedQuadratic:
      return "corrupted-quadratic";
    case ProblemKind::Distillation:
      return "distillation";
    case ProblemKind::Pde:
      return "pde";
  }
  return "quadratic";
}

ProblemKind problem_kind_from_string(std::string_view s) {
  if (s == "quadratic") return ProblemKind::Quadratic;
  if (s == "corrupted-quadratic") return ProblemKind::CorruptedQuadratic;
  if (s == "distillation") return ProblemKind::Distillation;
  if (s == "pde") return ProblemKind::Pde;
  throw InvalidArgument("unknown problem kind '" + std::string(s) + "'");
}

std::pair<double, double> pde_default_init_range(PdeKind kind) {
  switch (kind) {
    case PdeKind::Burgers:
      return {0.0, 10.0};
    case PdeKind::AllenCahn:
      return {0.0, 1e-1};
    case PdeKind::KdV:
      return {0.0, 1e-2};
  }
  return {0.0, 1.0};
}

ExperimentConfig parse_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  Reader top(&root, "");

  Reader problem = top.child("problem");
  problem.get_enum("kind", c.problem.kind, problem_kind_from_string);
  switch (c.problem.kind) {
    case ProblemKind::Quadratic:
      read_quadratic(problem, c.problem);
      break;
    case ProblemKind::CorruptedQuadratic:
      read_quadratic(problem, c.problem);
      problem.get("corruption", c.problem.corruption);
      break;
    case ProblemKind::Distillation:
      read_distillation(problem, c.problem.distillation);
      break;
    case ProblemKind::Pde:
      read_pde(problem, c.problem);
      break;
  }
  problem.finish();

  Reader est = top.child("estimator");
  auto& e = c.estimator;
  est.get("T", e.T);
  est.get("b", e.b);
  est.get("mu", e.mu);
  est.get("alpha", e.alpha);
  est.get("K", e.K);
  est.get("trgu_steps", e.trgu_steps);
  est.get("vr_truncation", e.vr_truncation);
  est.get_enum("distribution", e.distribution, distribution_from_string);
  est.get("threads", e.threads);
  est.get("accumulation", c.accumulation);
  est.finish();

  Reader sched = top.child("schedule");
  read_phase(sched.child("phase1"), c.schedule.phase1);
  read_phase(sched.child("phase2"), c.schedule.phase2);
  sched.finish();

  Reader opt = top.child("optimizer");
  opt.get_enum("kind", c.optimizer.kind, optimizer_from_string);
  opt.get("step_size", c.optimizer.step_size);
  opt.get("beta1", c.optimizer.beta1);
  opt.get("beta2", c.optimizer.beta2);
  opt.get("epsilon", c.optimizer.epsilon);
  opt.finish();

  Reader seeds = top.child("seeds");
  seeds.get_u64("master", c.master_seed);
  seeds.get_u64("init", c.init_seed);
  seeds.finish();

  Reader output = top.child("output");
  output.get("directory", c.output_directory);
  output.finish();

  top.finish();
  validate_config(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  const auto& e = c.estimator;
  json root;
  root["problem"] = problem_to_json(c.problem);
  root["estimator"] = {
      {"T", e.T},
      {"b", e.b},
      {"mu", e.mu},
      {"alpha", e.alpha},
      {"K", e.K},
      {"trgu_steps", e.trgu_steps},
      {"vr_truncation", e.vr_truncation ? json(*e.vr_truncation) : json(nullptr)},
      {"distribution", std::string(to_string(e.distribution))},
      {"threads", e.threads},
      {"accumulation", c.accumulation},
  };
  root["schedule"] = {{"phase1", phase_to_json(c.schedule.phase1)},
                      {"phase2", phase_to_json(c.schedule.phase2)}};
  root["optimizer"] = {{"kind", std::string(to_string(c.optimizer.kind))},
                       {"step_size", c.optimizer.step_size},
                       {"beta1", c.optimizer.beta1},
                       {"beta2", c.optimizer.beta2},
                       {"epsilon", c.optimizer.epsilon}};
  root["seeds"] = {{"master", c.master_seed}, {"init", c.init_seed}};
  root["output"] = {{"directory", c.output_directory}};
  return root.dump(2) + "\n";
}

void validate_config(const ExperimentConfig& c) {
  const auto& p = c.problem;
  switch (p.kind) {
    case ProblemKind::Quadratic:
    case ProblemKind::CorruptedQuadratic: {
      const auto& q = p.quadratic;
      require(q.inner_dim >= 1, "problem.inner_dim", "must be at least 1");
      require(q.meta_dim >= 1, "problem.meta_dim", "must be at least 1");
      require(positive(q.eig_min), "problem.eig_min", "must be positive");
      require(std::isfinite(q.eig_max) && q.eig_max >= q.eig_min, "problem.eig_max",
              "must be finite and at least eig_min");
      require(std::isfinite(q.eta) && q.eta >= 0.0 && q.eta < 2.0 / q.eig_max, "problem.eta",
              "must lie in [0, 2 / eig_max) (0 selects 1 / eig_max)");
      require(std::isfinite(q.lambda) && q.lambda >= 0.0, "problem.lambda",
              "must be non-negative");
      require(std::isfinite(p.phi_init_scale) && p.phi_init_scale >= 0.0,
              "problem.phi_init_scale", "must be non-negative");
      if (p.kind == ProblemKind::CorruptedQuadratic)
        require(std::isfinite(p.corruption) && p.corruption != 0.0, "problem.corruption",
                "must be finite and non-zero");
      break;
    }
    case ProblemKind::Distillation: {
      const auto& d = p.distillation;
      require(d.classes >= 2, "problem.classes", "must be at least 2");
      require(d.feature_dim >= 1, "problem.feature_dim", "must be at least 1");
      require(d.images_per_class >= 1, "problem.images_per_class", "must be at least 1");
      require(d.samples_per_class >= 1, "problem.samples_per_class", "must be at least 1");
      require(positive(d.eta), "problem.eta", "must be positive");
      require(std::isfinite(d.weight_decay) && d.weight_decay >= 0.0, "problem.weight_decay",
              "must be non-negative");
      require(std::isfinite(d.class_separation), "problem.class_separation", "must be finite");
      require(positive(d.noise), "problem.noise", "must be positive");
      require(std::isfinite(d.init_scale) && d.init_scale >= 0.0, "problem.init_scale",
              "must be non-negative");
      break;
    }
    case ProblemKind::Pde: {
      const auto& s = p.pde;
      require(s.grid.nx >= 8, "problem.nx", "must be at least 8");
      require(s.grid.nt >= 2, "problem.nt", "must be at least 2");
      require(s.obs_x >= 1 && s.obs_x <= s.grid.nx, "problem.obs_x", "must lie in [1, nx]");
      require(s.obs_t >= 1 && s.obs_t <= s.grid.nt, "problem.obs_t", "must lie in [1, nt]");
      require(std::isfinite(s.nu_true) && s.nu_true >= 0.0, "problem.nu_true",
              "must be non-negative (0 selects the reference coefficient)");
      require(std::isfinite(p.nu_init_low) && p.nu_init_low >= 0.0, "problem.nu_init_low",
              "must be non-negative");
      require(std::isfinite(p.nu_init_high) && p.nu_init_high >= 0.0, "problem.nu_init_high",
              "must be non-negative");
      require(p.nu_init_high == 0.0 || p.nu_init_high > p.nu_init_low, "problem.nu_init_high",
              "must exceed nu_init_low");
      if (p.nu_init) require(positive(*p.nu_init), "problem.nu_init", "must be positive");
      for (const Phase* ph : {&c.schedule.phase1, &c.schedule.phase2})
        require(!ph->estimator || *ph->estimator == EstimatorKind::Fg2uZo,
                ph == &c.schedule.phase1 ? "schedule.phase1.estimator"
                                         : "schedule.phase2.estimator",
                "the pde problem is black-box only and needs fg2u_zo");
      break;
    }
  }

  const auto& e = c.estimator;
  require(e.b >= 1, "estimator.b", "must be at least 1");
  require(positive(e.mu), "estimator.mu", "must be positive");
  require(positive(e.alpha), "estimator.alpha", "must be positive");
  const auto scheduled = [&](EstimatorKind k) {
    return c.schedule.phase1.estimator == k || c.schedule.phase2.estimator == k;
  };
  if (scheduled(EstimatorKind::Trgu))
    require(e.trgu_steps <= e.T, "estimator.trgu_steps", "must not exceed T");
  if (e.vr_truncation && scheduled(EstimatorKind::Vr))
    require(*e.vr_truncation <= e.T, "estimator.vr_truncation", "must not exceed T");
  require(c.accumulation >= 1, "estimator.accumulation", "must be at least 1");

  const auto& o = c.optimizer;
  require(positive(o.step_size), "optimizer.step_size", "must be positive");
  require(o.beta1 >= 0.0 && o.beta1 < 1.0, "optimizer.beta1", "must lie in [0, 1)");
  require(o.beta2 >= 0.0 && o.beta2 < 1.0, "optimizer.beta2", "must lie in [0, 1)");
  require(positive(o.epsilon), "optimizer.epsilon", "must be positive");
  require(!c.output_directory.empty(), "output.directory", "must not be empty");
}

std::unique_ptr<BilevelProblem> make_problem(const ProblemConfig& config) {
  switch (config.kind) {
    case ProblemKind::Quadratic:
      return std::make_unique<QuadraticBilevel>(QuadraticBilevel::from_spec(config.quadratic));
    case ProblemKind::CorruptedQuadratic:
      return std::make_unique<CorruptedJvpProblem>(
          std::make_unique<QuadraticBilevel>(QuadraticBilevel::from_spec(config.quadratic)),
          config.corruption);
    case ProblemKind::Distillation:
      return std::make_unique<DistillationProblem>(config.distillation);
    case ProblemKind::Pde:
      return std::make_unique<PdeDiscoveryProblem>(config.pde);
  }
  throw InvalidArgument("make_problem: unknown problem kind");
}

MetaVector initial_phi(const ProblemConfig& config, const BilevelProblem& problem,
                       std::uint64_t seed) {
  switch (config.kind) {
    case ProblemKind::Quadratic:
    case ProblemKind::CorruptedQuadratic: {
      MetaVector phi(problem.meta_dim());
      if (config.phi_init_scale > 0.0) {
        CounterRng rng(seed);
        for (double& x : phi) x = config.phi_init_scale * rng.normal();
      }
      return phi;
    }
    case ProblemKind::Distillation:
      return dynamic_cast<const DistillationProblem&>(problem).initial_meta(seed);
    case ProblemKind::Pde: {
      const auto& pde = dynamic_cast<const PdeDiscoveryProblem&>(problem);
      if (config.nu_init) return pde.encode(*config.nu_init);
      auto [lo, hi] = pde_default_init_range(config.pde.kind);
      if (config.nu_init_high > 0.0) {
        lo = config.nu_init_low;
        hi = config.nu_init_high;
      }
      // Uniform on (lo, hi]: uniform() never returns 0 or 1.
      CounterRng rng(seed);
      return pde.encode(hi - (hi - lo) * rng.uniform());
    }
  }
  throw InvalidArgument("initial_phi: unknown problem kind");
}

CorruptedJvpProblem::CorruptedJvpProblem(std::unique_ptr<BilevelProblem> inner,
                                         double relative_error)
    : inner_(std::move(inner)), relative_error_(relative_error) {
  if (!inner_) throw InvalidArgument("CorruptedJvpProblem: null problem");
}

double CorruptedJvpProblem::meta_loss(const InnerVector& theta, const MetaVector& phi) const {
  return inner_->meta_loss(theta, phi);
}
InnerVector CorruptedJvpProblem::inner_init(const MetaVector& phi) const {
  return inner_->inner_init(phi);
}
InnerVector CorruptedJvpProblem::transition(const InnerVector& theta, const MetaVector& phi,
                                            std::size_t t, std::uint64_t seed) const {
  return inner_->transition(theta, phi, t, seed);
}
InnerVector CorruptedJvpProblem::partial_f_theta(const InnerVector& theta,
                                                 const MetaVector& phi) const {
  return inner_->partial_f_theta(theta, phi);
}
MetaVector CorruptedJvpProblem::partial_f_phi(const InnerVector& theta,
                                              const MetaVector& phi) const {
  return inner_->partial_f_phi(theta, phi);
}
InnerVector CorruptedJvpProblem::init_jvp(const MetaVector& phi, const MetaVector& v) const {
  return inner_->init_jvp(phi, v);
}
MetaVector CorruptedJvpProblem::init_vjp(const MetaVector& phi, const InnerVector& d) const {
  return inner_->init_vjp(phi, d);
}
InnerVector CorruptedJvpProblem::transition_jvp(const InnerVector& theta, const MetaVector& phi,
                                                std::size_t t, std::uint64_t seed,
                                                const InnerVector& y, const MetaVector& v) const {
  InnerVector out = inner_->transition_jvp(theta, phi, t, seed, y, v);
  out *= 1.0 + relative_error_;
  return out;
}
TransitionCotangent CorruptedJvpProblem::transition_vjp(const InnerVector& theta,
                                                        const MetaVector& phi, std::size_t t,
                                                        std::uint64_t seed,
                                                        const InnerVector& d) const {
  return inner_->transition_vjp(theta, phi, t, seed, d);
}
InnerVector CorruptedJvpProblem::g_hvp(const InnerVector& theta, const MetaVector& phi,
                                       const InnerVector& u) const {
  return inner_->g_hvp(theta, phi, u);
}
MetaVector CorruptedJvpProblem::g_cross_vjp(const InnerVector& theta, const MetaVector& phi,
                                            const InnerVector& r) const {
  return inner_->g_cross_vjp(theta, phi, r);
}

}  // namespace blo
