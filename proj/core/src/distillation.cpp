#include "blo/distillation.hpp"

#include <algorithm>
#include <cmath>
#include <span>

#include "blo/dual.hpp"
#include "blo/rng.hpp"

namespace blo {
namespace {

// Parameter layout of the inner model.
struct ModelShape {
  std::size_t classes;
  std::size_t dim;
  std::size_t hidden;  // 0 => softmax-linear

  std::size_t size() const {
    if (hidden == 0) return classes * (dim + 1);
    return hidden * (dim + 1) + classes * (hidden + 1);
  }
};

// Mean softmax cross-entropy of the model over rows of `x`, plus weight_decay/2 |theta|^2.
// Writes d/dtheta into g_theta and, when g_x is non-empty, d/dx into g_x. The reverse sweep
// is written out by hand so it can run on double or Dual.
template <class S>
S cross_entropy_with_grads(const ModelShape& shape, std::span<const S> theta,
                           std::span<const S> x, std::span<const int> labels, double weight_decay,
                           std::span<S> g_theta, std::span<S> g_x) {
  using std::exp;
  using std::log;
  using std::tanh;
  const std::size_t C = shape.classes;
  const std::size_t D = shape.dim;
  const std::size_t H = shape.hidden;
  const std::size_t n = labels.size();
  const double inv_n = 1.0 / static_cast<double>(n);

  std::fill(g_theta.begin(), g_theta.end(), S(0.0));
  if (!g_x.empty()) std::fill(g_x.begin(), g_x.end(), S(0.0));

  CountedVector<S> logits(C), hid(H), dh(H);
  S loss(0.0);

  for (std::size_t i = 0; i < n; ++i) {
    const S* xi = x.data() + i * D;
    // forward
    if (H == 0) {
      const S* W = theta.data();
      const S* b = theta.data() + C * D;
      for (std::size_t c = 0; c < C; ++c) {
        S z = b[c];
        for (std::size_t d = 0; d < D; ++d) z += W[c * D + d] * xi[d];
        logits[c] = z;
      }
    } else {
      const S* W1 = theta.data();
      const S* b1 = W1 + H * D;
      const S* W2 = b1 + H;
      const S* b2 = W2 + C * H;
      for (std::size_t h = 0; h < H; ++h) {
        S a = b1[h];
        for (std::size_t d = 0; d < D; ++d) a += W1[h * D + d] * xi[d];
        hid[h] = tanh(a);
      }
      for (std::size_t c = 0; c < C; ++c) {
        S z = b2[c];
        for (std::size_t h = 0; h < H; ++h) z += W2[c * H + h] * hid[h];
        logits[c] = z;
      }
    }
    double shift = value_of(logits[0]);
    for (std::size_t c = 1; c < C; ++c) shift = std::max(shift, value_of(logits[c]));
    S denom(0.0);
    for (std::size_t c = 0; c < C; ++c) {
      logits[c] = exp(logits[c] - S(shift));
      denom += logits[c];
    }
    const auto yi = static_cast<std::size_t>(labels[i]);
    loss += log(denom) - log(logits[yi]);
    // logits now holds unnormalised probabilities; turn them into dL/dz
    for (std::size_t c = 0; c < C; ++c) {
      logits[c] = logits[c] / denom;
      if (c == yi) logits[c] -= S(1.0);
      logits[c] *= S(inv_n);
    }

    // reverse
    if (H == 0) {
      S* gW = g_theta.data();
      S* gb = g_theta.data() + C * D;
      const S* W = theta.data();
      for (std::size_t c = 0; c < C; ++c) {
        const S dz = logits[c];
        gb[c] += dz;
        for (std::size_t d = 0; d < D; ++d) gW[c * D + d] += dz * xi[d];
      }
      if (!g_x.empty()) {
        S* gxi = g_x.data() + i * D;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t d = 0; d < D; ++d) gxi[d] += W[c * D + d] * logits[c];
      }
    } else {
      S* gW1 = g_theta.data();
      S* gb1 = gW1 + H * D;
      S* gW2 = gb1 + H;
      S* gb2 = gW2 + C * H;
      const S* W1 = theta.data();
      const S* W2 = W1 + H * D + H;
      std::fill(dh.begin(), dh.end(), S(0.0));
      for (std::size_t c = 0; c < C; ++c) {
        const S dz = logits[c];
        gb2[c] += dz;
        for (std::size_t h = 0; h < H; ++h) {
          gW2[c * H + h] += dz * hid[h];
          dh[h] += W2[c * H + h] * dz;
        }
      }
      for (std::size_t h = 0; h < H; ++h) {
        const S da = dh[h] * (S(1.0) - hid[h] * hid[h]);
        gb1[h] += da;
        for (std::size_t d = 0; d < D; ++d) gW1[h * D + d] += da * xi[d];
        if (!g_x.empty()) {
          S* gxi = g_x.data() + i * D;
          for (std::size_t d = 0; d < D; ++d) gxi[d] += W1[h * D + d] * da;
        }
      }
    }
  }
  loss *= S(inv_n);
  if (weight_decay != 0.0) {
    S reg(0.0);
    for (std::size_t k = 0; k < theta.size(); ++k) {
      reg += theta[k] * theta[k];
      g_theta[k] += S(weight_decay) * theta[k];
    }
    loss += S(0.5 * weight_decay) * reg;
  }
  return loss;
}

CountedVector<Dual> lift(std::span<const double> base, std::span<const double> tangent) {
  CountedVector<Dual> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    out[i] = Dual(base[i], tangent.empty() ? 0.0 : tangent[i]);
  return out;
}

}  // namespace

DistillationProblem::DistillationProblem(const DistillationSpec& spec) : spec_(spec) {
  if (spec_.classes < 2) throw InvalidArgument("distillation: need at least 2 classes");
  if (spec_.feature_dim == 0 || spec_.images_per_class == 0 || spec_.samples_per_class == 0)
    throw InvalidArgument("distillation: sizes must be positive");
  if (!(spec_.eta > 0.0)) throw InvalidArgument("distillation: eta must be positive");
  if (!(spec_.weight_decay >= 0.0)) throw InvalidArgument("distillation: weight_decay >= 0");

  const std::size_t C = spec_.classes;
  const std::size_t D = spec_.feature_dim;
  CounterRng rng(derive_seed(spec_.seed, 0));
  std::vector<double> means(C * D);
  for (std::size_t c = 0; c < C; ++c) {
    double sq = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      means[c * D + d] = rng.normal();
      sq += means[c * D + d] * means[c * D + d];
    }
    const double scale = spec_.class_separation / std::sqrt(sq);
    for (std::size_t d = 0; d < D; ++d) means[c * D + d] *= scale;
  }
  CounterRng sample_rng(derive_seed(spec_.seed, 1));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t s = 0; s < spec_.samples_per_class; ++s) {
      for (std::size_t d = 0; d < D; ++d)
        features_.push_back(means[c * D + d] + spec_.noise * sample_rng.normal());
      labels_.push_back(static_cast<int>(c));
    }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < spec_.images_per_class; ++k)
      condensed_labels_.push_back(static_cast<int>(c));

  theta0_ = InnerVector(inner_dim());
  if (spec_.hidden > 0) {
    CounterRng init_rng(derive_seed(spec_.seed, 2));
    for (double& w : theta0_) w = spec_.init_scale * init_rng.normal();
  }
}

std::size_t DistillationProblem::meta_dim() const {
  return spec_.classes * spec_.images_per_class * spec_.feature_dim;
}

std::size_t DistillationProblem::inner_dim() const {
  return ModelShape{spec_.classes, spec_.feature_dim, spec_.hidden}.size();
}

double DistillationProblem::meta_loss(const InnerVector& theta, const MetaVector& phi) const {
  check_inner(theta);
  check_meta(phi);
  CountedVector<double> g(inner_dim());
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  return cross_entropy_with_grads<double>(shape, theta.span(), features_, labels_, 0.0, g, {});
}

InnerVector DistillationProblem::inner_init(const MetaVector& phi) const {
  check_meta(phi);
  return theta0_;
}

double DistillationProblem::inner_loss(const InnerVector& theta, const MetaVector& phi) const {
  check_inner(theta);
  check_meta(phi);
  CountedVector<double> g(inner_dim());
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  return cross_entropy_with_grads<double>(shape, theta.span(), phi.span(), condensed_labels_,
                                          spec_.weight_decay, g, {});
}

InnerVector DistillationProblem::inner_grad_theta(const InnerVector& theta,
                                                  const MetaVector& phi) const {
  check_inner(theta);
  check_meta(phi);
  InnerVector g(inner_dim());
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  cross_entropy_with_grads<double>(shape, theta.span(), phi.span(), condensed_labels_,
                                   spec_.weight_decay, g.span(), {});
  return g;
}

InnerVector DistillationProblem::transition(const InnerVector& theta, const MetaVector& phi,
                                            std::size_t, std::uint64_t) const {
  InnerVector next = theta;
  next.axpy(-spec_.eta, inner_grad_theta(theta, phi));
  return next;
}

InnerVector DistillationProblem::partial_f_theta(const InnerVector& theta,
                                                 const MetaVector& phi) const {
  check_inner(theta);
  check_meta(phi);
  InnerVector g(inner_dim());
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  cross_entropy_with_grads<double>(shape, theta.span(), features_, labels_, 0.0, g.span(), {});
  return g;
}

MetaVector DistillationProblem::partial_f_phi(const InnerVector&, const MetaVector& phi) const {
  check_meta(phi);
  return MetaVector(meta_dim());
}

InnerVector DistillationProblem::init_jvp(const MetaVector& phi, const MetaVector&) const {
  check_meta(phi);
  return InnerVector(inner_dim());
}

MetaVector DistillationProblem::init_vjp(const MetaVector& phi, const InnerVector&) const {
  check_meta(phi);
  return MetaVector(meta_dim());
}

InnerVector DistillationProblem::transition_jvp(const InnerVector& theta, const MetaVector& phi,
                                                std::size_t, std::uint64_t,
                                                const InnerVector& y,
                                                const MetaVector& v) const {
  check_inner(theta);
  check_inner(y);
  check_meta(phi);
  check_meta(v);
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  const auto theta_d = lift(theta.span(), y.span());
  const auto phi_d = lift(phi.span(), v.span());
  CountedVector<Dual> g(inner_dim());
  cross_entropy_with_grads<Dual>(shape, theta_d, phi_d, condensed_labels_, spec_.weight_decay, g,
                                 {});
  InnerVector out = y;
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= spec_.eta * g[k].eps;
  return out;
}

TransitionCotangent DistillationProblem::transition_vjp(const InnerVector& theta,
                                                        const MetaVector& phi, std::size_t,
                                                        std::uint64_t,
                                                        const InnerVector& d) const {
  // A_t = I - eta H and B_t = -eta Y with H symmetric, so both pullbacks are the
  // directional derivatives of (grad_theta g, grad_phi g) along theta + eps d.
  check_inner(theta);
  check_inner(d);
  check_meta(phi);
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  const auto theta_d = lift(theta.span(), d.span());
  const auto phi_d = lift(phi.span(), {});
  CountedVector<Dual> g_theta(inner_dim());
  CountedVector<Dual> g_phi(meta_dim());
  cross_entropy_with_grads<Dual>(shape, theta_d, phi_d, condensed_labels_, spec_.weight_decay,
                                 g_theta, g_phi);
  TransitionCotangent out{d, MetaVector(meta_dim())};
  for (std::size_t k = 0; k < inner_dim(); ++k) out.d_theta[k] -= spec_.eta * g_theta[k].eps;
  for (std::size_t k = 0; k < meta_dim(); ++k) out.d_phi[k] = -spec_.eta * g_phi[k].eps;
  return out;
}

InnerVector DistillationProblem::g_hvp(const InnerVector& theta, const MetaVector& phi,
                                       const InnerVector& u) const {
  check_inner(theta);
  check_inner(u);
  check_meta(phi);
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  const auto theta_d = lift(theta.span(), u.span());
  const auto phi_d = lift(phi.span(), {});
  CountedVector<Dual> g(inner_dim());
  cross_entropy_with_grads<Dual>(shape, theta_d, phi_d, condensed_labels_, spec_.weight_decay, g,
                                 {});
  InnerVector out(inner_dim());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = g[k].eps;
  return out;
}

MetaVector DistillationProblem::g_cross_vjp(const InnerVector& theta, const MetaVector& phi,
                                            const InnerVector& r) const {
  check_inner(theta);
  check_inner(r);
  check_meta(phi);
  const ModelShape shape{spec_.classes, spec_.feature_dim, spec_.hidden};
  const auto theta_d = lift(theta.span(), r.span());
  const auto phi_d = lift(phi.span(), {});
  CountedVector<Dual> g_theta(inner_dim());
  CountedVector<Dual> g_phi(meta_dim());
  cross_entropy_with_grads<Dual>(shape, theta_d, phi_d, condensed_labels_, spec_.weight_decay,
                                 g_theta, g_phi);
  MetaVector out(meta_dim());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = g_phi[k].eps;
  return out;
}

InnerVector DistillationProblem::transition_jvp_fd(const InnerVector& theta,
                                                   const MetaVector& phi, const InnerVector& y,
                                                   const MetaVector& v, double eps) const {
  if (!(eps > 0.0)) throw InvalidArgument("transition_jvp_fd: eps must be positive");
  InnerVector tp = theta, tm = theta;
  tp.axpy(eps, y);
  tm.axpy(-eps, y);
  MetaVector pp = phi, pm = phi;
  pp.axpy(eps, v);
  pm.axpy(-eps, v);
  InnerVector dg = inner_grad_theta(tp, pp) - inner_grad_theta(tm, pm);
  InnerVector out = y;
  out.axpy(-spec_.eta / (2.0 * eps), dg);
  return out;
}

double DistillationProblem::accuracy(const InnerVector& theta) const {
  check_inner(theta);
  const std::size_t C = spec_.classes;
  const std::size_t D = spec_.feature_dim;
  const std::size_t H = spec_.hidden;
  std::size_t correct = 0;
  std::vector<double> z(C), hid(H);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const double* xi = features_.data() + i * D;
    if (H == 0) {
      for (std::size_t c = 0; c < C; ++c) {
        z[c] = theta[C * D + c];
        for (std::size_t d = 0; d < D; ++d) z[c] += theta[c * D + d] * xi[d];
      }
    } else {
      const double* W1 = theta.data();
      const double* b1 = W1 + H * D;
      const double* W2 = b1 + H;
      const double* b2 = W2 + C * H;
      for (std::size_t h = 0; h < H; ++h) {
        double a = b1[h];
        for (std::size_t d = 0; d < D; ++d) a += W1[h * D + d] * xi[d];
        hid[h] = std::tanh(a);
      }
      for (std::size_t c = 0; c < C; ++c) {
        z[c] = b2[c];
        for (std::size_t h = 0; h < H; ++h) z[c] += W2[c * H + h] * hid[h];
      }
    }
    const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (best == static_cast<std::size_t>(labels_[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels_.size());
}

MetaVector DistillationProblem::initial_meta(std::uint64_t seed) const {
  const std::size_t D = spec_.feature_dim;
  MetaVector phi(meta_dim());
  CounterRng rng(seed);
  std::size_t row = 0;
  for (std::size_t c = 0; c < spec_.classes; ++c)
    for (std::size_t k = 0; k < spec_.images_per_class; ++k, ++row) {
      const std::size_t pick = c * spec_.samples_per_class + rng.below(spec_.samples_per_class);
      for (std::size_t d = 0; d < D; ++d) phi[row * D + d] = features_[pick * D + d];
    }
  return phi;
}

}  // namespace blo
