#pragma once

#include <cstdint>
#include <vector>

#include "blo/problem.hpp"

namespace blo {

struct DistillationSpec {
  std::size_t classes = 4;
  std::size_t feature_dim = 8;
  std::size_t images_per_class = 1;
  std::size_t samples_per_class = 100;  // size of the original set per class
  std::size_t hidden = 0;               // 0: softmax-linear model, otherwise tanh MLP width
  double eta = 0.1;                     // inner learning rate
  double weight_decay = 1e-3;           // inner L2 on theta
  double class_separation = 1.5;        // norm of each class mean
  double noise = 1.0;                   // isotropic std of the mixture components
  double init_scale = 0.1;              // std of theta_0 for the MLP (linear starts at 0)
  std::uint64_t seed = 7;
};

/// Dataset condensation on a synthetic Gaussian-mixture classification task.
///
/// phi holds the condensed inputs (classes * images_per_class rows of feature_dim values,
/// labels fixed one class per block). The inner problem trains the model on the whole
/// condensed set with full-batch gradient descent from a fixed theta_0; the meta loss is
/// the cross-entropy of theta_T on the original set.
///
/// Second-order oracles run the hand-written gradient of the inner loss on dual numbers,
/// so A_t y, d A_t, d B_t, H u and r Y are exact directional derivatives.
class DistillationProblem : public BilevelProblem {
 public:
  explicit DistillationProblem(const DistillationSpec& spec);

  std::string name() const override { return "distillation"; }
  std::size_t meta_dim() const override;
  std::size_t inner_dim() const override;

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

  /// A_t y + B_t v by central differences of the inner gradient; validation fallback.
  InnerVector transition_jvp_fd(const InnerVector& theta, const MetaVector& phi,
                                const InnerVector& y, const MetaVector& v,
                                double eps = 1e-5) const;

  /// Inner objective g(theta, phi) and its gradients.
  double inner_loss(const InnerVector& theta, const MetaVector& phi) const;
  InnerVector inner_grad_theta(const InnerVector& theta, const MetaVector& phi) const;

  /// Fraction of the original set classified correctly by theta.
  double accuracy(const InnerVector& theta) const;

  /// Condensed set initialised from `images_per_class` random originals of each class.
  MetaVector initial_meta(std::uint64_t seed) const;

  const DistillationSpec& spec() const noexcept { return spec_; }
  std::size_t original_size() const noexcept { return labels_.size(); }

 private:
  DistillationSpec spec_;
  std::vector<double> features_;  // original set, row-major (n x D)
  std::vector<int> labels_;
  std::vector<int> condensed_labels_;
  InnerVector theta0_;
};

}  // namespace blo
