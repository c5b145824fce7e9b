#ifndef ICR_GENERATE_HPP
#define ICR_GENERATE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icr/charts.hpp"
#include "icr/errors.hpp"
#include "icr/kernels.hpp"
#include "icr/parallel.hpp"
#include "icr/refine.hpp"

namespace icr {

/// Standard-normal excitations consumed by the generative pass, stored flat:
/// the base block first, then one block per level in ascending order, each
/// laid out window by window with the fine index running fastest.
template <typename Scalar>
class LatentVector {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  LatentVector() = default;
  LatentVector(std::vector<Eigen::Index> offsets, int n_fsz)
      : offsets_(std::move(offsets)),
        n_fsz_(n_fsz),
        values_(Vector::Zero(offsets_.back())) {}

  Eigen::Index size() const { return values_.size(); }
  int depth() const { return static_cast<int>(offsets_.size()) - 2; }
  const std::vector<Eigen::Index>& offsets() const { return offsets_; }

  Vector& flat() { return values_; }
  const Vector& flat() const { return values_; }

  auto base() { return values_.head(offsets_[1]); }
  auto base() const { return values_.head(offsets_[1]); }

  /// windows x n_fsz view of level `l` (1-based).
  Eigen::Map<RowMatrix> level(int l) {
    return {values_.data() + offsets_[l], windows(l), n_fsz_};
  }
  Eigen::Map<const RowMatrix> level(int l) const {
    return {values_.data() + offsets_[l], windows(l), n_fsz_};
  }
  Eigen::Index windows(int l) const {
    return (offsets_[l + 1] - offsets_[l]) / n_fsz_;
  }

  bool same_layout(const LatentVector& other) const {
    return offsets_ == other.offsets_ && n_fsz_ == other.n_fsz_;
  }

 private:
  std::vector<Eigen::Index> offsets_{0, 0};
  int n_fsz_ = 1;
  Vector values_;
};

/// Iterative charted refinement model: applies an approximate square root
/// of the kernel matrix on the chart image of the final level.
template <typename Scalar>
struct IcrModel {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Kernel<Scalar> kernel;
  Chart<Scalar> chart;
  RefinementSpec<Scalar> spec;
  GridHierarchy<Scalar> hierarchy;
  /// levels[l - 1] produces level l.
  std::vector<LevelMatrices<Scalar>> levels;
  Matrix sqrtK0;

  Eigen::Index output_size() const { return hierarchy.output_size; }
  Eigen::Index final_size() const { return hierarchy.final_level().size(); }

  std::vector<Eigen::Index> latent_offsets() const {
    std::vector<Eigen::Index> off{0, hierarchy.size(0)};
    for (int l = 1; l <= hierarchy.depth(); ++l)
      off.push_back(off.back() + hierarchy.size(l));
    return off;
  }
  Eigen::Index latent_size() const { return latent_offsets().back(); }
  LatentVector<Scalar> make_latent() const {
    return LatentVector<Scalar>(latent_offsets(), spec.n_fsz);
  }

  Vector euclidean_coords() const { return hierarchy.output_coords(); }
  Vector modeled_coords() const { return chart.map(euclidean_coords()); }
  ChartedKernel<Scalar> charted() const { return {kernel, chart}; }
};

using IcrModeld = IcrModel<double>;

struct BuildOptions {
  /// Use a single shared matrix pair on translation-invariant levels.
  bool allow_broadcast = true;
};

/// Returns `spec` with the base size and output size chosen so the final
/// level provides `target` pixels.
template <typename Scalar>
RefinementSpec<Scalar> with_target_size(RefinementSpec<Scalar> spec,
                                        int target, SizePolicy policy) {
  spec.validate_shape();
  const auto r = resolve_target_size(target, spec.n_lvl, spec.n_csz,
                                     spec.n_fsz, spec.strategy, policy);
  spec.n0 = r.n0;
  spec.output_size = target;
  return spec;
}

/// Symmetric square root V * sqrt(max(Lambda, 0)) of a Gram matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> clipped_sqrt(
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& k) {
  Eigen::SelfAdjointEigenSolver<
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>
      eig(k);
  if (eig.info() != Eigen::Success)
    throw FactorizationError("eigendecomposition of base covariance failed");
  const Scalar trace = k.trace();
  if (eig.eigenvalues().size() > 0 &&
      eig.eigenvalues().minCoeff() < Scalar(-1e-8) * trace)
    throw FactorizationError(
        "base covariance has eigenvalue " +
        std::to_string(static_cast<double>(eig.eigenvalues().minCoeff())) +
        "; kernel is not positive semidefinite on the base grid");
  return eig.eigenvectors() *
         eig.eigenvalues().cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
}

template <typename Scalar>
IcrModel<Scalar> build_model(const Kernel<Scalar>& kernel,
                             const Chart<Scalar>& chart,
                             const RefinementSpec<Scalar>& spec,
                             BuildOptions options = {}) {
  IcrModel<Scalar> m;
  m.kernel = kernel;
  m.chart = chart;
  m.spec = spec;
  const auto ck = charted_kernel(kernel, chart);
  m.hierarchy = build_hierarchy(spec);

  const auto base = chart.map(m.hierarchy.levels[0]);
  m.sqrtK0 = clipped_sqrt<Scalar>(gram(kernel, base));

  const Scalar jitter = spec.jitter * kernel.amplitude;
  for (int l = 1; l <= m.hierarchy.depth(); ++l)
    m.levels.push_back(matrices_for_level(ck, m.hierarchy, l, jitter,
                                          options.allow_broadcast));
  return m;
}

namespace detail {

/// fine[i * n_fsz + o] = sum_j R_i[o, j] coarse[i * stride + j]
///                     + sum_p sqrtD_i[o, p] xi[i * n_fsz + p]
template <typename Scalar>
void refine_forward(const LevelMatrices<Scalar>& m, int stride,
                    const Scalar* coarse, const Scalar* xi, Scalar* fine) {
  const int csz = m.n_csz;
  const int fsz = m.n_fsz;
  const Scalar* r_all = m.R.data();
  const Scalar* d_all = m.sqrtD.data();
  const bool bc = m.broadcast;
  parallel_for(m.windows, [&](Eigen::Index i) {
    const Eigen::Index b = bc ? 0 : i;
    const Scalar* r = r_all + b * fsz * csz;
    const Scalar* d = d_all + b * fsz * fsz;
    const Scalar* c = coarse + i * stride;
    const Scalar* x = xi + i * fsz;
    Scalar* f = fine + i * fsz;
    for (int o = 0; o < fsz; ++o) {
      Scalar acc = Scalar(0);
      for (int j = 0; j < csz; ++j) acc += r[o * csz + j] * c[j];
      for (int p = 0; p <= o; ++p) acc += d[o * fsz + p] * x[p];
      f[o] = acc;
    }
  });
}

}  // namespace detail

/// Applies sqrt(K_ICR) to `xi`; linear in `xi`. Returns the output pixels of
/// the final level.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> apply_sqrt(
    const IcrModel<Scalar>& model, const LatentVector<Scalar>& xi) {
  if (xi.offsets() != model.latent_offsets())
    throw InputError("latent vector of size " + std::to_string(xi.size()) +
                     " does not match the model layout (expected " +
                     std::to_string(model.latent_size()) + ")");
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  Vector s = model.sqrtK0 * xi.base();
  const auto& h = model.hierarchy;
  for (int l = 1; l <= h.depth(); ++l) {
    Vector fine(h.size(l));
    detail::refine_forward(model.levels[l - 1], h.stride, s.data(),
                           xi.flat().data() + xi.offsets()[l], fine.data());
    s.swap(fine);
  }
  if (h.output_offset == 0 && h.output_size == s.size()) return s;
  return s.segment(h.output_offset, h.output_size);
}

/// Transpose of apply_sqrt.
template <typename Scalar, typename Derived>
LatentVector<Scalar> apply_sqrt_adjoint(
    const IcrModel<Scalar>& model,
    const Eigen::MatrixBase<Derived>& cotangent) {
  const auto& h = model.hierarchy;
  if (cotangent.size() != h.output_size)
    throw InputError("cotangent has length " +
                     std::to_string(cotangent.size()) + ", expected " +
                     std::to_string(h.output_size));
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  LatentVector<Scalar> out = model.make_latent();

  Vector g = Vector::Zero(h.final_level().size());
  g.segment(h.output_offset, h.output_size) = cotangent;

  const int csz = h.n_csz;
  const int fsz = h.n_fsz;
  for (int l = h.depth(); l >= 1; --l) {
    const auto& m = model.levels[l - 1];
    Vector gc = Vector::Zero(h.size(l - 1));
    Scalar* xi = out.flat().data() + out.offsets()[l];
    for (int i = 0; i < m.windows; ++i) {
      const Eigen::Index b = m.broadcast ? 0 : i;
      const Scalar* r = m.R.data() + b * fsz * csz;
      const Scalar* d = m.sqrtD.data() + b * fsz * fsz;
      const Scalar* gf = g.data() + Eigen::Index(i) * fsz;
      Scalar* gci = gc.data() + Eigen::Index(i) * h.stride;
      for (int o = 0; o < fsz; ++o) {
        for (int j = 0; j < csz; ++j) gci[j] += r[o * csz + j] * gf[o];
        for (int p = 0; p <= o; ++p)
          xi[Eigen::Index(i) * fsz + p] += d[o * fsz + p] * gf[o];
      }
    }
    g.swap(gc);
  }
  out.base() = model.sqrtK0.transpose() * g;
  return out;
}

/// Fills `xi` with i.i.d. standard normals from std::mt19937_64(seed) and
/// std::normal_distribution, in flat layout order.
template <typename Scalar>
void draw_standard_normal(LatentVector<Scalar>& xi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi.flat()(i) = normal(rng);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> sample(const IcrModel<Scalar>& model,
                                                std::uint64_t seed) {
  auto xi = model.make_latent();
  draw_standard_normal(xi, seed);
  return apply_sqrt(model, xi);
}

/// log p(y, xi) of the standardized model: the likelihood at s(xi) plus an
/// isotropic standard-normal prior on xi.
template <typename Scalar, typename LogLikelihood>
Scalar standardized_log_prob(const IcrModel<Scalar>& model,
                             const LatentVector<Scalar>& xi,
                             LogLikelihood&& log_likelihood) {
  const auto s = apply_sqrt(model, xi);
  const Scalar ll = log_likelihood(s);
  if (!std::isfinite(ll))
    throw NumericError("log-likelihood is not finite at s(xi)");
  const Scalar m = static_cast<Scalar>(xi.size());
  return ll - Scalar(0.5) * (m * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) +
                             xi.flat().squaredNorm());
}

/// Standard normal CDF.
template <typename Scalar>
Scalar normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

/// Maps a standard-normal latent onto a target distribution through its
/// inverse CDF. The normal CDF is clamped to [1e-15, 1 - 1e-15] so that
/// extreme latents stay inside the open unit interval.
template <typename Scalar, typename InverseCdf>
Scalar inverse_transform(Scalar xi_theta, InverseCdf&& target_cdf_inverse) {
  constexpr Scalar eps = Scalar(1e-15);
  const Scalar u = std::clamp(normal_cdf(xi_theta), eps, Scalar(1) - eps);
  return target_cdf_inverse(u);
}

/// Multiply-add count of one generative pass.
///
/// (3, 2): 3 N0 + sum_l 6 * windows(l).
/// Otherwise: n_csz N0 + sum_l windows(l) * (n_fsz n_csz + n_fsz^2).
template <typename Scalar>
std::int64_t predicted_cost(const RefinementSpec<Scalar>& spec) {
  spec.validate_shape();
  const auto sizes =
      level_sizes(spec.n0, spec.n_lvl, spec.n_csz, spec.n_fsz, spec.strategy);
  const bool classic = spec.n_csz == 3 && spec.n_fsz == 2;
  const std::int64_t per_window =
      classic ? 6
              : std::int64_t(spec.n_fsz) * spec.n_csz +
                    std::int64_t(spec.n_fsz) * spec.n_fsz;
  std::int64_t cost = std::int64_t(spec.n_csz) * spec.n0;
  for (int l = 1; l <= spec.n_lvl; ++l)
    cost += per_window * window_count(sizes[l - 1], spec.n_csz, spec.n_fsz,
                                      spec.strategy);
  return cost;
}

}  // namespace icr

#endif  // ICR_GENERATE_HPP
