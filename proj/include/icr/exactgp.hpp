#ifndef ICR_EXACTGP_HPP
#define ICR_EXACTGP_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "icr/charts.hpp"
#include "icr/errors.hpp"
#include "icr/generate.hpp"
#include "icr/kernels.hpp"
#include "icr/parallel.hpp"

namespace icr {

/// Largest matrix dimension the dense oracles will materialize.
inline constexpr Eigen::Index kDenseGuard = 4096;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Cholesky factor of a symmetric matrix. If the plain factorization fails,
/// `relative_jitter * trace / n` is added to the diagonal once.
template <typename Scalar>
struct JitteredCholesky {
  Eigen::LLT<MatrixX<Scalar>> llt;
  Scalar jitter = Scalar(0);
  bool ok = false;

  JitteredCholesky(const MatrixX<Scalar>& k, Scalar relative_jitter) {
    llt.compute(k);
    ok = llt.info() == Eigen::Success;
    if (!ok && k.rows() > 0) {
      jitter = relative_jitter * k.trace() / Scalar(k.rows());
      MatrixX<Scalar> kj = k;
      kj.diagonal().array() += jitter;
      llt.compute(kj);
      ok = llt.info() == Eigen::Success;
    }
  }

  Scalar log_det() const {
    return Scalar(2) *
           llt.matrixLLT().diagonal().array().log().sum();
  }
};

template <typename Scalar>
struct LogProb {
  Scalar value = Scalar(0);
  /// Diagonal jitter needed for the factorization (0 when none).
  Scalar jitter = Scalar(0);
};

/// -1/2 (log det(2 pi K) + s^T K^-1 s)
template <typename Scalar>
LogProb<Scalar> exact_log_prob(const MatrixX<Scalar>& k,
                               const VectorX<Scalar>& s) {
  if (k.rows() != k.cols() || k.rows() != s.size())
    throw InputError("exact_log_prob: K must be square and match s");
  JitteredCholesky<Scalar> chol(k, Scalar(1e-12));
  if (!chol.ok)
    throw FactorizationError("exact_log_prob: K is not positive definite");
  const Scalar n = static_cast<Scalar>(s.size());
  const VectorX<Scalar> w = chol.llt.matrixL().solve(s);
  const Scalar value =
      Scalar(-0.5) *
      (n * std::log(Scalar(2) * std::numbers::pi_v<Scalar>) + chol.log_det() +
       w.squaredNorm());
  return {value, chol.jitter};
}

/// Materializes sqrt(K_ICR) as an N x M matrix by pushing every basis latent
/// through the generative pass.
template <typename Scalar>
MatrixX<Scalar> implicit_sqrt(const IcrModel<Scalar>& model) {
  const Eigen::Index n = model.output_size();
  if (n > kDenseGuard)
    throw SizeError("implicit covariance of " + std::to_string(n) +
                    " points exceeds the dense guard of " +
                    std::to_string(kDenseGuard));
  const Eigen::Index m = model.latent_size();
  MatrixX<Scalar> s(n, m);
  const auto offsets = model.latent_offsets();
  parallel_for(m, [&](Eigen::Index j) {
    LatentVector<Scalar> e(offsets, model.spec.n_fsz);
    e.flat()(j) = Scalar(1);
    s.col(j) = apply_sqrt(model, e);
  });
  return s;
}

/// K_ICR = sqrt(K_ICR) sqrt(K_ICR)^T.
template <typename Scalar>
MatrixX<Scalar> implicit_covariance(const IcrModel<Scalar>& model) {
  const MatrixX<Scalar> s = implicit_sqrt(model);
  MatrixX<Scalar> k = MatrixX<Scalar>::Zero(s.rows(), s.rows());
  k.template selfadjointView<Eigen::Lower>().rankUpdate(s);
  return k.template selfadjointView<Eigen::Lower>();
}

/// Dense Gram matrix of the model's kernel on its modeled points.
template <typename Scalar>
MatrixX<Scalar> true_covariance(const IcrModel<Scalar>& model) {
  if (model.output_size() > kDenseGuard)
    throw SizeError("true covariance exceeds the dense guard");
  return gram(model.kernel, model.modeled_coords());
}

struct CovarianceComparison {
  double mae = 0;
  double max_abs_err = 0;
  double max_diag_err = 0;
  /// KL(N(0, K_true) || N(0, K_approx)); +infinity when K_approx could not
  /// be factorized.
  double kl_true_from_approx = 0;
  bool kl_finite = true;
  /// Jitter added to K_approx for the KL computation (0 when none).
  double kl_jitter = 0;
  Eigen::Index n = 0;
};

/// Gaussian KL divergence 1/2 (tr(B^-1 A) - n + log det B - log det A).
/// Returns nullopt when B cannot be factorized even with jitter.
template <typename Scalar>
std::optional<std::pair<Scalar, Scalar>> gaussian_kl(const MatrixX<Scalar>& a,
                                                     const MatrixX<Scalar>& b) {
  JitteredCholesky<Scalar> cb(b, Scalar(1e-12));
  if (!cb.ok) return std::nullopt;
  JitteredCholesky<Scalar> ca(a, Scalar(1e-12));
  if (!ca.ok)
    throw FactorizationError("KL: reference covariance is not positive definite");
  // tr(B^-1 A) = ||L_B^-1 L_A||_F^2
  const MatrixX<Scalar> la = ca.llt.matrixL();
  const MatrixX<Scalar> x = cb.llt.matrixL().solve(la);
  const Scalar n = static_cast<Scalar>(a.rows());
  const Scalar kl = Scalar(0.5) *
                    (x.squaredNorm() - n + cb.log_det() - ca.log_det());
  return std::make_pair(std::max(kl, Scalar(0)), cb.jitter);
}

template <typename Scalar>
CovarianceComparison compare_covariances(const MatrixX<Scalar>& k_true,
                                         const MatrixX<Scalar>& k_approx) {
  if (k_true.rows() != k_true.cols() || k_true.rows() != k_approx.rows() ||
      k_true.cols() != k_approx.cols())
    throw InputError("compare_covariances: shapes differ");
  const MatrixX<Scalar> delta = (k_true - k_approx).cwiseAbs();
  CovarianceComparison c;
  c.n = k_true.rows();
  if (c.n == 0) return c;
  c.mae = static_cast<double>(delta.mean());
  c.max_abs_err = static_cast<double>(delta.maxCoeff());
  c.max_diag_err = static_cast<double>(delta.diagonal().maxCoeff());
  const auto kl = gaussian_kl<Scalar>(k_true, k_approx);
  if (kl) {
    c.kl_true_from_approx = static_cast<double>(kl->first);
    c.kl_jitter = static_cast<double>(kl->second);
  } else {
    c.kl_true_from_approx = std::numeric_limits<double>::infinity();
    c.kl_finite = false;
  }
  return c;
}

/// One ICR configuration built for a fixed set of modeled points.
template <typename Scalar>
struct ExperimentSetup {
  Kernel<Scalar> kernel;
  ChartRule<Scalar> chart;
  int n = 200;
  int n_lvl = 0;
  FineStrategy strategy = FineStrategy::Jump;
  SizePolicy size_policy = SizePolicy::Exact;
  Scalar jitter = Scalar(1e-12);
};

/// Builds the model for refinement shape (n_csz, n_fsz) under `setup`.
template <typename Scalar>
IcrModel<Scalar> build_experiment_model(const ExperimentSetup<Scalar>& setup,
                                        int n_csz, int n_fsz,
                                        BuildOptions options = {}) {
  RefinementSpec<Scalar> spec;
  spec.n_csz = n_csz;
  spec.n_fsz = n_fsz;
  spec.n_lvl = setup.n_lvl;
  spec.jitter = setup.jitter;
  spec.strategy = setup.strategy;
  spec = with_target_size(spec, setup.n, setup.size_policy);
  const auto h = build_hierarchy(spec);
  const auto chart = setup.chart.resolve(h, setup.kernel.rho);
  return build_model(setup.kernel, chart, spec, options);
}

struct CandidateResult {
  int n_csz = 0;
  int n_fsz = 0;
  bool reachable = false;
  int n0 = 0;
  CovarianceComparison metrics;
  /// Why the candidate was skipped, empty when reachable.
  std::string reason;
};

struct SelectionResult {
  int n_csz = 0;
  int n_fsz = 0;
  std::vector<CandidateResult> table;
};

/// Picks the refinement shape with the smallest KL(true || ICR) on the
/// setup's modeled points. Ties go to the smaller n_csz, then n_fsz.
template <typename Scalar>
SelectionResult select_refinement_params(
    const ExperimentSetup<Scalar>& setup,
    const std::vector<std::pair<int, int>>& candidates) {
  SelectionResult result;
  const CandidateResult* best = nullptr;
  result.table.reserve(candidates.size());
  for (const auto& [csz, fsz] : candidates) {
    CandidateResult row;
    row.n_csz = csz;
    row.n_fsz = fsz;
    try {
      const auto model = build_experiment_model(setup, csz, fsz);
      row.n0 = model.spec.n0;
      row.metrics =
          compare_covariances(true_covariance(model), implicit_covariance(model));
      row.reachable = true;
    } catch (const SpecError& e) {
      row.reason = e.what();
    } catch (const FactorizationError& e) {
      row.reason = e.what();
    }
    result.table.push_back(row);
  }
  for (const auto& row : result.table) {
    if (!row.reachable || !row.metrics.kl_finite) continue;
    const auto key = [](const CandidateResult& r) {
      return std::make_tuple(r.metrics.kl_true_from_approx, r.n_csz, r.n_fsz);
    };
    if (!best || key(row) < key(*best)) best = &row;
  }
  if (!best)
    throw SpecError("no refinement candidate is reachable for N=" +
                    std::to_string(setup.n));
  result.n_csz = best->n_csz;
  result.n_fsz = best->n_fsz;
  return result;
}

/// Applies the (jittered) Cholesky factor of K to the draw `z`.
template <typename Scalar>
VectorX<Scalar> exact_sample_from(const MatrixX<Scalar>& k,
                                  const VectorX<Scalar>& z) {
  if (k.rows() != k.cols() || k.rows() != z.size())
    throw InputError("exact_sample: K must be square and match the draw");
  JitteredCholesky<Scalar> chol(k, Scalar(1e-12));
  if (!chol.ok)
    throw FactorizationError("exact_sample: K is not positive definite");
  return chol.llt.matrixL() * z;
}

/// s = L xi with xi drawn like draw_standard_normal.
template <typename Scalar>
VectorX<Scalar> exact_sample(const MatrixX<Scalar>& k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<Scalar> normal(Scalar(0), Scalar(1));
  VectorX<Scalar> z(k.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return exact_sample_from(k, z);
}

}  // namespace icr

#endif  // ICR_EXACTGP_HPP
