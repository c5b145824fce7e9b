#ifndef ICR_REFINE_HPP
#define ICR_REFINE_HPP

#include <cmath>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "icr/charts.hpp"
#include "icr/errors.hpp"
#include "icr/parallel.hpp"
#include "icr/refine_spec.hpp"

namespace icr {

/// Conditional-mean filter R (n_fsz x n_csz) and lower-triangular factor
/// sqrtD (n_fsz x n_fsz) of the conditional covariance of one window:
///   s_fine = R * s_coarse + sqrtD * xi.
template <typename Scalar>
struct RefinementMatrices {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Matrix R;
  Matrix sqrtD;
  /// Jitter actually added to D (after any escalation).
  Scalar jitter_used = Scalar(0);
};

namespace detail {

template <typename Derived>
std::string format_coords(const Eigen::MatrixBase<Derived>& x) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (Eigen::Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << ']';
  return os.str();
}

}  // namespace detail

/// Refinement matrices of one window for an arbitrary covariance callable
/// `cov(x, x')` evaluated on the given coordinates.
///
/// R = K_fc K_cc^-1 is obtained from a Cholesky solve of K_cc. D is
/// symmetrized and factorized with `jitter` on the diagonal; on failure the
/// jitter is raised once by a factor 100.
template <typename Scalar, typename Cov, typename DerivedC, typename DerivedF>
RefinementMatrices<Scalar> refinement_matrices(
    const Cov& cov, const Eigen::MatrixBase<DerivedC>& coarse,
    const Eigen::MatrixBase<DerivedF>& fine, Scalar jitter) {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const Eigen::Index nc = coarse.size();
  const Eigen::Index nf = fine.size();
  if (!coarse.allFinite() || !fine.allFinite())
    throw InputError("refinement window coordinates must be finite");
  for (Eigen::Index j = 1; j < nc; ++j)
    if (!(coarse(j) > coarse(j - 1)))
      throw InputError("coarse window coordinates must strictly increase: " +
                       detail::format_coords(coarse));

  Matrix kcc(nc, nc), kfc(nf, nc), kff(nf, nf);
  for (Eigen::Index j = 0; j < nc; ++j)
    for (Eigen::Index i = 0; i < nc; ++i) kcc(i, j) = cov(coarse(i), coarse(j));
  for (Eigen::Index j = 0; j < nc; ++j)
    for (Eigen::Index i = 0; i < nf; ++i) kfc(i, j) = cov(fine(i), coarse(j));
  for (Eigen::Index j = 0; j < nf; ++j)
    for (Eigen::Index i = 0; i < nf; ++i) kff(i, j) = cov(fine(i), fine(j));

  Eigen::LLT<Matrix> llt_cc(kcc);
  if (llt_cc.info() != Eigen::Success) {
    kcc.diagonal().array() += jitter;
    llt_cc.compute(kcc);
    if (llt_cc.info() != Eigen::Success)
      throw FactorizationError(
          "coarse covariance is numerically singular for window " +
          detail::format_coords(coarse));
  }

  RefinementMatrices<Scalar> out;
  out.R = llt_cc.solve(kfc.transpose()).transpose();
  Matrix d = kff - out.R * kfc.transpose();
  d = (Scalar(0.5) * (d + d.transpose())).eval();

  Scalar j = jitter;
  for (int attempt = 0; attempt < 2; ++attempt, j *= Scalar(100)) {
    Matrix dj = d;
    dj.diagonal().array() += j;
    Eigen::LLT<Matrix> llt_d(dj);
    if (llt_d.info() == Eigen::Success) {
      out.sqrtD = llt_d.matrixL();
      out.jitter_used = j;
      return out;
    }
  }
  throw FactorizationError(
      "conditional covariance is not positive definite for coarse " +
      detail::format_coords(coarse) + ", fine " + detail::format_coords(fine));
}

/// Same as above with the charted kernel acting on Euclidean coordinates.
template <typename Scalar, typename DerivedC, typename DerivedF>
RefinementMatrices<Scalar> refinement_matrices(
    const ChartedKernel<Scalar>& ck, const Eigen::MatrixBase<DerivedC>& coarse,
    const Eigen::MatrixBase<DerivedF>& fine, Scalar jitter) {
  const auto mc = ck.chart.map(coarse);
  const auto mf = ck.chart.map(fine);
  for (Eigen::Index j = 1; j < mc.size(); ++j)
    if (!(mc(j) != mc(j - 1)))
      throw FactorizationError(
          "chart maps distinct coarse pixels onto the same location in "
          "window " +
          detail::format_coords(coarse));
  auto cov = [&ck](Scalar x, Scalar y) { return ck.kernel(std::abs(x - y)); };
  // Modeled coordinates may decrease under a reflecting chart; K only
  // depends on distances so the window can be fed in sorted order.
  if (mc.size() > 1 && mc(1) < mc(0)) {
    RefinementMatrices<Scalar> out =
        refinement_matrices<Scalar>(cov, mc.reverse(), mf, jitter);
    out.R = out.R.rowwise().reverse().eval();
    return out;
  }
  return refinement_matrices<Scalar>(cov, mc, mf, jitter);
}

/// All refinement matrices producing one level, stacked window by window.
/// Broadcast levels hold a single block shared by every window.
template <typename Scalar>
struct LevelMatrices {
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  bool broadcast = false;
  int windows = 0;
  int n_csz = 0;
  int n_fsz = 0;
  /// (blocks * n_fsz) x n_csz
  RowMatrix R;
  /// (blocks * n_fsz) x n_fsz, each block lower triangular
  RowMatrix sqrtD;

  int blocks() const { return broadcast ? 1 : windows; }

  RefinementMatrices<Scalar> window(int i) const {
    const int b = broadcast ? 0 : i;
    RefinementMatrices<Scalar> m;
    m.R = R.middleRows(Eigen::Index(b) * n_fsz, n_fsz);
    m.sqrtD = sqrtD.middleRows(Eigen::Index(b) * n_fsz, n_fsz);
    return m;
  }

  /// Per-window copy of a broadcast level.
  LevelMatrices materialized() const {
    if (!broadcast) return *this;
    LevelMatrices out = *this;
    out.broadcast = false;
    out.R = R.replicate(windows, 1);
    out.sqrtD = sqrtD.replicate(windows, 1);
    return out;
  }
};

namespace detail {

/// True when every window of `level` has the same relative geometry as the
/// first one.
template <typename Scalar>
bool level_is_regular(const GridHierarchy<Scalar>& h, int level) {
  const auto& coarse = h.levels[level - 1];
  const auto& fine = h.levels[level];
  const int nw = h.windows[level];
  const Scalar tol = Scalar(1e-9) * h.spacing[level];
  for (int i = 1; i < nw; ++i) {
    const Scalar shift = coarse(i * h.stride) - coarse(0);
    for (int j = 0; j < h.n_csz; ++j)
      if (std::abs(coarse(i * h.stride + j) - coarse(j) - shift) > tol)
        return false;
    for (int j = 0; j < h.n_fsz; ++j)
      if (std::abs(fine(i * h.n_fsz + j) - fine(j) - shift) > tol) return false;
  }
  return true;
}

}  // namespace detail

/// Refinement matrices for `level` (1-based). Translation-invariant charts on
/// regular levels yield a single broadcast block unless `allow_broadcast` is
/// false; otherwise every window gets its own matrices, computed
/// independently (and in parallel when OpenMP is enabled).
template <typename Scalar>
LevelMatrices<Scalar> matrices_for_level(const ChartedKernel<Scalar>& ck,
                                         const GridHierarchy<Scalar>& h,
                                         int level, Scalar jitter,
                                         bool allow_broadcast = true) {
  if (level < 1 || level > h.depth())
    throw InputError("level " + std::to_string(level) + " outside [1, " +
                     std::to_string(h.depth()) + "]");
  const auto& coarse = h.levels[level - 1];
  const auto& fine = h.levels[level];

  LevelMatrices<Scalar> out;
  out.windows = h.windows[level];
  out.n_csz = h.n_csz;
  out.n_fsz = h.n_fsz;
  out.broadcast = allow_broadcast && ck.chart.translation_invariant() &&
                  detail::level_is_regular(h, level);

  const Eigen::Index blocks = out.blocks();
  out.R.resize(blocks * h.n_fsz, h.n_csz);
  out.sqrtD.resize(blocks * h.n_fsz, h.n_fsz);

  parallel_for(blocks, [&](Eigen::Index i) {
    try {
      const auto m = refinement_matrices<Scalar>(
          ck, coarse.segment(i * h.stride, h.n_csz),
          fine.segment(i * h.n_fsz, h.n_fsz), jitter);
      out.R.middleRows(i * h.n_fsz, h.n_fsz) = m.R;
      out.sqrtD.middleRows(i * h.n_fsz, h.n_fsz) = m.sqrtD;
    } catch (const FactorizationError& e) {
      throw FactorizationError("level " + std::to_string(level) + " window " +
                               std::to_string(i) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError("level " + std::to_string(level) + " window " +
                       std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace icr

#endif  // ICR_REFINE_HPP
