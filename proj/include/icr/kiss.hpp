#ifndef ICR_KISS_HPP
#define ICR_KISS_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/FFT>

#include "icr/errors.hpp"
#include "icr/kernels.hpp"

namespace icr {

/// Simplified KISS-GP covariance K = W F^-1 diag(P) F W^T + jitter I:
/// linear interpolation onto a regular inducing grid whose kernel matrix is
/// replaced by a circulant with spectrum P.
template <typename Scalar>
struct KissModel {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Eigen::Index m = 0;
  Scalar grid_start = Scalar(0);
  Scalar grid_step = Scalar(1);
  Vector inducing_coords;
  /// Interpolation stencil: point i mixes inducing points left[i] and
  /// left[i] + 1 with weights w_left[i] and w_right[i].
  std::vector<Eigen::Index> left;
  Vector w_left;
  Vector w_right;
  /// Real DFT of the circulant's first row, negatives clipped to zero.
  Vector spectrum;
  int clipped_count = 0;
  Scalar padding_factor = Scalar(0);
  Scalar diag_jitter = Scalar(0);

  Eigen::Index n() const { return static_cast<Eigen::Index>(left.size()); }

  Eigen::SparseMatrix<Scalar> interpolation_matrix() const {
    std::vector<Eigen::Triplet<Scalar>> t;
    t.reserve(2 * left.size());
    for (Eigen::Index i = 0; i < n(); ++i) {
      if (w_left(i) != Scalar(0)) t.emplace_back(i, left[i], w_left(i));
      if (w_right(i) != Scalar(0)) t.emplace_back(i, left[i] + 1, w_right(i));
    }
    Eigen::SparseMatrix<Scalar> w(n(), m);
    w.setFromTriplets(t.begin(), t.end());
    return w;
  }
};

using KissModeld = KissModel<double>;

/// Inducing grid of `m` points spanning the modeled range widened by
/// `padding_factor` times its length, split evenly between both ends.
template <typename Scalar, typename Derived>
KissModel<Scalar> build_kiss(const Kernel<Scalar>& kernel,
                             const Eigen::MatrixBase<Derived>& coords,
                             Eigen::Index m, Scalar padding_factor,
                             Scalar diag_jitter) {
  kernel.validate();
  if (m < 2) throw InputError("KISS needs at least two inducing points");
  if (coords.size() < 1) throw InputError("KISS needs modeled points");
  if (!coords.allFinite()) throw InputError("KISS coordinates must be finite");
  for (Eigen::Index i = 1; i < coords.size(); ++i)
    if (coords(i) < coords(i - 1))
      throw InputError("KISS coordinates must be sorted");
  if (!(padding_factor >= Scalar(0)) || !(diag_jitter >= Scalar(0)))
    throw InputError("KISS padding and jitter must be nonnegative");

  KissModel<Scalar> km;
  km.m = m;
  km.padding_factor = padding_factor;
  km.diag_jitter = diag_jitter;

  const Scalar lo = coords(0);
  const Scalar hi = coords(coords.size() - 1);
  Scalar range = hi - lo;
  if (range == Scalar(0)) range = kernel.rho;
  km.grid_start = lo - Scalar(0.5) * padding_factor * range;
  const Scalar grid_end = hi + Scalar(0.5) * padding_factor * range;
  km.grid_step = (grid_end - km.grid_start) / Scalar(m - 1);
  km.inducing_coords.resize(m);
  for (Eigen::Index j = 0; j < m; ++j)
    km.inducing_coords(j) = km.grid_start + Scalar(j) * km.grid_step;

  std::vector<Scalar> row(m);
  for (Eigen::Index j = 0; j < m; ++j)
    row[j] = kernel(Scalar(std::min(j, m - j)) * km.grid_step);
  Eigen::FFT<Scalar> fft;
  std::vector<std::complex<Scalar>> freq;
  fft.fwd(freq, row);
  km.spectrum.resize(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    Scalar p = freq[j].real();
    if (p < Scalar(0)) {
      p = Scalar(0);
      ++km.clipped_count;
    }
    km.spectrum(j) = p;
  }

  const Eigen::Index n = coords.size();
  km.left.resize(n);
  km.w_left.resize(n);
  km.w_right.resize(n);
  const Scalar snap = Scalar(1e-12);
  for (Eigen::Index i = 0; i < n; ++i) {
    Scalar t = (coords(i) - km.grid_start) / km.grid_step;
    const Scalar nearest = std::round(t);
    if (std::abs(t - nearest) <= snap * std::max(Scalar(1), std::abs(t)))
      t = nearest;
    if (t < Scalar(0) || t > Scalar(m - 1))
      throw InputError("modeled coordinate " +
                       std::to_string(static_cast<double>(coords(i))) +
                       " lies outside the inducing grid");
    const Eigen::Index j =
        std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(t)), m - 2);
    const Scalar w = t - Scalar(j);
    km.left[i] = j;
    km.w_left(i) = Scalar(1) - w;
    km.w_right(i) = w;
  }
  return km;
}

/// Reusable matrix-vector product with a KISS covariance. Holds FFT plans
/// and scratch buffers, so one instance must not be shared across threads.
template <typename Scalar>
class KissOperator {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit KissOperator(const KissModel<Scalar>& model, bool with_jitter = true)
      : model_(model),
        jitter_(with_jitter ? model.diag_jitter : Scalar(0)),
        grid_(model.m),
        freq_(model.m / 2 + 1) {
    fft_.SetFlag(Eigen::FFT<Scalar>::HalfSpectrum);
  }

  Eigen::Index rows() const { return model_.n(); }

  void apply(const Vector& v, Vector& out) {
    const auto& km = model_;
    const Eigen::Index n = km.n();
    std::fill(grid_.begin(), grid_.end(), Scalar(0));
    for (Eigen::Index i = 0; i < n; ++i) {
      grid_[km.left[i]] += km.w_left(i) * v(i);
      grid_[km.left[i] + 1] += km.w_right(i) * v(i);
    }
    fft_.fwd(freq_.data(), grid_.data(), km.m);
    for (std::size_t k = 0; k < freq_.size(); ++k) freq_[k] *= km.spectrum(k);
    fft_.inv(grid_.data(), freq_.data(), km.m);
    out.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
      out(i) = km.w_left(i) * grid_[km.left[i]] +
               km.w_right(i) * grid_[km.left[i] + 1] + jitter_ * v(i);
  }

  Vector operator()(const Vector& v) {
    Vector out;
    apply(v, out);
    return out;
  }

 private:
  const KissModel<Scalar>& model_;
  Scalar jitter_;
  Eigen::FFT<Scalar> fft_;
  std::vector<Scalar> grid_;
  std::vector<std::complex<Scalar>> freq_;
};

template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> kiss_mvm(
    const KissModel<Scalar>& model, const Eigen::MatrixBase<Derived>& v) {
  if (v.size() != model.n())
    throw InputError("kiss_mvm: vector has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(model.n()));
  KissOperator<Scalar> op(model);
  return op(v.eval());
}

/// Dense W C W^T without the diagonal jitter.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> kiss_covariance(
    const KissModel<Scalar>& model, Eigen::Index guard = 4096) {
  const Eigen::Index n = model.n();
  if (n > guard)
    throw SizeError("KISS covariance of " + std::to_string(n) +
                    " points exceeds the dense guard of " +
                    std::to_string(guard));
  KissOperator<Scalar> op(model, /*with_jitter=*/false);
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> k(n, n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> col;
  for (Eigen::Index j = 0; j < n; ++j) {
    e(j) = Scalar(1);
    op.apply(e, col);
    k.col(j) = col;
    e(j) = Scalar(0);
  }
  return k;
}

template <typename Scalar>
struct CgResult {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  /// ||r_k|| for k = 0 .. iterations performed.
  std::vector<Scalar> residual_norms;
};

/// Unpreconditioned conjugate gradients from a zero initial guess for a fixed
/// number of iterations; stops early only on an exactly zero residual.
template <typename Scalar, typename Op>
CgResult<Scalar> cg_solve(Op&& op,
                          const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& b,
                          int iterations) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  CgResult<Scalar> res;
  res.x = Vector::Zero(b.size());
  Vector r = b;
  Vector p = r;
  Vector ap;
  Scalar rs = r.squaredNorm();
  res.residual_norms.push_back(std::sqrt(rs));
  for (int k = 0; k < iterations && rs > Scalar(0); ++k) {
    op(p, ap);
    const Scalar pap = p.dot(ap);
    if (!(pap > Scalar(0))) break;
    const Scalar alpha = rs / pap;
    res.x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const Scalar rs_new = r.squaredNorm();
    res.residual_norms.push_back(std::sqrt(rs_new));
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return res;
}

template <typename Scalar>
struct LanczosQuadrature {
  /// Ritz values (eigenvalues of the tridiagonal matrix).
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  /// Squared first components of the Ritz vectors; they sum to one.
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;
};

/// Gauss quadrature of the spectral measure of `op` seen from the unit
/// vector along `start`. The Krylov basis is truncated when beta < 1e-14.
template <typename Scalar, typename Op>
LanczosQuadrature<Scalar> lanczos_quadrature(
    Op&& op, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& start,
    int iterations) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::vector<Scalar> alpha;
  std::vector<Scalar> beta;
  Vector q = start / start.norm();
  Vector q_prev = Vector::Zero(q.size());
  Vector w;
  Scalar b_prev = Scalar(0);
  for (int k = 0; k < iterations; ++k) {
    op(q, w);
    const Scalar a = q.dot(w);
    alpha.push_back(a);
    w.noalias() -= a * q;
    w.noalias() -= b_prev * q_prev;
    const Scalar b = w.norm();
    if (k + 1 == iterations || b < Scalar(1e-14)) break;
    beta.push_back(b);
    q_prev.swap(q);
    q = w / b;
    b_prev = b;
  }
  const Eigen::Index m = static_cast<Eigen::Index>(alpha.size());
  Vector diag = Eigen::Map<const Vector>(alpha.data(), m);
  Vector sub = m > 1 ? Vector(Eigen::Map<const Vector>(beta.data(), m - 1))
                     : Vector();
  LanczosQuadrature<Scalar> out;
  if (m == 1) {
    out.nodes = diag;
    out.weights = Vector::Ones(1);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>
      eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  out.nodes = eig.eigenvalues();
  out.weights = eig.eigenvectors().row(0).transpose().cwiseAbs2();
  return out;
}

/// Stochastic Lanczos quadrature estimate of log det of `op` (dimension n)
/// with Rademacher probes drawn from std::mt19937_64(seed).
template <typename Scalar, typename Op>
Scalar slq_logdet(Op&& op, Eigen::Index n, int probes, int lanczos_iters,
                  std::uint64_t seed) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(0.5);
  Vector z(n);
  Scalar total = Scalar(0);
  for (int p = 0; p < probes; ++p) {
    for (Eigen::Index i = 0; i < n; ++i) z(i) = coin(rng) ? Scalar(1) : Scalar(-1);
    const auto quad = lanczos_quadrature<Scalar>(op, z, lanczos_iters);
    Scalar s = Scalar(0);
    for (Eigen::Index k = 0; k < quad.nodes.size(); ++k)
      s += quad.weights(k) *
           std::log(std::max(quad.nodes(k), std::numeric_limits<Scalar>::min()));
    total += s;
  }
  return Scalar(n) * total / Scalar(probes);
}

template <typename Scalar>
struct KissForwardPass {
  Scalar quadratic_form = Scalar(0);
  Scalar logdet_estimate = Scalar(0);
};

/// One KISS-GP forward pass: s^T K^-1 s by `cg_iters` CG iterations plus a
/// stochastic Lanczos log-determinant with `probes` probes of
/// `lanczos_iters` steps.
template <typename Scalar, typename Derived>
KissForwardPass<Scalar> kiss_forward_pass(const KissModel<Scalar>& model,
                                          const Eigen::MatrixBase<Derived>& s,
                                          int cg_iters, int probes,
                                          int lanczos_iters,
                                          std::uint64_t seed) {
  if (cg_iters < 1 || probes < 1 || lanczos_iters < 1)
    throw InputError("KISS forward pass needs positive iteration counts");
  if (s.size() != model.n())
    throw InputError("KISS forward pass: wrong vector length");
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  KissOperator<Scalar> k(model);
  auto op = [&k](const Vector& v, Vector& out) { k.apply(v, out); };
  const Vector rhs = s;
  KissForwardPass<Scalar> out;
  out.quadratic_form = rhs.dot(cg_solve<Scalar>(op, rhs, cg_iters).x);
  out.logdet_estimate =
      slq_logdet<Scalar>(op, model.n(), probes, lanczos_iters, seed);
  return out;
}

}  // namespace icr

#endif  // ICR_KISS_HPP
