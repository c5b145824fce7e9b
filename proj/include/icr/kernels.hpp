#ifndef ICR_KERNELS_HPP
#define ICR_KERNELS_HPP

#include <cmath>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "icr/errors.hpp"

namespace icr {

enum class KernelFamily { Matern32, RBF };

inline std::string_view to_string(KernelFamily family) {
  return family == KernelFamily::Matern32 ? "matern32" : "rbf";
}

inline KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "matern32") return KernelFamily::Matern32;
  if (name == "rbf") return KernelFamily::RBF;
  throw InputError("unknown kernel family '" + std::string(name) +
                   "' (expected matern32 or rbf)");
}

/// Stationary isotropic covariance k(d) with length scale `rho` and
/// marginal variance `amplitude`.
template <typename Scalar>
struct Kernel {
  KernelFamily family = KernelFamily::Matern32;
  Scalar rho = Scalar(1);
  Scalar amplitude = Scalar(1);

  void validate() const {
    if (!(rho > Scalar(0)) || !std::isfinite(rho))
      throw InputError("kernel rho must be positive and finite");
    if (!(amplitude > Scalar(0)) || !std::isfinite(amplitude))
      throw InputError("kernel amplitude must be positive and finite");
  }

  /// Covariance at distance `d` without argument checks.
  Scalar operator()(Scalar d) const {
    using std::exp;
    if (family == KernelFamily::Matern32) {
      const Scalar x = std::sqrt(Scalar(3)) * d / rho;
      return amplitude * (Scalar(1) + x) * exp(-x);
    }
    const Scalar x = d / rho;
    return amplitude * exp(Scalar(-0.5) * x * x);
  }
};

using Kerneld = Kernel<double>;

template <typename Scalar>
Scalar evaluate(const Kernel<Scalar>& kernel, Scalar d) {
  if (!std::isfinite(d) || d < Scalar(0))
    throw InputError("kernel distance must be finite and nonnegative, got " +
                     std::to_string(static_cast<double>(d)));
  return kernel(d);
}

/// Cross-Gram matrix: entry (i, j) = k(|x[i] - y[j]|).
template <typename Scalar, typename DerivedX, typename DerivedY>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(
    const Kernel<Scalar>& kernel, const Eigen::MatrixBase<DerivedX>& x,
    const Eigen::MatrixBase<DerivedY>& y) {
  if (!x.allFinite() || !y.allFinite())
    throw InputError("gram: locations must be finite");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(x.size(),
                                                            y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j)
    for (Eigen::Index i = 0; i < x.size(); ++i)
      out(i, j) = kernel(std::abs(x(i) - y(j)));
  return out;
}

template <typename Scalar, typename DerivedX>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> gram(
    const Kernel<Scalar>& kernel, const Eigen::MatrixBase<DerivedX>& x) {
  return gram(kernel, x, x);
}

}  // namespace icr

#endif  // ICR_KERNELS_HPP
