#ifndef ICR_CHARTS_HPP
#define ICR_CHARTS_HPP

#include <cmath>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "icr/errors.hpp"
#include "icr/kernels.hpp"
#include "icr/refine_spec.hpp"

namespace icr {

enum class ChartFamily { Identity, Affine, LogSpaced };

inline std::string_view to_string(ChartFamily family) {
  switch (family) {
    case ChartFamily::Identity:
      return "identity";
    case ChartFamily::Affine:
      return "affine";
    case ChartFamily::LogSpaced:
      return "log";
  }
  return "?";
}

inline ChartFamily parse_chart_family(std::string_view name) {
  if (name == "identity") return ChartFamily::Identity;
  if (name == "affine") return ChartFamily::Affine;
  if (name == "log") return ChartFamily::LogSpaced;
  throw InputError("unknown chart family '" + std::string(name) +
                   "' (expected identity, affine or log)");
}

/// Map from regular Euclidean grid coordinates to modeled locations.
///
/// Affine:    x -> scale * x + offset
/// LogSpaced: x -> r0 * exp(a * x)
template <typename Scalar>
struct Chart {
  ChartFamily family = ChartFamily::Identity;
  Scalar scale = Scalar(1);
  Scalar offset = Scalar(0);
  Scalar r0 = Scalar(1);
  Scalar a = Scalar(1);

  static Chart identity() { return {}; }
  static Chart affine(Scalar scale, Scalar offset) {
    Chart c;
    c.family = ChartFamily::Affine;
    c.scale = scale;
    c.offset = offset;
    return c;
  }
  static Chart log_spaced(Scalar r0, Scalar a) {
    Chart c;
    c.family = ChartFamily::LogSpaced;
    c.r0 = r0;
    c.a = a;
    return c;
  }

  void validate() const {
    if (family == ChartFamily::Affine &&
        (!(scale != Scalar(0)) || !std::isfinite(scale) ||
         !std::isfinite(offset)))
      throw InputError("affine chart needs a finite nonzero scale");
    if (family == ChartFamily::LogSpaced &&
        (!(r0 > Scalar(0)) || !(a > Scalar(0)) || !std::isfinite(r0) ||
         !std::isfinite(a)))
      throw InputError("log chart needs positive finite r0 and a");
  }

  Scalar operator()(Scalar x) const {
    Scalar y = x;
    switch (family) {
      case ChartFamily::Identity:
        break;
      case ChartFamily::Affine:
        y = scale * x + offset;
        break;
      case ChartFamily::LogSpaced:
        y = r0 * std::exp(a * x);
        break;
    }
    if (!std::isfinite(y))
      throw NumericError("chart evaluation overflow at grid coordinate " +
                         std::to_string(static_cast<double>(x)));
    return y;
  }

  template <typename Derived>
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> map(
      const Eigen::MatrixBase<Derived>& x) const {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) y(i) = (*this)(x(i));
    return y;
  }

  /// A stationary kernel composed with this chart is translation invariant
  /// on a regular grid.
  bool translation_invariant() const {
    return family != ChartFamily::LogSpaced;
  }
};

using Chartd = Chart<double>;

/// k~(x, x') = k(|phi^-1(x) - phi^-1(x')|) on Euclidean grid coordinates.
template <typename Scalar>
struct ChartedKernel {
  Kernel<Scalar> kernel;
  Chart<Scalar> chart;

  Scalar operator()(Scalar x, Scalar xp) const {
    return kernel(std::abs(chart(x) - chart(xp)));
  }
};

template <typename Scalar>
ChartedKernel<Scalar> charted_kernel(const Kernel<Scalar>& kernel,
                                     const Chart<Scalar>& chart) {
  kernel.validate();
  chart.validate();
  return {kernel, chart};
}

/// Euclidean pixel centres of every refinement level.
template <typename Scalar>
struct GridHierarchy {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  int n_csz = 3;
  int n_fsz = 2;
  int stride = 1;
  std::vector<Vector> levels;
  std::vector<Scalar> spacing;
  /// windows[l] is the number of refinement windows producing level l;
  /// windows[0] is 0.
  std::vector<int> windows;
  Eigen::Index output_offset = 0;
  Eigen::Index output_size = 0;

  int depth() const { return static_cast<int>(levels.size()) - 1; }
  Eigen::Index size(int level) const { return levels[level].size(); }
  const Vector& final_level() const { return levels.back(); }
  Vector output_coords() const {
    return final_level().segment(output_offset, output_size);
  }
  std::vector<Eigen::Index> sizes() const {
    std::vector<Eigen::Index> out;
    for (const auto& l : levels) out.push_back(l.size());
    return out;
  }
};

using GridHierarchyd = GridHierarchy<double>;

/// Level sizes for a base of `n0` pixels; throws SpecError naming the first
/// level too small to be refined.
inline std::vector<int> level_sizes(int n0, int n_lvl, int n_csz, int n_fsz,
                                    FineStrategy strategy) {
  if (n0 < 1) throw SpecError("base size must be >= 1");
  std::vector<int> sizes{n0};
  for (int l = 1; l <= n_lvl; ++l) {
    if (sizes.back() < n_csz)
      throw SpecError("level " + std::to_string(l - 1) + " has " +
                      std::to_string(sizes.back()) +
                      " pixels, fewer than n_csz=" + std::to_string(n_csz));
    sizes.push_back(fine_size(sizes.back(), n_csz, n_fsz, strategy));
  }
  return sizes;
}

struct SizeResolution {
  int n0 = 0;
  int final_size = 0;
  int output_offset = 0;
};

namespace detail {
inline int final_size_or_zero(int n0, int n_lvl, int n_csz, int n_fsz,
                              FineStrategy strategy) {
  int n = n0;
  for (int l = 0; l < n_lvl; ++l) {
    if (n < n_csz) return 0;
    n = fine_size(n, n_csz, n_fsz, strategy);
  }
  return n;
}
}  // namespace detail

/// Finds the base size whose final level yields `target` pixels.
///
/// Exact: the final level must equal `target`; otherwise throws SpecError
/// listing the nearest achievable sizes below and above.
/// Crop: smallest base whose final level holds at least `target` pixels; the
/// output is the central `target`-pixel run.
inline SizeResolution resolve_target_size(int target, int n_lvl, int n_csz,
                                          int n_fsz, FineStrategy strategy,
                                          SizePolicy policy) {
  if (target < 1) throw InputError("target size must be >= 1");
  if (n_lvl == 0) return {target, target, 0};
  const int limit = target + (n_lvl + 1) * (n_csz + n_fsz) + 2;
  int below = 0;
  int above = 0;
  for (int n0 = n_csz; n0 <= limit; ++n0) {
    const int f = detail::final_size_or_zero(n0, n_lvl, n_csz, n_fsz, strategy);
    if (f == 0) continue;
    if (f == target) return {n0, f, 0};
    if (f < target) below = f;
    if (f > target) {
      if (policy == SizePolicy::Crop) return {n0, f, (f - target) / 2};
      above = f;
      break;
    }
  }
  if (policy == SizePolicy::Crop)
    throw SpecError("no base size reaches " + std::to_string(target) +
                    " pixels");
  throw SpecError("final size " + std::to_string(target) +
                  " is unreachable with n_csz=" + std::to_string(n_csz) +
                  ", n_fsz=" + std::to_string(n_fsz) +
                  ", n_lvl=" + std::to_string(n_lvl) +
                  "; nearest achievable sizes are " + std::to_string(below) +
                  " and " + std::to_string(above));
}

/// Builds the Euclidean coordinates of every level. Level 0 is 0, 1, ...,
/// n0 - 1; each window places n_fsz fine pixels symmetrically around its
/// central coarse pixel.
template <typename Scalar>
GridHierarchy<Scalar> build_hierarchy(const RefinementSpec<Scalar>& spec) {
  spec.validate_shape();
  const auto sizes =
      level_sizes(spec.n0, spec.n_lvl, spec.n_csz, spec.n_fsz, spec.strategy);

  GridHierarchy<Scalar> h;
  h.n_csz = spec.n_csz;
  h.n_fsz = spec.n_fsz;
  h.stride = spec.window_stride();
  h.levels.emplace_back(
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::LinSpaced(spec.n0, 0,
                                                          spec.n0 - 1));
  h.spacing.push_back(Scalar(1));
  h.windows.push_back(0);

  const int half = spec.n_csz / 2;
  for (int l = 1; l <= spec.n_lvl; ++l) {
    const auto& coarse = h.levels.back();
    const Scalar dc = h.spacing.back();
    const Scalar df = spec.strategy == FineStrategy::Jump
                          ? dc / Scalar(spec.n_fsz)
                          : dc / Scalar(2);
    const int nw = window_count(static_cast<int>(coarse.size()), spec.n_csz,
                                spec.n_fsz, spec.strategy);
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fine(nw * spec.n_fsz);
    const Scalar centre_shift = Scalar(spec.n_fsz - 1) / Scalar(2);
    for (int i = 0; i < nw; ++i) {
      const Scalar c = coarse(i * h.stride + half);
      for (int j = 0; j < spec.n_fsz; ++j)
        fine(i * spec.n_fsz + j) = c + df * (Scalar(j) - centre_shift);
    }
    h.levels.push_back(std::move(fine));
    h.spacing.push_back(df);
    h.windows.push_back(nw);
  }

  const Eigen::Index final_n = h.levels.back().size();
  if (spec.output_size > final_n)
    throw SpecError("requested output of " + std::to_string(spec.output_size) +
                    " pixels exceeds final level size " +
                    std::to_string(final_n));
  h.output_size = spec.output_size > 0 ? spec.output_size : final_n;
  h.output_offset = (final_n - h.output_size) / 2;
  return h;
}

/// Log chart over a uniform grid of `n_points` coordinates starting at
/// `first` with spacing `h`: consecutive modeled gaps grow geometrically so
/// that largest / smallest = `spacing_ratio` and the largest equals
/// `max_gap`.
template <typename Scalar>
Chart<Scalar> log_chart_for_grid(Scalar first, Scalar h, int n_points,
                                 Scalar spacing_ratio, Scalar max_gap) {
  if (n_points < 2) throw InputError("log chart needs at least two points");
  if (!(spacing_ratio > Scalar(1)))
    throw InputError("spacing ratio must exceed 1");
  if (!(h > Scalar(0))) throw InputError("grid spacing must be positive");
  const int gaps = std::max(n_points - 2, 1);
  const Scalar a = std::log(spacing_ratio) / (h * Scalar(gaps));
  // Largest gap sits between the last two points.
  const Scalar last_left = first + h * Scalar(n_points - 2);
  const Scalar r0 = max_gap * std::exp(-a * last_left) / std::expm1(a * h);
  return Chart<Scalar>::log_spaced(r0, a);
}

/// Log chart anchored on the output pixels of `hierarchy`'s final level.
template <typename Scalar>
Chart<Scalar> log_chart_for_experiment(const GridHierarchy<Scalar>& hierarchy,
                                       Scalar spacing_ratio, Scalar max_gap) {
  const auto x = hierarchy.output_coords();
  return log_chart_for_grid<Scalar>(x(0), hierarchy.spacing.back(),
                                    static_cast<int>(x.size()), spacing_ratio,
                                    max_gap);
}

/// Either a fixed chart or the log-spaced experiment chart, which is anchored
/// on each hierarchy's output pixels so that differently shaped hierarchies
/// model the same point set.
template <typename Scalar>
struct ChartRule {
  bool log_experiment = false;
  Chart<Scalar> fixed;
  Scalar spacing_ratio = Scalar(50);

  static ChartRule fixed_chart(const Chart<Scalar>& c) {
    ChartRule r;
    r.fixed = c;
    return r;
  }
  static ChartRule log_spaced_experiment(Scalar spacing_ratio) {
    ChartRule r;
    r.log_experiment = true;
    r.spacing_ratio = spacing_ratio;
    return r;
  }

  /// `max_gap` is the largest nearest-neighbour distance of the log chart.
  Chart<Scalar> resolve(const GridHierarchy<Scalar>& h, Scalar max_gap) const {
    if (!log_experiment) return fixed;
    return log_chart_for_experiment(h, spacing_ratio, max_gap);
  }
};

}  // namespace icr

#endif  // ICR_CHARTS_HPP
