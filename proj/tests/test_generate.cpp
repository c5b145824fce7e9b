#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "icr/exactgp.hpp"
#include "icr/generate.hpp"

using icr::Chartd;
using icr::FineStrategy;
using icr::Kerneld;
using icr::RefinementSpecd;

namespace {

RefinementSpecd make_spec(int n0, int n_lvl, int csz = 3, int fsz = 2,
                          FineStrategy strategy = FineStrategy::Jump) {
  RefinementSpecd s;
  s.n0 = n0;
  s.n_lvl = n_lvl;
  s.n_csz = csz;
  s.n_fsz = fsz;
  s.strategy = strategy;
  return s;
}

icr::LatentVector<double> random_latent(const icr::IcrModeld& m,
                                        std::mt19937_64& rng) {
  auto xi = m.make_latent();
  std::normal_distribution<double> normal;
  for (auto& v : xi.flat()) v = normal(rng);
  return xi;
}

std::vector<icr::IcrModeld> small_models() {
  std::vector<icr::IcrModeld> out;
  const Kerneld k{icr::KernelFamily::Matern32, 2.0, 1.0};
  out.push_back(icr::build_model(k, Chartd::identity(), make_spec(6, 3)));
  out.push_back(icr::build_model(k, Chartd::log_spaced(0.3, 0.25),
                                 make_spec(13, 2, 5, 4, FineStrategy::Extend)));
  auto cropped = make_spec(9, 2, 5, 2);
  cropped.output_size = 9;
  out.push_back(icr::build_model(k, Chartd::affine(0.7, 2.0), cropped));
  return out;
}

}  // namespace

TEST_CASE("base-only model reproduces the Gram matrix") {
  const Kerneld k;
  const auto m = icr::build_model(k, Chartd::identity(), make_spec(3, 0));
  const Eigen::MatrixXd g = icr::gram(k, m.hierarchy.levels[0]);
  const Eigen::MatrixXd sq = m.sqrtK0 * m.sqrtK0.transpose();
  CHECK((sq - g).norm() <= 1e-8 * g.norm());
}

TEST_CASE("model sizes follow the hierarchy") {
  const auto m = icr::build_model(Kerneld{}, Chartd::identity(), make_spec(12, 2));
  CHECK(m.output_size() == 36);
  CHECK(m.latent_size() == 12 + 20 + 36);

  RefinementSpecd s = make_spec(0, 5, 5, 4, FineStrategy::Extend);
  s = icr::with_target_size(s, 200, icr::SizePolicy::Exact);
  CHECK(s.n0 == 13);
  CHECK(icr::build_hierarchy(s).final_level().size() == 200);

  // no integer base size lands on 200 with the stride-one (5, 4) layout
  RefinementSpecd j = make_spec(0, 5, 5, 4, FineStrategy::Jump);
  CHECK_THROWS_AS(icr::with_target_size(j, 200, icr::SizePolicy::Exact),
                  icr::SpecError);
}

TEST_CASE("apply_sqrt is linear with zero mean") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> coef(-3, 3);
  for (const auto& m : small_models()) {
    const auto zero = m.make_latent();
    CHECK(icr::apply_sqrt(m, zero).isZero(0.0));
    for (int t = 0; t < 20; ++t) {
      const auto x1 = random_latent(m, rng);
      const auto x2 = random_latent(m, rng);
      const double a = coef(rng), b = coef(rng);
      auto mix = m.make_latent();
      mix.flat() = a * x1.flat() + b * x2.flat();
      const Eigen::VectorXd lhs = icr::apply_sqrt(m, mix);
      const Eigen::VectorXd rhs =
          a * icr::apply_sqrt(m, x1) + b * icr::apply_sqrt(m, x2);
      CHECK((lhs - rhs).norm() <= 1e-12 * std::max(1.0, rhs.norm()));
    }
  }
}

TEST_CASE("apply_sqrt rejects mismatched latents") {
  const auto m = icr::build_model(Kerneld{}, Chartd::identity(), make_spec(6, 2));
  const auto other = icr::build_model(Kerneld{}, Chartd::identity(), make_spec(7, 2));
  CHECK_THROWS_AS(icr::apply_sqrt(m, other.make_latent()), icr::InputError);
  CHECK_THROWS_AS(icr::apply_sqrt_adjoint(m, Eigen::VectorXd::Zero(3)),
                  icr::InputError);
}

TEST_CASE("single refinement matches the joint conditional construction") {
  const Kerneld k;
  const auto m = icr::build_model(k, Chartd::identity(), make_spec(3, 1));
  const Eigen::Vector3d xc(0, 1, 2);
  const Eigen::Vector2d xf(0.75, 1.25);
  const Eigen::MatrixXd kcc = icr::gram(k, xc);
  const Eigen::MatrixXd kfc = icr::gram(k, xf, xc);
  const Eigen::MatrixXd kff = icr::gram(k, xf);
  const Eigen::MatrixXd inv = kcc.inverse();
  const Eigen::MatrixXd r = kfc * inv;
  const Eigen::MatrixXd d = kff - kfc * inv * kfc.transpose();
  const Eigen::MatrixXd oracle = r * kcc * r.transpose() + d;
  const Eigen::MatrixXd icr_cov = icr::implicit_covariance(m);
  CHECK((icr_cov - oracle).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("adjoint identity") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> normal;
  for (const auto& m : small_models()) {
    CHECK(icr::apply_sqrt_adjoint(m, Eigen::VectorXd::Zero(m.output_size()))
              .flat()
              .isZero(0.0));
    for (int t = 0; t < 100; ++t) {
      const auto xi = random_latent(m, rng);
      Eigen::VectorXd v(m.output_size());
      for (auto& e : v) e = normal(rng);
      const double lhs = icr::apply_sqrt(m, xi).dot(v);
      const double rhs = xi.flat().dot(icr::apply_sqrt_adjoint(m, v).flat());
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
  }
}

TEST_CASE("adjoint rows agree with central finite differences") {
  std::mt19937_64 rng(21);
  for (const auto& m : small_models()) {
    const auto xi = random_latent(m, rng);
    const double h = 1e-5;
    Eigen::MatrixXd fd(m.output_size(), m.latent_size());
    for (Eigen::Index j = 0; j < m.latent_size(); ++j) {
      auto plus = xi, minus = xi;
      plus.flat()(j) += h;
      minus.flat()(j) -= h;
      fd.col(j) = (icr::apply_sqrt(m, plus) - icr::apply_sqrt(m, minus)) / (2 * h);
    }
    for (Eigen::Index i = 0; i < m.output_size(); ++i) {
      const Eigen::VectorXd e = Eigen::VectorXd::Unit(m.output_size(), i);
      const Eigen::VectorXd row = icr::apply_sqrt_adjoint(m, e).flat();
      CHECK((row - fd.row(i).transpose()).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("sampling is deterministic and centred") {
  const auto m = icr::build_model(Kerneld{}, Chartd::identity(), make_spec(5, 2));
  const Eigen::VectorXd a = icr::sample(m, 1234);
  const Eigen::VectorXd b = icr::sample(m, 1234);
  CHECK((a.array() == b.array()).all());
  CHECK_FALSE((icr::sample(m, 1235).array() == a.array()).all());

  const Eigen::MatrixXd cov = icr::implicit_covariance(m);
  const int n = 10000;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m.output_size());
  for (int s = 0; s < n; ++s) mean += icr::sample(m, s);
  mean /= n;
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    CHECK(std::abs(mean(i)) <= 4 * std::sqrt(cov(i, i) / n));
}

TEST_CASE("sample covariance converges to the implicit covariance") {
  const Kerneld k{icr::KernelFamily::Matern32, 1.5, 1.0};
  const auto m = icr::build_model(k, Chartd::log_spaced(0.2, 0.3),
                                  make_spec(6, 2, 3, 2));
  REQUIRE(m.output_size() <= 32);
  const Eigen::MatrixXd cov = icr::implicit_covariance(m);
  const int n = 100000;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
  auto xi = m.make_latent();
  for (int s = 0; s < n; ++s) {
    icr::draw_standard_normal(xi, 1000 + s);
    const Eigen::VectorXd v = icr::apply_sqrt(m, xi);
    acc.noalias() += v * v.transpose();
  }
  acc /= n;
  for (Eigen::Index i = 0; i < cov.rows(); ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j) {
      const double sigma =
          std::sqrt((cov(i, j) * cov(i, j) + cov(i, i) * cov(j, j)) / n);
      CHECK(std::abs(acc(i, j) - cov(i, j)) <= 5 * sigma);
    }
}

TEST_CASE("thread count does not change samples") {
  auto spec = make_spec(40, 7);
  const auto m = icr::build_model(Kerneld{}, Chartd::log_spaced(1.0, 0.01), spec);
  REQUIRE(m.output_size() > 1000);
  icr::set_num_threads(1);
  const Eigen::VectorXd one = icr::sample(m, 77);
  icr::set_num_threads(4);
  const Eigen::VectorXd four = icr::sample(m, 77);
  const auto rebuilt = icr::build_model(Kerneld{}, Chartd::log_spaced(1.0, 0.01), spec);
  const Eigen::VectorXd four_rebuilt = icr::sample(rebuilt, 77);
  icr::set_num_threads(1);
  CHECK((one.array() == four.array()).all());
  CHECK((one.array() == four_rebuilt.array()).all());
}

TEST_CASE("standardized log probability") {
  const double log2pi = std::log(2 * std::numbers::pi);
  const auto m = icr::build_model(Kerneld{}, Chartd::identity(), make_spec(6, 2));
  auto zero_ll = [](const Eigen::VectorXd&) { return 0.0; };
  const auto xi0 = m.make_latent();
  CHECK(icr::standardized_log_prob(m, xi0, zero_ll) ==
        doctest::Approx(-0.5 * m.latent_size() * log2pi));

  std::mt19937_64 rng(2);
  const auto xi = random_latent(m, rng);
  auto xi2 = xi;
  xi2.flat() *= 2.0;
  const double diff = icr::standardized_log_prob(m, xi2, zero_ll) -
                      icr::standardized_log_prob(m, xi, zero_ll);
  CHECK(diff == doctest::Approx(-1.5 * xi.flat().squaredNorm()));

  auto nan_ll = [](const Eigen::VectorXd&) { return std::nan(""); };
  CHECK_THROWS_AS(icr::standardized_log_prob(m, xi, nan_ll), icr::NumericError);
}

TEST_CASE("standardized log probability equals the dense joint up to the Jacobian") {
  // With a square factor s = S xi the two parameterizations differ only by
  // log|det S| = 1/2 log det K.
  const double log2pi = std::log(2 * std::numbers::pi);
  const Kerneld k{icr::KernelFamily::Matern32, 1.3, 0.8};
  const auto m = icr::build_model(k, Chartd::affine(0.4, 0.0), make_spec(7, 0));
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  Eigen::VectorXd y(m.output_size());
  for (auto& e : y) e = normal(rng);
  auto gaussian_ll = [&](const Eigen::VectorXd& s) {
    return -0.5 * (s.size() * log2pi + (y - s).squaredNorm());
  };
  const auto xi = random_latent(m, rng);
  const Eigen::VectorXd s = icr::apply_sqrt(m, xi);
  const Eigen::MatrixXd kicr = icr::implicit_covariance(m);
  const double log_det = 2 * std::log(std::abs(m.sqrtK0.determinant()));
  const double dense =
      gaussian_ll(s) + icr::exact_log_prob<double>(kicr, s).value + 0.5 * log_det;
  CHECK(icr::standardized_log_prob(m, xi, gaussian_ll) ==
        doctest::Approx(dense).epsilon(1e-10));
  CHECK(std::abs(icr::standardized_log_prob(m, xi, gaussian_ll) - dense) <= 1e-8);
}

namespace {
double normal_quantile(double u) {
  double lo = -40, hi = 40;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (icr::normal_cdf(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}
}  // namespace

TEST_CASE("inverse transform sampling") {
  CHECK(std::abs(icr::inverse_transform(0.0, normal_quantile)) < 1e-12);
  auto exponential = [](double u) { return -std::log1p(-u); };
  CHECK(icr::inverse_transform(0.0, exponential) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  double prev = -1;
  for (double x = -8; x <= 8; x += 0.01) {
    const double v = icr::inverse_transform(x, exponential);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(std::isfinite(icr::inverse_transform(60.0, exponential)));
  CHECK(icr::inverse_transform(-60.0, exponential) > 0);
}

TEST_CASE("predicted cost") {
  CHECK(icr::predicted_cost(make_spec(5, 1)) == 33);
  CHECK(icr::predicted_cost(make_spec(5, 0)) == 15);
  // 3*5 + 6*3 + 6*4 = 57: level 1 has 6 pixels, i.e. 4 windows at level 2
  CHECK(icr::predicted_cost(make_spec(5, 2)) == 57);
  double prev_ratio = 0;
  for (int l = 4; l < 16; ++l) {
    const double ratio = double(icr::predicted_cost(make_spec(10, l + 1))) /
                         double(icr::predicted_cost(make_spec(10, l)));
    CHECK(ratio > prev_ratio);
    prev_ratio = ratio;
  }
  CHECK(prev_ratio == doctest::Approx(2.0).epsilon(1e-3));
  // (5,4) with extend: 5*13 + 5*(16+20) + 8*36 + ...
  auto g = make_spec(13, 1, 5, 4, FineStrategy::Extend);
  CHECK(icr::predicted_cost(g) == 5 * 13 + 5 * (4 * 5 + 4 * 4));
}
