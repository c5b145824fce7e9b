#include <cmath>
#include <random>
#include <string>

#include "doctest.h"
#include "icr/charts.hpp"

using icr::Chartd;
using icr::FineStrategy;
using icr::Kerneld;
using icr::RefinementSpecd;

namespace {

RefinementSpecd make_spec(int n0, int n_lvl, int csz, int fsz,
                          FineStrategy strategy = FineStrategy::Jump) {
  RefinementSpecd s;
  s.n0 = n0;
  s.n_lvl = n_lvl;
  s.n_csz = csz;
  s.n_fsz = fsz;
  s.strategy = strategy;
  return s;
}

Eigen::VectorXd gaps(const Eigen::VectorXd& x) {
  return x.tail(x.size() - 1) - x.head(x.size() - 1);
}

}  // namespace

TEST_CASE("charted kernel examples") {
  const Kerneld k{icr::KernelFamily::Matern32, 1.0, 1.7};
  const auto id = icr::charted_kernel(k, Chartd::identity());
  CHECK(id(0.4, 0.4) == 1.7);
  CHECK(id(0.0, 1.0) == icr::evaluate(k, 1.0));

  // phi^-1(0) = 1, phi^-1(1) = 2
  const auto lg = icr::charted_kernel(k, Chartd::log_spaced(1.0, std::log(2.0)));
  CHECK(lg(0.0, 1.0) == doctest::Approx(icr::evaluate(k, 1.0)).epsilon(1e-14));
}

TEST_CASE("chart overflow is a numeric error") {
  const auto lg = icr::charted_kernel(Kerneld{}, Chartd::log_spaced(1.0, 1.0));
  CHECK_THROWS_AS(lg(0.0, 1e6), icr::NumericError);
}

TEST_CASE("invalid charts are rejected") {
  CHECK_THROWS_AS(icr::charted_kernel(Kerneld{}, Chartd::affine(0.0, 1.0)),
                  icr::InputError);
  CHECK_THROWS_AS(icr::charted_kernel(Kerneld{}, Chartd::log_spaced(-1.0, 1.0)),
                  icr::InputError);
}

TEST_CASE("identity chart matches plain kernel on differences") {
  const Kerneld k{icr::KernelFamily::Matern32, 0.8, 1.0};
  const auto ck = icr::charted_kernel(k, Chartd::identity());
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), b = u(rng);
    CHECK(ck(a, b) == k(std::abs(a - b)));
  }
}

TEST_CASE("hierarchy examples") {
  const auto h1 = icr::build_hierarchy(make_spec(3, 1, 3, 2));
  REQUIRE(h1.levels[1].size() == 2);
  CHECK(h1.levels[1](0) == 0.75);
  CHECK(h1.levels[1](1) == 1.25);

  const auto h2 = icr::build_hierarchy(make_spec(12, 2, 3, 2));
  CHECK(h2.sizes() == std::vector<Eigen::Index>{12, 20, 36});

  const auto h3 = icr::build_hierarchy(make_spec(10, 1, 5, 4));
  CHECK(h3.size(1) == 24);

  const auto h4 = icr::build_hierarchy(make_spec(10, 1, 5, 4, FineStrategy::Extend));
  CHECK(h4.size(1) == 12);
  // Each fine pixel is half a coarse pixel and the blocks abut.
  CHECK(h4.levels[1](0) == 1.25);
  CHECK(gaps(h4.levels[1]).isConstant(0.5, 1e-15));
}

TEST_CASE("hierarchy errors name the offending level") {
  try {
    icr::build_hierarchy(make_spec(5, 3, 3, 2));  // 5 -> 6 -> 8 -> 12 fine
  } catch (...) {
    FAIL("valid hierarchy rejected");
  }
  // 4 -> 4 -> 4 is fine for (3,2); (5,2) from 6 gives 4 < 5 at level 1.
  try {
    icr::build_hierarchy(make_spec(6, 2, 5, 2));
    FAIL("expected SpecError");
  } catch (const icr::SpecError& e) {
    CHECK(std::string(e.what()).find("level 1") != std::string::npos);
  }
  CHECK_THROWS_AS(icr::build_hierarchy(make_spec(2, 1, 3, 2)), icr::SpecError);
  CHECK_THROWS_AS(icr::build_hierarchy(make_spec(9, 1, 4, 2)), icr::SpecError);
  CHECK_THROWS_AS(icr::build_hierarchy(make_spec(9, 1, 3, 3, FineStrategy::Extend)),
                  icr::SpecError);
}

TEST_CASE("hierarchy invariants across shapes and charts") {
  const std::vector<std::pair<int, int>> shapes{{3, 2}, {3, 4}, {5, 2}, {5, 4},
                                                {5, 6}, {3, 1}, {7, 3}};
  const std::vector<Chartd> charts{Chartd::identity(), Chartd::affine(-2.0, 1.0),
                                   Chartd::log_spaced(0.1, 0.3)};
  for (auto strategy : {FineStrategy::Jump, FineStrategy::Extend}) {
    for (auto [csz, fsz] : shapes) {
      if (strategy == FineStrategy::Extend && fsz % 2) continue;
      for (int n0 = csz + 6; n0 < csz + 12; ++n0) {
        const auto spec = make_spec(n0, 3, csz, fsz, strategy);
        const auto h = icr::build_hierarchy(spec);
        for (int l = 0; l <= h.depth(); ++l) {
          const auto& x = h.levels[l];
          // regular, strictly increasing Euclidean coordinates
          if (x.size() > 1) {
            CHECK(gaps(x).minCoeff() > 0);
            CHECK(gaps(x).isConstant(h.spacing[l], 1e-12));
          }
          if (l > 0 && strategy == FineStrategy::Jump)
            CHECK(h.size(l) == fsz * (h.size(l - 1) - csz + 1));
          for (const auto& c : charts) {
            const auto y = c.map(x);
            if (y.size() > 1) {
              const auto g = gaps(y);
              const bool increasing = g.minCoeff() > 0;
              const bool decreasing = g.maxCoeff() < 0;
              CHECK((increasing || decreasing));
            }
          }
        }
      }
    }
  }
}

TEST_CASE("target size resolution") {
  const auto r = icr::resolve_target_size(200, 5, 5, 4, FineStrategy::Extend,
                                          icr::SizePolicy::Exact);
  CHECK(r.n0 == 13);
  CHECK(r.final_size == 200);

  try {
    icr::resolve_target_size(200, 5, 3, 2, FineStrategy::Jump,
                             icr::SizePolicy::Exact);
    FAIL("expected unreachable size");
  } catch (const icr::SpecError& e) {
    // (3,2) over five levels: 10 -> 196 and 11 -> 228
    const std::string msg = e.what();
    CHECK(msg.find("196") != std::string::npos);
    CHECK(msg.find("228") != std::string::npos);
  }

  const auto c = icr::resolve_target_size(200, 5, 3, 2, FineStrategy::Jump,
                                          icr::SizePolicy::Crop);
  CHECK(c.n0 == 11);
  CHECK(c.final_size == 228);
  CHECK(c.output_offset == 14);

  auto spec = make_spec(c.n0, 5, 3, 2);
  spec.output_size = 200;
  const auto h = icr::build_hierarchy(spec);
  CHECK(h.output_offset == 14);
  CHECK(h.output_coords().size() == 200);
}

TEST_CASE("log chart for the accuracy experiment") {
  auto spec = make_spec(13, 5, 5, 4, FineStrategy::Extend);
  const auto h = icr::build_hierarchy(spec);
  REQUIRE(h.final_level().size() == 200);
  const double rho0 = 1.0;
  const auto chart = icr::log_chart_for_experiment(h, 50.0, rho0);
  const Eigen::VectorXd g = gaps(chart.map(h.output_coords()));
  CHECK(g.maxCoeff() / g.minCoeff() == doctest::Approx(50.0).epsilon(1e-6 / 50));
  CHECK(std::abs(g.maxCoeff() - rho0) <= 1e-9);

  // Anchored on the central crop of a larger level.
  auto cropped = make_spec(11, 5, 3, 2);
  cropped.output_size = 200;
  const auto hc = icr::build_hierarchy(cropped);
  const auto cc = icr::log_chart_for_experiment(hc, 50.0, 2.5);
  const Eigen::VectorXd gc = gaps(cc.map(hc.output_coords()));
  CHECK(gc.maxCoeff() / gc.minCoeff() == doctest::Approx(50.0));
  CHECK(std::abs(gc.maxCoeff() - 2.5) <= 1e-9);
}

TEST_CASE("log chart with two points has a single gap of rho0") {
  const auto chart = icr::log_chart_for_grid(0.0, 1.0, 2, 50.0, 0.7);
  CHECK(std::abs(chart(1.0) - chart(0.0) - 0.7) < 1e-12);
  CHECK_THROWS_AS(icr::log_chart_for_grid(0.0, 1.0, 1, 50.0, 1.0),
                  icr::InputError);
}
