#include <doctest.h>

#include <cmath>
#include <random>

#include "hklin/cost.hpp"
#include "hklin/geodesic.hpp"
#include "hklin/solver.hpp"
#include "hklin/tangent.hpp"
#include "test_support.hpp"

using namespace hklin;
using namespace hklin::testing;

TEST_CASE("dirac_geodesic: stationary point") {
  for (double t : {0.0, 0.3, 0.77, 1.0}) {
    DiracGeodesicEval ev = dirac_geodesic(pt(1, 2), 1.0, pt(1, 2), 1.0, t);
    CHECK(ev.mass == doctest::Approx(1.0));
    CHECK((ev.position - pt(1, 2)).norm() == 0.0);
  }
}

TEST_CASE("dirac_geodesic: midpoint mass and boundary conventions") {
  for (double theta : {0.3, 1.0}) {
    DiracGeodesicEval ev = dirac_geodesic(pt(0, 0), 1.0, pt(theta, 0), 1.0, 0.5);
    CHECK(ev.mass == doctest::Approx((1.0 + std::cos(theta)) / 2.0).epsilon(1e-12));
    CHECK(ev.angle == doctest::Approx(theta / 2.0).epsilon(1e-12));  // symmetric masses
  }
  DiracGeodesicEval at0 = dirac_geodesic(pt(0, 0), 0.4, pt(1, 0), 0.9, 0.0);
  CHECK(at0.mass == 0.4);
  CHECK(at0.angle == 0.0);
  CHECK((at0.position - pt(0, 0)).norm() == 0.0);
  DiracGeodesicEval at1 = dirac_geodesic(pt(0, 0), 0.4, pt(1, 0), 0.9, 1.0);
  CHECK(at1.mass == 0.9);
  CHECK(at1.angle == doctest::Approx(1.0));
  CHECK((at1.position - pt(1, 0)).norm() == 0.0);
}

TEST_CASE("dirac_geodesic: vanishing endpoint branches") {
  DiracGeodesicEval destroy = dirac_geodesic(pt(0, 0), 2.0, pt(1, 0), 0.0, 0.25);
  CHECK(destroy.angle == 0.0);
  CHECK(destroy.mass == doctest::Approx(0.75 * 0.75 * 2.0));
  CHECK((destroy.position - pt(0, 0)).norm() == 0.0);

  DiracGeodesicEval create = dirac_geodesic(pt(0, 0), 0.0, pt(1, 0), 2.0, 0.25);
  CHECK(create.angle == doctest::Approx(1.0));
  CHECK(create.mass == doctest::Approx(0.25 * 0.25 * 2.0));
  CHECK((create.position - pt(1, 0)).norm() == 0.0);
}

TEST_CASE("dirac_geodesic: errors") {
  CHECK_THROWS_AS(dirac_geodesic(pt(0, 0), 1.0, pt(M_PI_2, 0), 1.0, 0.5), std::domain_error);
  CHECK_THROWS_AS(dirac_geodesic(pt(0, 0), -1.0, pt(0.5, 0), 1.0, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(dirac_geodesic(pt(0, 0), 1.0, pt(0.5, 0), 1.0, 1.5), std::invalid_argument);
}

TEST_CASE("dirac_geodesic: mass identity M = (1-t)m0 + t m1 - t(1-t) HK^2") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coord(-0.5, 0.5);
  std::uniform_real_distribution<double> mass(0.0, 3.0);
  std::uniform_real_distribution<double> time(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    Point a = pt(coord(rng), coord(rng)), b = pt(coord(rng), coord(rng));
    double m0 = mass(rng), m1 = mass(rng), t = time(rng);
    DiracGeodesicEval ev = dirac_geodesic(a, m0, b, m1, t);
    double expected = (1 - t) * m0 + t * m1 - t * (1 - t) * hk_dirac_sq(a, m0, b, m1);
    CHECK(ev.mass == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("dirac_geodesic: zero-time derivatives by finite differences") {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> coord(-0.5, 0.5);
  std::uniform_real_distribution<double> mass(0.3, 2.5);
  const double h = 1e-6;
  for (int rep = 0; rep < 30; ++rep) {
    Point a = pt(coord(rng), coord(rng)), b = pt(coord(rng), coord(rng));
    double m0 = mass(rng), m1 = mass(rng);
    double d = (a - b).norm();
    if (d < 1e-3) continue;
    DiracGeodesicEval e0 = dirac_geodesic(a, m0, b, m1, 0.0);
    DiracGeodesicEval eh = dirac_geodesic(a, m0, b, m1, h);
    Eigen::VectorXd xdot = (eh.position - e0.position) / h;
    Eigen::VectorXd expected_dir = (b - a) / d;
    double expected_speed = std::sqrt(m1 / m0) * std::sin(d);
    CHECK((xdot - expected_dir * expected_speed).norm() < 1e-4 * std::max(1.0, expected_speed));
    double growth = (eh.mass - e0.mass) / (h * e0.mass);
    double expected_growth = 2.0 * (std::sqrt(m1 / m0) * std::cos(d) - 1.0);
    CHECK(growth == doctest::Approx(expected_growth).epsilon(1e-4));
  }
}

namespace {

// exact coupling + decomposition for tiny instances
std::pair<Coupling, LebesgueDecomposition> oracle_transport(const DiscreteMeasure& mu0,
                                                            const DiscreteMeasure& mu1) {
  auto [pi, value] = brute_force_hk(mu0, mu1);
  return {pi, barycentric_project(pi, mu0, mu1)};
}

DiscreteMeasure merged(const DiscreteMeasure& m) {
  // align_union accumulates duplicate atoms; pairing m with itself merges it
  return align_union(m, m).first;
}

}  // namespace

TEST_CASE("interpolate_hk: endpoints recover the inputs for oracle couplings") {
  std::mt19937_64 rng(4);
  DiscreteMeasure mu0 = random_cloud(rng, 3, 0.0, 0.8, 0.3, 1.2);
  DiscreteMeasure mu1 = random_cloud(rng, 3, 0.0, 0.8, 0.3, 1.2);
  auto [pi, decomp] = oracle_transport(mu0, mu1);

  DiscreteMeasure rho0 = merged(interpolate_hk(pi, decomp, 0.0));
  auto [a0, b0] = align_union(rho0, mu0);
  CHECK((a0.masses() - b0.masses()).cwiseAbs().maxCoeff() < 1e-6);

  DiscreteMeasure rho1 = merged(interpolate_hk(pi, decomp, 1.0));
  auto [a1, b1] = align_union(rho1, mu1);
  CHECK((a1.masses() - b1.masses()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("interpolate_hk: single pair reduces to the Dirac geodesic") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.3);
  DiscreteMeasure mu1 = dirac(0.8, 0.1, 0.6);
  auto [pi, decomp] = oracle_transport(mu0, mu1);
  for (double t : {0.25, 0.5, 0.75}) {
    DiscreteMeasure rho = interpolate_hk(pi, decomp, t);
    REQUIRE(rho.size() == 1);
    DiracGeodesicEval ev = dirac_geodesic(mu0.point(0), 1.3, mu1.point(0), 0.6, t);
    CHECK(rho.mass(0) == doctest::Approx(ev.mass).epsilon(1e-6));
    CHECK((rho.point(0) - ev.position).norm() < 1e-6);
  }
}

TEST_CASE("interpolate_hk: pure destruction when nothing is reachable") {
  DiscreteMeasure mu0 = dirac(0, 0, 2.0);
  DiscreteMeasure mu1 = dirac(3, 0, 1.0);  // beyond pi/2
  auto [pi, decomp] = oracle_transport(mu0, mu1);
  DiscreteMeasure rho = interpolate_hk(pi, decomp, 0.5);
  // (1-t)^2 mu0 at x0 plus t^2 mu1 at x1
  REQUIRE(rho.size() == 2);
  auto [a, b] = align_union(rho, mu0);
  CHECK(rho.total_mass() == doctest::Approx(0.25 * 2.0 + 0.25 * 1.0));
  DiscreteMeasure rho1 = interpolate_hk(pi, decomp, 1.0);
  auto [c, d] = align_union(rho1, mu1);
  CHECK((c.masses() - d.masses()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("interpolate_w2: endpoints and midpoint symmetry") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  DiscreteMeasure mu1 = dirac(1, 1, 1.0);
  SolverConfig cfg;
  Coupling pi = solve_w2(mu0, mu1, cfg);
  DiscreteMeasure rho0 = interpolate_w2(pi, 0.0);
  CHECK((rho0.point(0) - mu0.point(0)).norm() < 1e-12);
  DiscreteMeasure mid = interpolate_w2(pi, 0.5);
  REQUIRE(mid.size() == 1);
  CHECK((mid.point(0) - pt(0.5, 0.5)).norm() < 1e-12);
  CHECK(mid.mass(0) == doctest::Approx(1.0));
}

TEST_CASE("interpolate_hk: constant speed on an oracle instance") {
  std::mt19937_64 rng(40);
  SolverConfig cfg;
  cfg.epsilon_final = 1e-5;
  DiscreteMeasure mu0 = random_cloud(rng, 2, 0.0, 0.7, 0.4, 1.2);
  DiscreteMeasure mu1 = random_cloud(rng, 2, 0.0, 0.7, 0.4, 1.2);
  auto [pi, decomp] = oracle_transport(mu0, mu1);
  double hk = std::sqrt(pi.objective_value);
  std::vector<double> ts = {0.0, 0.25, 0.5, 0.75, 1.0};
  for (size_t i = 0; i < ts.size(); ++i) {
    for (size_t j = i + 1; j < ts.size(); ++j) {
      DiscreteMeasure rs = interpolate_hk(pi, decomp, ts[i]);
      DiscreteMeasure rt = interpolate_hk(pi, decomp, ts[j]);
      double dist = std::sqrt(solve_hk(rs, rt, cfg).objective_value);
      CHECK(std::abs(dist - (ts[j] - ts[i]) * hk) <= 2e-2 * hk + 1e-3);
    }
  }
}
