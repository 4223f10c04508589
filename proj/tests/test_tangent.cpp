#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "hklin/cost.hpp"
#include "hklin/geodesic.hpp"
#include "hklin/solver.hpp"
#include "hklin/tangent.hpp"
#include "test_support.hpp"

using namespace hklin;
using namespace hklin::testing;

namespace {

SolverConfig fine() {
  SolverConfig cfg;
  cfg.epsilon_final = 1e-5;
  return cfg;
}

Coupling manual_coupling(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                         const Eigen::MatrixXd& weights) {
  Coupling pi;
  pi.weights = weights;
  pi.row_marginal = DiscreteMeasure(mu0.points(), weights.rowwise().sum(), mu0.domain_box());
  pi.col_marginal =
      DiscreteMeasure(mu1.points(), weights.colwise().sum().transpose(), mu1.domain_box());
  pi.converged = true;
  return pi;
}

TangentField zero_field(const DiscreteMeasure& mu0) {
  TangentField tf;
  tf.v0 = Eigen::MatrixXd::Zero(mu0.size(), mu0.dim());
  tf.alpha0 = Eigen::VectorXd::Zero(mu0.size());
  tf.mu1_perp = DiscreteMeasure(mu0.dim());
  return tf;
}

}  // namespace

TEST_CASE("barycentric_project: deterministic coupling hits the target") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  DiscreteMeasure mu1 = dirac(0.4, 0.2, 1.0);
  Eigen::MatrixXd w(1, 1);
  w << 0.9;
  LebesgueDecomposition d = barycentric_project(manual_coupling(mu0, mu1, w), mu0, mu1);
  CHECK((d.transport_map.row(0).transpose() - mu1.point(0)).norm() < 1e-15);
  CHECK(d.u0[0] == doctest::Approx(1.0 / 0.9));
  CHECK(d.mu0_perp.total_mass() == 0.0);
  CHECK(d.mu1_perp.total_mass() == 0.0);
}

TEST_CASE("barycentric_project: empty plan sends everything singular") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.5);
  DiscreteMeasure mu1 = dirac(3, 0, 0.5);
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, 1);
  LebesgueDecomposition d = barycentric_project(manual_coupling(mu0, mu1, w), mu0, mu1);
  CHECK(d.sigma.total_mass() == 0.0);
  CHECK(d.mu0_perp.mass(0) == doctest::Approx(1.5));
  CHECK(d.mu1_perp.mass(0) == doctest::Approx(0.5));
}

TEST_CASE("barycentric_project: split row averages the targets") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  Eigen::MatrixXd P(2, 2);
  P << 0.2, 0.0, 0.0, 0.4;
  DiscreteMeasure mu1(P, Eigen::VectorXd::Ones(2));
  Eigen::MatrixXd w(1, 2);
  w << 0.5, 0.5;
  LebesgueDecomposition d = barycentric_project(manual_coupling(mu0, mu1, w), mu0, mu1);
  CHECK((d.transport_map.row(0) - Eigen::RowVector2d(0.1, 0.2)).norm() < 1e-15);
  // u1 = mu1/nu1 = 1/0.5 on both targets, so the disintegration average is 2
  CHECK(d.u1_of_T[0] == doctest::Approx(2.0));
}

TEST_CASE("barycentric_project: rejects inconsistent couplings") {
  DiscreteMeasure mu0 = dirac(0, 0, 1e-9);
  DiscreteMeasure mu1 = dirac(0.1, 0, 1.0);
  Eigen::MatrixXd w(1, 1);
  w << 1.0;  // row mass 1e9 times mu0
  CHECK_THROWS_AS(barycentric_project(manual_coupling(mu0, mu1, w), mu0, mu1),
                  std::invalid_argument);
}

TEST_CASE("hk_log: at the base point everything vanishes") {
  std::mt19937_64 rng(2);
  DiscreteMeasure mu0 = random_grid_measure(rng, 4, 0.2, 0.5, 1.5);
  Coupling pi = solve_hk(mu0, mu0, fine());
  LebesgueDecomposition d = barycentric_project(pi, mu0, mu0);
  TangentField tf = hk_log(mu0, mu0, d);
  CHECK(tf.v0.cwiseAbs().maxCoeff() < 2e-3);
  CHECK(tf.alpha0.cwiseAbs().maxCoeff() < 2e-3);
  CHECK(tf.mu1_perp.total_mass() == 0.0);
}

TEST_CASE("hk_log: Dirac pair gives sin/cos formulas") {
  const double theta = 0.7;
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  DiscreteMeasure mu1 = dirac(theta, 0, 1.0);
  auto [pi, value] = brute_force_hk(mu0, mu1);
  LebesgueDecomposition d = barycentric_project(pi, mu0, mu1);
  TangentField tf = hk_log(mu0, mu1, d);
  CHECK(tf.v0(0, 0) == doctest::Approx(0.644217687237691).epsilon(1e-6));   // sin(0.7)
  CHECK(tf.v0(0, 1) == doctest::Approx(0.0));
  CHECK(tf.alpha0[0] == doctest::Approx(-0.470315625431023).epsilon(1e-6));  // 2(cos-1)
  // exact tangent identity for Diracs
  CHECK(hk_inner(mu0, tf, tf) == doctest::Approx(value).epsilon(1e-9));
}

TEST_CASE("hk_log: pure growth has alpha = 2") {
  DiscreteMeasure mu0 = dirac(0.3, 0.3, 1.0);
  DiscreteMeasure mu1 = dirac(0.3, 0.3, 4.0);
  auto [pi, value] = brute_force_hk(mu0, mu1);
  LebesgueDecomposition d = barycentric_project(pi, mu0, mu1);
  TangentField tf = hk_log(mu0, mu1, d);
  CHECK(tf.v0.cwiseAbs().maxCoeff() == 0.0);
  CHECK(tf.alpha0[0] == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("hk_log invariants: alpha >= -2 with equality exactly on mu0_perp") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    DiscreteMeasure mu0 = random_cloud(rng, 3, 0.0, 1.0, 0.2, 1.5);
    DiscreteMeasure mu1 = random_cloud(rng, 3, 0.0, 2.2, 0.2, 1.5);
    Coupling pi = solve_hk(mu0, mu1, fine());
    LebesgueDecomposition d = barycentric_project(pi, mu0, mu1);
    TangentField tf = hk_log(mu0, mu1, d);
    for (int i = 0; i < mu0.size(); ++i) {
      CHECK(tf.alpha0[i] >= -2.0);
      if (d.mu0_perp.mass(i) > 0.0) {
        CHECK(tf.alpha0[i] == -2.0);
        CHECK(tf.v0.row(i).norm() == 0.0);
      }
      if (d.sigma.mass(i) > 0.0) {
        double bound = std::sqrt(d.u1_of_T[i] / d.u0[i]);
        CHECK(tf.v0.row(i).norm() <= bound + 1e-12);
      }
    }
  }
}

TEST_CASE("hk_exp: zero field is the identity, pure growth quadruples") {
  std::mt19937_64 rng(3);
  DiscreteMeasure mu0 = random_cloud(rng, 5, 0.0, 1.0, 0.2, 1.5);
  DiscreteMeasure same = hk_exp(mu0, zero_field(mu0));
  CHECK((same.points() - mu0.points()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((same.masses() - mu0.masses()).cwiseAbs().maxCoeff() == 0.0);

  TangentField growth = zero_field(mu0);
  growth.alpha0.setConstant(2.0);
  DiscreteMeasure four = hk_exp(mu0, growth);
  CHECK((four.masses() - 4.0 * mu0.masses()).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((four.points() - mu0.points()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hk_exp: domain errors") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  TangentField tf = zero_field(mu0);
  tf.alpha0[0] = -2.5;
  CHECK_THROWS_AS(hk_exp(mu0, tf), std::domain_error);
}

TEST_CASE("hk_exp inverts hk_log up to projection bias") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 3; ++rep) {
    auto [mu0, mu1] = smooth_deformation_instance(rng, 5, 0.3);
    Coupling pi = solve_hk(mu0, mu1, fine());
    LebesgueDecomposition d = barycentric_project(pi, mu0, mu1);
    TangentField tf = hk_log(mu0, mu1, d);
    DiscreteMeasure back = hk_exp(mu0, tf);
    double hk = std::sqrt(pi.objective_value);
    double err = std::sqrt(solve_hk(back, mu1, fine()).objective_value);
    CHECK(err <= 0.05 * hk + 2e-2);
  }
}

TEST_CASE("hk_inner: tangent identity on a wide-support grid instance") {
  std::mt19937_64 rng(13);
  auto [mu0, mu1] = smooth_deformation_instance(rng, 6, 0.3);
  Coupling pi = solve_hk(mu0, mu1, fine());
  LebesgueDecomposition d = barycentric_project(pi, mu0, mu1);
  TangentField tf = hk_log(mu0, mu1, d);
  CHECK(tf.mu1_perp.total_mass() == 0.0);  // wide support regime
  double g = hk_inner(mu0, tf, tf);
  CHECK(std::abs(g - pi.objective_value) <= 0.02 * pi.objective_value + 1e-3);
  // norm form agrees with the inner product against the zero field
  double lin = hk_lin_dist(mu0, tf, zero_field(mu0));
  CHECK(lin * lin == doctest::Approx(g).epsilon(1e-9));
}

TEST_CASE("hk_inner: singular pairing matches by coordinates") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  TangentField a = zero_field(mu0);
  TangentField b = zero_field(mu0);
  a.mu1_perp = dirac(5, 5, 4.0);
  b.mu1_perp = dirac(5, 5, 1.0);
  CHECK(hk_inner(mu0, a, b) == doctest::Approx(2.0));  // sqrt(4*1)

  b.mu1_perp = dirac(6, 5, 1.0);
  CHECK(hk_inner(mu0, a, b) == 0.0);  // disjoint supports

  // Hellinger term in the linearized distance over the union support
  double dist = hk_lin_dist(mu0, a, b);
  CHECK(dist * dist == doctest::Approx(4.0 + 1.0));

  CHECK(hk_inner(mu0, a, zero_field(mu0)) == 0.0);
}

TEST_CASE("hk_inner: bilinearity and Cauchy-Schwarz on random fields") {
  std::mt19937_64 rng(23);
  DiscreteMeasure mu0 = random_cloud(rng, 6, 0.0, 1.0, 0.2, 1.5);
  std::uniform_real_distribution<double> val(-1.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    TangentField t1 = zero_field(mu0), t2 = zero_field(mu0);
    for (int i = 0; i < mu0.size(); ++i) {
      t1.v0(i, 0) = val(rng);
      t1.v0(i, 1) = val(rng);
      t2.v0(i, 0) = val(rng);
      t2.v0(i, 1) = val(rng);
      t1.alpha0[i] = val(rng);
      t2.alpha0[i] = val(rng);
    }
    t1.mu1_perp = dirac(4, 4, std::abs(val(rng)));
    t2.mu1_perp = dirac(4, 4, std::abs(val(rng)));
    double g12 = hk_inner(mu0, t1, t2);
    double g11 = hk_inner(mu0, t1, t1);
    double g22 = hk_inner(mu0, t2, t2);
    CHECK(g11 >= 0.0);
    CHECK(std::abs(g12) <= std::sqrt(g11 * g22) + 1e-12);
  }
}

TEST_CASE("hk_lin_dist: metric basics") {
  std::mt19937_64 rng(31);
  auto [mu0, mu1] = smooth_deformation_instance(rng, 4, 0.3);
  Coupling pi = solve_hk(mu0, mu1, fine());
  TangentField tf = hk_log(mu0, mu1, barycentric_project(pi, mu0, mu1));
  CHECK(hk_lin_dist(mu0, tf, tf) == 0.0);
  CHECK(hk_lin_dist(mu0, tf, zero_field(mu0)) ==
        doctest::Approx(hk_lin_dist(mu0, zero_field(mu0), tf)));
  // recovers HK(mu0, mu1) against the zero field
  CHECK(hk_lin_dist(mu0, tf, zero_field(mu0)) ==
        doctest::Approx(std::sqrt(pi.objective_value)).epsilon(0.02));
}

TEST_CASE("scale_tangent: square-root semantics on the singular part") {
  DiscreteMeasure mu0 = dirac(0, 0, 1.0);
  TangentField tf = zero_field(mu0);
  tf.v0(0, 0) = 0.4;
  tf.alpha0[0] = -0.6;
  tf.mu1_perp = dirac(4, 4, 2.0);
  TangentField half = scale_tangent(tf, 0.5);
  CHECK(half.v0(0, 0) == doctest::Approx(0.2));
  CHECK(half.alpha0[0] == doctest::Approx(-0.3));
  CHECK(half.mu1_perp.mass(0) == doctest::Approx(0.5));  // tau^2 * mass
  // g-norm scales linearly
  CHECK(std::sqrt(hk_inner(mu0, half, half)) ==
        doctest::Approx(0.5 * std::sqrt(hk_inner(mu0, tf, tf))).epsilon(1e-12));
}

TEST_CASE("w2 log/exp/lin: basics and roundtrip") {
  SolverConfig cfg;
  cfg.epsilon_final = 1e-5;
  std::mt19937_64 rng(37);
  DiscreteMeasure mu0 = normalize(random_cloud(rng, 3, 0.0, 1.0, 1.0, 1.0));

  Coupling self = solve_w2(mu0, mu0, cfg);
  W2TangentField vzero = w2_log(mu0, mu0, self);
  CHECK(vzero.v0.cwiseAbs().maxCoeff() < 1e-3);

  DiscreteMeasure a = dirac(0, 0, 1.0);
  DiscreteMeasure b = dirac(0.8, -0.6, 1.0);
  Coupling pi = solve_w2(a, b, cfg);
  W2TangentField v = w2_log(a, b, pi);
  CHECK((v.v0.row(0).transpose() - (b.point(0) - a.point(0))).norm() < 1e-9);
  W2TangentField z;
  z.v0 = Eigen::MatrixXd::Zero(1, 2);
  CHECK(w2_lin_dist(a, v, z) == doctest::Approx(1.0));  // |x1-x0| = 1

  // roundtrip on a 3-point instance with a unique Monge plan
  Eigen::MatrixXd P(3, 2);
  P << 0, 0, 1, 0, 2, 0;
  DiscreteMeasure src(P, Eigen::VectorXd::Constant(3, 1.0 / 3));
  Eigen::MatrixXd Q = P;
  Q.col(0).array() += 0.1;
  Q.col(1).array() += 0.05;
  DiscreteMeasure dst(Q, Eigen::VectorXd::Constant(3, 1.0 / 3));
  Coupling pm = solve_w2(src, dst, cfg);
  DiscreteMeasure back = w2_exp(src, w2_log(src, dst, pm));
  double residual = std::sqrt(solve_w2(normalize(back), normalize(dst), cfg).objective_value);
  CHECK(residual < 1e-2);
}

TEST_CASE("tangent field serialization roundtrips") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "hklin_tangent_tests";
  fs::create_directories(dir);

  std::mt19937_64 rng(41);
  DiscreteMeasure mu0 = random_cloud(rng, 4, 0.0, 1.0, 0.2, 1.5);
  TangentField tf = zero_field(mu0);
  tf.v0.setRandom();
  tf.alpha0.setRandom();
  tf.mu1_perp = dirac(3, 3, 0.7);

  std::string fields = (dir / "tf.csv").string();
  std::string perp = (dir / "tf.perp.csv").string();
  save_tangent_field(tf, mu0, fields, perp);
  auto [mu_back, tf_back] = load_tangent_field(fields, perp);
  CHECK((mu_back.points() - mu0.points()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mu_back.masses() - mu0.masses()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tf_back.v0 - tf.v0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((tf_back.alpha0 - tf.alpha0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(tf_back.mu1_perp.mass(0) == 0.7);

  // empty singular part roundtrips to an empty measure
  TangentField flat = zero_field(mu0);
  save_tangent_field(flat, mu0, fields, perp);
  auto [mu2, tf2] = load_tangent_field(fields, perp);
  CHECK(tf2.mu1_perp.size() == 0);
}
