#pragma once

#include <utility>

#include "hklin/cost.hpp"
#include "hklin/measure.hpp"

namespace hklin {

struct SolverConfig {
  /// Starting regularization; 0 picks the mean squared support diameter.
  double epsilon_start = 0.0;
  double epsilon_final = 1e-4;
  double epsilon_decay = 0.5;
  int max_iters_per_eps = 5000;
  /// Stop an epsilon stage once successive dual potentials move less than
  /// this in sup-norm.
  double tol_marginal = 1e-7;
  /// Enables kernel absorption of large scalings (log-domain stabilization).
  bool log_domain = true;

  void validate() const;
};

/// Flat key=value file with exactly the keys epsilon_start, epsilon_final,
/// epsilon_decay, max_iters_per_eps, tol_marginal, log_domain.
SolverConfig parse_solver_config(const std::string& path);

/// Transport plan between two supports together with its marginals.
struct Coupling {
  Eigen::MatrixXd weights;       // |supp mu0| x |supp mu1|, >= 0
  DiscreteMeasure row_marginal;  // P0# pi on supp mu0
  DiscreteMeasure col_marginal;  // P1# pi on supp mu1
  double objective_value = 0.0;
  bool converged = false;
};

inline double soft_marginal_objective(const Coupling& pi, const DiscreteMeasure& mu0,
                                      const DiscreteMeasure& mu1) {
  return soft_marginal_objective(pi.weights, mu0, mu1);
}

/// Entropic unbalanced Sinkhorn for the soft-marginal HK problem at unit
/// length scale (rescale domains first for kappa != 1). The reported
/// objective is the unregularized soft-marginal value of the returned plan.
Coupling solve_hk(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                  const SolverConfig& cfg);

/// Balanced entropic Sinkhorn for W2^2; requires equal total masses within
/// 1e-9. The returned plan is rounded to the exact marginals.
Coupling solve_w2(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                  const SolverConfig& cfg);

/// Exact minimizer of the soft-marginal objective on tiny supports
/// (|supp mu0| * |supp mu1| <= 9); test oracle for solve_hk.
std::pair<Coupling, double> brute_force_hk(const DiscreteMeasure& mu0,
                                           const DiscreteMeasure& mu1);

/// HK_kappa(mu0, mu1)^2 = kappa^2 * HK_1(mu0/kappa, mu1/kappa)^2.
double hk_kappa_sq(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1, double kappa,
                   const SolverConfig& cfg);

}  // namespace hklin
