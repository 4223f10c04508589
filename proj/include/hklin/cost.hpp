#pragma once

#include <limits>

#include "hklin/measure.hpp"

namespace hklin {

inline constexpr double kInfiniteCost = std::numeric_limits<double>::infinity();

/// Transport beyond this distance is impossible at unit length scale.
inline constexpr double kMaxTransportDistance = 1.5707963267948966;  // pi/2

/// Pairwise transport costs; an entry is finite iff the point distance is
/// below pi/2 (a hard truncation at pi/2 - 1e-9 guards the log near the cut).
struct CostMatrix {
  Eigen::MatrixXd values;
};

/// -2 log(cos(d)) for d < pi/2, +infinity beyond.
double hk_cost_from_distance(double distance);
double hk_cost(const Point& x0, const Point& x1);

/// Squared distance between two weighted Diracs:
/// m0 + m1 - 2 sqrt(m0 m1) cos(min(d, pi/2)).
double hk_dirac_sq(const Point& x0, double m0, const Point& x1, double m1);

CostMatrix hk_cost_matrix(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1);

/// KL divergence of mass vectors sharing one support indexing, with the
/// conventions phi(0) = 1 and (nu = 0, mu > 0) -> +infinity.
double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu);
double kl_divergence(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// Squared Hellinger distance sum_i (sqrt(mu_i) - sqrt(nu_i))^2 on a shared
/// support indexing.
double hellinger_sq(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu);
double hellinger_sq(const DiscreteMeasure& mu, const DiscreteMeasure& nu);

/// Re-indexes two point clouds onto their common support union so that
/// pointwise operations (KL, Hellinger) apply. Points match by coordinates.
std::pair<DiscreteMeasure, DiscreteMeasure> align_union(const DiscreteMeasure& a,
                                                        const DiscreteMeasure& b);

/// <C, plan> + KL(row marginal | mu0) + KL(col marginal | mu1) with the HK
/// cost; +infinity if the plan puts mass on a pair at distance >= pi/2.
/// Products 0 * infinity count as 0.
double soft_marginal_objective(const Eigen::MatrixXd& plan, const DiscreteMeasure& mu0,
                               const DiscreteMeasure& mu1);

}  // namespace hklin
