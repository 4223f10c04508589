#pragma once

#include "hklin/measure.hpp"
#include "hklin/solver.hpp"

namespace hklin {

/// Lebesgue decomposition of a measure pair with respect to the marginals of
/// a coupling, reduced to a transport map by barycentric projection.
/// Singular parts are stored on the full respective supports with zero mass
/// where the absolutely continuous part covers.
struct LebesgueDecomposition {
  DiscreteMeasure sigma;          // P0# pi on supp mu0
  Eigen::MatrixXd transport_map;  // row i = T(x_i); meaningful where sigma > 0
  Eigen::VectorXd u0;             // d mu0 / d sigma where sigma > 0
  Eigen::VectorXd u1_of_T;        // disintegration average of u1 along rows
  Eigen::VectorXd u1;             // d mu1_ac / d nu1 on supp mu1 (geodesic use)
  DiscreteMeasure mu0_perp;
  DiscreteMeasure mu1_perp;
};

/// Tangent data at mu0: velocity, relative growth rate, and the singular
/// created mass, carried as a measure with square-root (Hellinger) pairing.
struct TangentField {
  Eigen::MatrixXd v0;      // |supp mu0| x d
  Eigen::VectorXd alpha0;  // >= -2; equals -2 exactly on supp mu0_perp
  DiscreteMeasure mu1_perp;
};

struct W2TangentField {
  Eigen::MatrixXd v0;  // row i = T(x_i) - x_i
};

/// T(x_i) = conditional mean target of row i; u1 along the columns keeps the
/// coverage-thresholded singular split (threshold 0.5: a target whose plan
/// coverage nu1/mu1 falls below it contributes the shortfall to mu1_perp).
LebesgueDecomposition barycentric_project(const Coupling& pi, const DiscreteMeasure& mu0,
                                          const DiscreteMeasure& mu1);

/// Logarithmic map (v0, alpha0, mu1_perp) of mu1 at mu0.
TangentField hk_log(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                    const LebesgueDecomposition& decomp);

/// Exponential map: pushes mu0 along the tangent data; inverse of hk_log up
/// to projection bias. Requires alpha0 >= -2.
DiscreteMeasure hk_exp(const DiscreteMeasure& mu0, const TangentField& tf);

/// Riemannian inner product: L2(mu0) pairing of velocities plus quarter-
/// weighted growth rates plus a Hellinger pairing of the singular parts
/// (matched by point coordinates).
double hk_inner(const DiscreteMeasure& mu0, const TangentField& tf1, const TangentField& tf2);

/// Linearized HK distance between two tangent fields at mu0.
double hk_lin_dist(const DiscreteMeasure& mu0, const TangentField& tf1, const TangentField& tf2);

/// (tau v0, tau alpha0, tau sqrt(mu1_perp)); the square-root scaling acts as
/// tau^2 on the carried measure.
TangentField scale_tangent(const TangentField& tf, double tau);

W2TangentField w2_log(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1, const Coupling& pi);
DiscreteMeasure w2_exp(const DiscreteMeasure& mu0, const W2TangentField& tf);
double w2_lin_dist(const DiscreteMeasure& mu0, const W2TangentField& tf1,
                   const W2TangentField& tf2);

/// CSV with columns x,y,mass,vx,vy,alpha plus a csv_points file for mu1_perp.
void save_tangent_field(const TangentField& tf, const DiscreteMeasure& mu0,
                        const std::string& fields_path, const std::string& perp_path);
std::pair<DiscreteMeasure, TangentField> load_tangent_field(const std::string& fields_path,
                                                            const std::string& perp_path);

}  // namespace hklin
