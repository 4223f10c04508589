#pragma once

#include "hklin/measure.hpp"
#include "hklin/solver.hpp"
#include "hklin/tangent.hpp"

namespace hklin {

/// One point of a Dirac-to-Dirac geodesic: position X(t), mass M(t) and the
/// traversed angle phi(t) in [0, ||x0 - x1||].
struct DiracGeodesicEval {
  Point position;
  double mass = 0.0;
  double angle = 0.0;
};

/// Closed-form constant speed geodesic between weighted Diracs closer than
/// pi/2. Boundary conventions: t = 0 gives (x0, m0, 0), t = 1 gives
/// (x1, m1, d); a vanishing endpoint mass pins the angle to that endpoint.
DiracGeodesicEval dirac_geodesic(const Point& x0, double m0, const Point& x1, double m1,
                                 double t);

/// Constant speed interpolation of the measures underlying `pi`, pushing each
/// coupling atom along its Dirac geodesic with the decomposition densities,
/// plus the teleport parts (1-t)^2 mu0_perp and t^2 mu1_perp in place.
/// Returns a point cloud; rasterize explicitly for images.
DiscreteMeasure interpolate_hk(const Coupling& pi, const LebesgueDecomposition& decomp,
                               double t);

/// W2 displacement interpolation: atoms move to (1-t) x0 + t x1, masses fixed.
DiscreteMeasure interpolate_w2(const Coupling& pi, double t);

}  // namespace hklin
