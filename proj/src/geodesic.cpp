#include "hklin/geodesic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace hklin {

namespace {

constexpr double kCutoff = kMaxTransportDistance - 1e-9;

DiscreteMeasure cloud_from(std::vector<Eigen::RowVectorXd>& pts, std::vector<double>& masses,
                           int dim) {
  if (pts.empty()) return DiscreteMeasure(dim);
  Eigen::MatrixXd P(static_cast<Eigen::Index>(pts.size()), dim);
  Eigen::VectorXd M(static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    P.row(static_cast<Eigen::Index>(i)) = pts[i];
    M[static_cast<Eigen::Index>(i)] = masses[i];
  }
  return DiscreteMeasure(std::move(P), std::move(M));
}

}  // namespace

DiracGeodesicEval dirac_geodesic(const Point& x0, double m0, const Point& x1, double m1,
                                 double t) {
  if (m0 < 0.0 || m1 < 0.0) throw std::invalid_argument("dirac_geodesic: negative mass");
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("dirac_geodesic: t outside [0,1]");
  double d = (x0 - x1).norm();
  if (d >= kCutoff)
    throw std::domain_error("dirac_geodesic: distance >= pi/2, use the teleport branch");

  DiracGeodesicEval out;
  if (t == 0.0) {
    out.position = x0;
    out.mass = m0;
    out.angle = 0.0;
    return out;
  }
  if (t == 1.0) {
    out.position = x1;
    out.mass = m1;
    out.angle = d;
    return out;
  }
  if (m1 == 0.0) {
    out.position = x0;
    out.mass = (1.0 - t) * (1.0 - t) * m0;
    out.angle = 0.0;
    return out;
  }
  if (m0 == 0.0) {
    out.position = x1;
    out.mass = t * t * m1;
    out.angle = d;
    return out;
  }

  double cosd = std::cos(d);
  double mass = (1.0 - t) * (1.0 - t) * m0 + t * t * m1 +
                2.0 * t * (1.0 - t) * std::sqrt(m0 * m1) * cosd;
  // angle of (1-t) sqrt(m0) + t sqrt(m1) e^{id} in the plane; same value as
  // the arccos form but stable where the argument approaches 1
  double phi = std::atan2(t * std::sqrt(m1) * std::sin(d),
                          (1.0 - t) * std::sqrt(m0) + t * std::sqrt(m1) * cosd);
  out.mass = mass;
  out.angle = phi;
  out.position = d > 0.0 ? Point(x0 + (x1 - x0) / d * phi) : x0;
  return out;
}

DiscreteMeasure interpolate_hk(const Coupling& pi, const LebesgueDecomposition& decomp,
                               double t) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("interpolate_hk: t outside [0,1]");
  const auto& x0s = pi.row_marginal.points();
  const auto& x1s = pi.col_marginal.points();
  const int n0 = static_cast<int>(x0s.rows());
  const int n1 = static_cast<int>(x1s.rows());
  if (decomp.sigma.size() != n0 || decomp.u1.size() != n1 || decomp.mu0_perp.size() != n0 ||
      decomp.mu1_perp.size() != n1)
    throw std::invalid_argument("interpolate_hk: inconsistent decomposition");

  std::vector<Eigen::RowVectorXd> pts;
  std::vector<double> masses;
  for (int i = 0; i < n0; ++i) {
    for (int j = 0; j < n1; ++j) {
      double w = pi.weights(i, j);
      if (w <= 0.0) continue;
      Point a = x0s.row(i).transpose();
      Point b = x1s.row(j).transpose();
      if ((a - b).norm() >= kCutoff)
        throw std::invalid_argument("interpolate_hk: coupling mass beyond transport range");
      DiracGeodesicEval ev = dirac_geodesic(a, decomp.u0[i], b, decomp.u1[j], t);
      double m = ev.mass * w;
      if (m > 0.0) {
        pts.push_back(ev.position.transpose());
        masses.push_back(m);
      }
    }
  }
  double w0 = (1.0 - t) * (1.0 - t);
  double w1 = t * t;
  for (int i = 0; i < n0; ++i) {
    double m = w0 * decomp.mu0_perp.mass(i);
    if (m > 0.0) {
      pts.push_back(x0s.row(i));
      masses.push_back(m);
    }
  }
  for (int j = 0; j < n1; ++j) {
    double m = w1 * decomp.mu1_perp.mass(j);
    if (m > 0.0) {
      pts.push_back(x1s.row(j));
      masses.push_back(m);
    }
  }
  return cloud_from(pts, masses, static_cast<int>(x0s.cols()));
}

DiscreteMeasure interpolate_w2(const Coupling& pi, double t) {
  if (t < 0.0 || t > 1.0) throw std::invalid_argument("interpolate_w2: t outside [0,1]");
  const auto& x0s = pi.row_marginal.points();
  const auto& x1s = pi.col_marginal.points();
  std::vector<Eigen::RowVectorXd> pts;
  std::vector<double> masses;
  for (int i = 0; i < x0s.rows(); ++i) {
    for (int j = 0; j < x1s.rows(); ++j) {
      double w = pi.weights(i, j);
      if (w <= 0.0) continue;
      pts.push_back((1.0 - t) * x0s.row(i) + t * x1s.row(j));
      masses.push_back(w);
    }
  }
  return cloud_from(pts, masses, static_cast<int>(x0s.cols()));
}

}  // namespace hklin
