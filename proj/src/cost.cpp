#include "hklin/cost.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace hklin {

namespace {

// Distances in [pi/2 - 1e-9, pi/2) are clamped to the sentinel; the entropic
// kernel is numerically zero there anyway.
constexpr double kCutoff = kMaxTransportDistance - 1e-9;

double phi(double s) {
  if (s == 0.0) return 1.0;
  return s * std::log(s) - s + 1.0;
}

void check_shared_support(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  if (mu.size() != nu.size() || mu.dim() != nu.dim())
    throw std::invalid_argument("mismatched supports");
  if (mu.points() != nu.points()) throw std::invalid_argument("mismatched supports");
}

}  // namespace

double hk_cost_from_distance(double distance) {
  if (distance >= kCutoff) return kInfiniteCost;
  if (distance <= 0.0) return 0.0;
  return -2.0 * std::log(std::cos(distance));
}

double hk_cost(const Point& x0, const Point& x1) {
  return hk_cost_from_distance((x0 - x1).norm());
}

double hk_dirac_sq(const Point& x0, double m0, const Point& x1, double m1) {
  if (m0 < 0.0 || m1 < 0.0) throw std::invalid_argument("hk_dirac_sq: negative mass");
  double d = std::min((x0 - x1).norm(), kMaxTransportDistance);
  return m0 + m1 - 2.0 * std::sqrt(m0 * m1) * std::cos(d);
}

CostMatrix hk_cost_matrix(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  if (mu0.dim() != mu1.dim()) throw std::invalid_argument("hk_cost_matrix: dimension mismatch");
  CostMatrix cm;
  cm.values.resize(mu0.size(), mu1.size());
  for (int i = 0; i < mu0.size(); ++i) {
    for (int j = 0; j < mu1.size(); ++j) {
      double d = (mu0.points().row(i) - mu1.points().row(j)).norm();
      cm.values(i, j) = hk_cost_from_distance(d);
    }
  }
  return cm;
}

double kl_divergence(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
  if (mu.size() != nu.size()) throw std::invalid_argument("mismatched supports");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    if (nu[i] == 0.0) {
      if (mu[i] > 0.0) return kInfiniteCost;
      continue;
    }
    total += phi(mu[i] / nu[i]) * nu[i];
  }
  return total;
}

double kl_divergence(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  check_shared_support(mu, nu);
  return kl_divergence(mu.masses(), nu.masses());
}

double hellinger_sq(const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
  if (mu.size() != nu.size()) throw std::invalid_argument("mismatched supports");
  double total = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    double d = std::sqrt(mu[i]) - std::sqrt(nu[i]);
    total += d * d;
  }
  return total;
}

double hellinger_sq(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  check_shared_support(mu, nu);
  return hellinger_sq(mu.masses(), nu.masses());
}

std::pair<DiscreteMeasure, DiscreteMeasure> align_union(const DiscreteMeasure& a,
                                                        const DiscreteMeasure& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("align_union: dimension mismatch");
  std::map<std::vector<double>, std::pair<double, double>> table;
  auto key = [](const DiscreteMeasure& m, int i) {
    std::vector<double> k(static_cast<size_t>(m.dim()));
    for (int d = 0; d < m.dim(); ++d) k[static_cast<size_t>(d)] = m.points()(i, d);
    return k;
  };
  for (int i = 0; i < a.size(); ++i) table[key(a, i)].first += a.mass(i);
  for (int i = 0; i < b.size(); ++i) table[key(b, i)].second += b.mass(i);

  Eigen::MatrixXd P(static_cast<Eigen::Index>(table.size()), a.dim());
  Eigen::VectorXd Ma(static_cast<Eigen::Index>(table.size()));
  Eigen::VectorXd Mb(static_cast<Eigen::Index>(table.size()));
  Eigen::Index row = 0;
  for (const auto& [coords, masses] : table) {
    for (int d = 0; d < a.dim(); ++d) P(row, d) = coords[static_cast<size_t>(d)];
    Ma[row] = masses.first;
    Mb[row] = masses.second;
    ++row;
  }
  BoundingBox box;
  box.lo = a.domain_box().lo.cwiseMin(b.domain_box().lo);
  box.hi = a.domain_box().hi.cwiseMax(b.domain_box().hi);
  return {DiscreteMeasure(P, std::move(Ma), box), DiscreteMeasure(P, std::move(Mb), box)};
}

double soft_marginal_objective(const Eigen::MatrixXd& plan, const DiscreteMeasure& mu0,
                               const DiscreteMeasure& mu1) {
  if (plan.rows() != mu0.size() || plan.cols() != mu1.size())
    throw std::invalid_argument("soft_marginal_objective: dimension mismatch");
  CostMatrix cm = hk_cost_matrix(mu0, mu1);
  double transport = 0.0;
  for (int i = 0; i < plan.rows(); ++i) {
    for (int j = 0; j < plan.cols(); ++j) {
      double w = plan(i, j);
      if (w == 0.0) continue;  // 0 * inf = 0
      if (std::isinf(cm.values(i, j))) return kInfiniteCost;
      transport += w * cm.values(i, j);
    }
  }
  Eigen::VectorXd row = plan.rowwise().sum();
  Eigen::VectorXd col = plan.colwise().sum().transpose();
  return transport + kl_divergence(row, mu0.masses()) + kl_divergence(col, mu1.masses());
}

}  // namespace hklin
