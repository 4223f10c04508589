#include "hklin/tangent.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hklin {

namespace {

constexpr double kCoverageThreshold = 0.5;

using CoordKey = std::vector<double>;

CoordKey coord_key(const DiscreteMeasure& m, int i) {
  CoordKey k(static_cast<size_t>(m.dim()));
  for (int d = 0; d < m.dim(); ++d) k[static_cast<size_t>(d)] = m.points()(i, d);
  return k;
}

std::map<CoordKey, double> singular_atoms(const DiscreteMeasure& m) {
  std::map<CoordKey, double> out;
  for (int i = 0; i < m.size(); ++i)
    if (m.mass(i) > 0.0) out[coord_key(m, i)] += m.mass(i);
  return out;
}

// sum over matched atoms of sqrt(m * m~); unmatched atoms contribute 0.
double singular_inner(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  auto ma = singular_atoms(a);
  auto mb = singular_atoms(b);
  double total = 0.0;
  for (const auto& [k, m] : ma) {
    auto it = mb.find(k);
    if (it != mb.end()) total += std::sqrt(m * it->second);
  }
  return total;
}

// Hellinger^2 over the union of atom supports.
double singular_hellinger_sq(const DiscreteMeasure& a, const DiscreteMeasure& b) {
  auto ma = singular_atoms(a);
  auto mb = singular_atoms(b);
  double total = 0.0;
  for (const auto& [k, m] : ma) {
    auto it = mb.find(k);
    double other = it != mb.end() ? it->second : 0.0;
    double d = std::sqrt(m) - std::sqrt(other);
    total += d * d;
  }
  for (const auto& [k, m] : mb)
    if (!ma.count(k)) total += m;
  return total;
}

void check_field(const DiscreteMeasure& mu0, const TangentField& tf, const char* who) {
  if (tf.v0.rows() != mu0.size() || tf.v0.cols() != mu0.dim() || tf.alpha0.size() != mu0.size())
    throw std::invalid_argument(std::string(who) + ": tangent field/support mismatch");
}

}  // namespace

LebesgueDecomposition barycentric_project(const Coupling& pi, const DiscreteMeasure& mu0,
                                          const DiscreteMeasure& mu1) {
  const int n0 = mu0.size();
  const int n1 = mu1.size();
  if (pi.weights.rows() != n0 || pi.weights.cols() != n1)
    throw std::invalid_argument("barycentric_project: coupling/support mismatch");
  if (!pi.weights.allFinite())
    throw std::invalid_argument("barycentric_project: non-finite coupling (solver failure)");

  Eigen::VectorXd sigma = pi.weights.rowwise().sum();
  Eigen::VectorXd nu1 = pi.weights.colwise().sum().transpose();
  for (int i = 0; i < n0; ++i) {
    if (sigma[i] > 0.0 && sigma[i] > 1e6 * mu0.mass(i))
      throw std::invalid_argument(
          "barycentric_project: coupling row mass vastly exceeds mu0 (solver failure)");
  }

  LebesgueDecomposition out;
  out.sigma = DiscreteMeasure(mu0.points(), sigma, mu0.domain_box());
  out.transport_map = mu0.points();
  out.u0 = Eigen::VectorXd::Zero(n0);
  out.u1_of_T = Eigen::VectorXd::Zero(n0);
  out.u1 = Eigen::VectorXd::Zero(n1);

  Eigen::VectorXd perp1(n1);
  for (int j = 0; j < n1; ++j) {
    double coverage = nu1[j] / mu1.mass(j);
    perp1[j] = std::max(0.0, 1.0 - coverage / kCoverageThreshold) * mu1.mass(j);
    out.u1[j] = nu1[j] > 0.0 ? (mu1.mass(j) - perp1[j]) / nu1[j] : 0.0;
  }

  Eigen::VectorXd perp0 = Eigen::VectorXd::Zero(n0);
  for (int i = 0; i < n0; ++i) {
    if (sigma[i] > 0.0) {
      if (mu0.mass(i) < 1e-12)
        throw std::invalid_argument("barycentric_project: transported row with vanishing mu0");
      out.transport_map.row(i) = (pi.weights.row(i) * mu1.points()) / sigma[i];
      out.u0[i] = mu0.mass(i) / std::max(sigma[i], 1e-15);
      out.u1_of_T[i] = pi.weights.row(i).dot(out.u1) / sigma[i];
    } else {
      perp0[i] = mu0.mass(i);
    }
  }
  out.mu0_perp = DiscreteMeasure(mu0.points(), perp0, mu0.domain_box());
  out.mu1_perp = DiscreteMeasure(mu1.points(), perp1, mu1.domain_box());
  return out;
}

TangentField hk_log(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                    const LebesgueDecomposition& decomp) {
  const int n0 = mu0.size();
  if (decomp.sigma.size() != n0 || decomp.mu1_perp.size() != mu1.size())
    throw std::invalid_argument("hk_log: decomposition/support mismatch");

  TangentField tf;
  tf.v0 = Eigen::MatrixXd::Zero(n0, mu0.dim());
  tf.alpha0 = Eigen::VectorXd::Zero(n0);
  for (int i = 0; i < n0; ++i) {
    if (decomp.sigma.mass(i) > 0.0) {
      if (!(decomp.u0[i] > 0.0))
        throw std::invalid_argument("hk_log: u0 = 0 on a transported point");
      Eigen::RowVectorXd disp = decomp.transport_map.row(i) - mu0.points().row(i);
      double d = disp.norm();
      double root = std::sqrt(decomp.u1_of_T[i] / decomp.u0[i]);
      if (d > 0.0) tf.v0.row(i) = (disp / d) * (root * std::sin(d));
      tf.alpha0[i] = 2.0 * (root * std::cos(d) - 1.0);
    } else {
      tf.alpha0[i] = -2.0;
    }
  }
  tf.mu1_perp = decomp.mu1_perp;
  return tf;
}

DiscreteMeasure hk_exp(const DiscreteMeasure& mu0, const TangentField& tf) {
  check_field(mu0, tf, "hk_exp");
  const int n0 = mu0.size();
  std::vector<Eigen::RowVectorXd> pts;
  std::vector<double> masses;
  pts.reserve(static_cast<size_t>(n0));
  for (int i = 0; i < n0; ++i) {
    double a = tf.v0.row(i).norm();
    double b = tf.alpha0[i] / 2.0 + 1.0;
    if (tf.alpha0[i] < -2.0 - 1e-12)
      throw std::domain_error("hk_exp: alpha0 < -2 is outside the map domain");
    if (a > 0.0 && b < 0.0)
      throw std::domain_error("hk_exp: v0 != 0 with alpha0 < -2 is outside the map domain");
    b = std::max(b, 0.0);
    double q2 = a * a + b * b;
    if (q2 == 0.0) continue;  // fully destroyed mass
    double phi = std::atan2(a, b);  // in [0, pi/2] since a >= 0, b >= 0
    Eigen::RowVectorXd target = mu0.points().row(i);
    if (a > 0.0) target += (tf.v0.row(i) / a) * phi;
    double m = q2 * mu0.mass(i);
    if (m > 0.0) {
      pts.push_back(target);
      masses.push_back(m);
    }
  }
  for (int j = 0; j < tf.mu1_perp.size(); ++j) {
    if (tf.mu1_perp.mass(j) > 0.0) {
      pts.push_back(tf.mu1_perp.points().row(j));
      masses.push_back(tf.mu1_perp.mass(j));
    }
  }
  if (pts.empty()) return DiscreteMeasure(mu0.dim());
  Eigen::MatrixXd P(static_cast<Eigen::Index>(pts.size()), mu0.dim());
  Eigen::VectorXd M(static_cast<Eigen::Index>(pts.size()));
  for (size_t i = 0; i < pts.size(); ++i) {
    P.row(static_cast<Eigen::Index>(i)) = pts[i];
    M[static_cast<Eigen::Index>(i)] = masses[i];
  }
  return DiscreteMeasure(std::move(P), std::move(M));
}

double hk_inner(const DiscreteMeasure& mu0, const TangentField& tf1, const TangentField& tf2) {
  check_field(mu0, tf1, "hk_inner");
  check_field(mu0, tf2, "hk_inner");
  double base = 0.0;
  for (int i = 0; i < mu0.size(); ++i) {
    base += mu0.mass(i) *
            (tf1.v0.row(i).dot(tf2.v0.row(i)) + 0.25 * tf1.alpha0[i] * tf2.alpha0[i]);
  }
  return base + singular_inner(tf1.mu1_perp, tf2.mu1_perp);
}

double hk_lin_dist(const DiscreteMeasure& mu0, const TangentField& tf1, const TangentField& tf2) {
  check_field(mu0, tf1, "hk_lin_dist");
  check_field(mu0, tf2, "hk_lin_dist");
  double base = 0.0;
  for (int i = 0; i < mu0.size(); ++i) {
    double dv = (tf1.v0.row(i) - tf2.v0.row(i)).squaredNorm();
    double da = tf1.alpha0[i] - tf2.alpha0[i];
    base += mu0.mass(i) * (dv + 0.25 * da * da);
  }
  return std::sqrt(base + singular_hellinger_sq(tf1.mu1_perp, tf2.mu1_perp));
}

TangentField scale_tangent(const TangentField& tf, double tau) {
  TangentField out;
  out.v0 = tau * tf.v0;
  out.alpha0 = tau * tf.alpha0;
  out.mu1_perp = DiscreteMeasure(tf.mu1_perp.points(), tau * tau * tf.mu1_perp.masses(),
                                 tf.mu1_perp.domain_box());
  return out;
}

W2TangentField w2_log(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                      const Coupling& pi) {
  if (pi.weights.rows() != mu0.size() || pi.weights.cols() != mu1.size())
    throw std::invalid_argument("w2_log: coupling/support mismatch");
  W2TangentField tf;
  tf.v0 = Eigen::MatrixXd::Zero(mu0.size(), mu0.dim());
  for (int i = 0; i < mu0.size(); ++i) {
    double row_mass = pi.weights.row(i).sum();
    if (row_mass > 0.0)
      tf.v0.row(i) = (pi.weights.row(i) * mu1.points()) / row_mass - mu0.points().row(i);
  }
  return tf;
}

DiscreteMeasure w2_exp(const DiscreteMeasure& mu0, const W2TangentField& tf) {
  if (tf.v0.rows() != mu0.size() || tf.v0.cols() != mu0.dim())
    throw std::invalid_argument("w2_exp: tangent field/support mismatch");
  return DiscreteMeasure(mu0.points() + tf.v0, mu0.masses());
}

double w2_lin_dist(const DiscreteMeasure& mu0, const W2TangentField& tf1,
                   const W2TangentField& tf2) {
  if (tf1.v0.rows() != mu0.size() || tf2.v0.rows() != mu0.size())
    throw std::invalid_argument("w2_lin_dist: tangent field/support mismatch");
  double total = 0.0;
  for (int i = 0; i < mu0.size(); ++i)
    total += mu0.mass(i) * (tf1.v0.row(i) - tf2.v0.row(i)).squaredNorm();
  return std::sqrt(total);
}

void save_tangent_field(const TangentField& tf, const DiscreteMeasure& mu0,
                        const std::string& fields_path, const std::string& perp_path) {
  if (mu0.dim() != 2) throw std::invalid_argument("save_tangent_field: only 2-d measures");
  check_field(mu0, tf, "save_tangent_field");
  std::ofstream out(fields_path);
  if (!out) throw std::runtime_error("cannot write file: " + fields_path);
  out << "x,y,mass,vx,vy,alpha\n";
  char buf[256];
  for (int i = 0; i < mu0.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  mu0.points()(i, 0), mu0.points()(i, 1), mu0.mass(i), tf.v0(i, 0), tf.v0(i, 1),
                  tf.alpha0[i]);
    out << buf;
  }
  if (!out) throw std::runtime_error("write failure: " + fields_path);
  // The singular component is often empty; unlike measure files, an empty
  // point list is valid here.
  std::ofstream perp_out(perp_path);
  if (!perp_out) throw std::runtime_error("cannot write file: " + perp_path);
  perp_out << "x,y,mass\n";
  for (int j = 0; j < tf.mu1_perp.size(); ++j) {
    if (tf.mu1_perp.mass(j) <= 0.0) continue;
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", tf.mu1_perp.points()(j, 0),
                  tf.mu1_perp.points()(j, 1), tf.mu1_perp.mass(j));
    perp_out << buf;
  }
  if (!perp_out) throw std::runtime_error("write failure: " + perp_path);
}

std::pair<DiscreteMeasure, TangentField> load_tangent_field(const std::string& fields_path,
                                                            const std::string& perp_path) {
  std::ifstream in(fields_path);
  if (!in) throw std::runtime_error("cannot open file: " + fields_path);
  std::string line;
  bool header = false;
  std::vector<std::array<double, 6>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("x,y,mass,vx,vy,alpha", 0) != 0)
        throw std::runtime_error(fields_path + ": bad tangent field header");
      header = true;
      continue;
    }
    std::array<double, 6> vals{};
    std::stringstream ss(line);
    std::string tok;
    for (int k = 0; k < 6; ++k) {
      if (!std::getline(ss, tok, ','))
        throw std::runtime_error(fields_path + ": expected 6 columns");
      vals[static_cast<size_t>(k)] = std::stod(tok);
    }
    rows.push_back(vals);
  }
  if (rows.empty()) throw std::runtime_error(fields_path + ": empty tangent field");
  Eigen::MatrixXd P(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::VectorXd M(static_cast<Eigen::Index>(rows.size()));
  TangentField tf;
  tf.v0.resize(static_cast<Eigen::Index>(rows.size()), 2);
  tf.alpha0.resize(static_cast<Eigen::Index>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    auto r = static_cast<Eigen::Index>(i);
    P(r, 0) = rows[i][0];
    P(r, 1) = rows[i][1];
    M[r] = rows[i][2];
    tf.v0(r, 0) = rows[i][3];
    tf.v0(r, 1) = rows[i][4];
    tf.alpha0[r] = rows[i][5];
  }
  std::ifstream perp_in(perp_path);
  if (!perp_in) throw std::runtime_error("cannot open file: " + perp_path);
  std::vector<std::array<double, 3>> perp_rows;
  bool perp_header = false;
  while (std::getline(perp_in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!perp_header) {
      if (line.rfind("x,y,mass", 0) != 0)
        throw std::runtime_error(perp_path + ": expected header 'x,y,mass'");
      perp_header = true;
      continue;
    }
    std::array<double, 3> vals{};
    std::stringstream ss(line);
    std::string tok;
    for (int k = 0; k < 3; ++k) {
      if (!std::getline(ss, tok, ','))
        throw std::runtime_error(perp_path + ": expected 3 columns");
      vals[static_cast<size_t>(k)] = std::stod(tok);
    }
    perp_rows.push_back(vals);
  }
  if (perp_rows.empty()) {
    tf.mu1_perp = DiscreteMeasure(2);
  } else {
    Eigen::MatrixXd PP(static_cast<Eigen::Index>(perp_rows.size()), 2);
    Eigen::VectorXd PM(static_cast<Eigen::Index>(perp_rows.size()));
    for (size_t i = 0; i < perp_rows.size(); ++i) {
      auto r = static_cast<Eigen::Index>(i);
      PP(r, 0) = perp_rows[i][0];
      PP(r, 1) = perp_rows[i][1];
      PM[r] = perp_rows[i][2];
    }
    tf.mu1_perp = DiscreteMeasure(std::move(PP), std::move(PM));
  }
  return {DiscreteMeasure(std::move(P), std::move(M)), tf};
}

}  // namespace hklin
