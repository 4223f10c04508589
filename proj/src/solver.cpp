#include "hklin/solver.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace hklin {

namespace {

double support_sq_diameter(const DiscreteMeasure& mu) {
  Eigen::VectorXd lo = mu.points().colwise().minCoeff();
  Eigen::VectorXd hi = mu.points().colwise().maxCoeff();
  return (hi - lo).squaredNorm();
}

Eigen::MatrixXd w2_cost_matrix(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1) {
  Eigen::MatrixXd C(mu0.size(), mu1.size());
  for (int i = 0; i < mu0.size(); ++i)
    for (int j = 0; j < mu1.size(); ++j)
      C(i, j) = (mu0.points().row(i) - mu1.points().row(j)).squaredNorm();
  return C;
}

// Geometric epsilon schedule from eps0 down to epsf (always ends at epsf).
std::vector<double> epsilon_schedule(double eps0, double epsf, double decay) {
  std::vector<double> out;
  double e = std::max(eps0, epsf);
  while (e > epsf * (1.0 + 1e-12)) {
    out.push_back(e);
    e *= decay;
  }
  out.push_back(epsf);
  return out;
}

double logsumexp(const std::vector<double>& terms) {
  double m = -std::numeric_limits<double>::infinity();
  for (double t : terms) m = std::max(m, t);
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

struct SinkhornState {
  Eigen::MatrixXd K;      // stabilized kernel exp((f_i + g_j - C_ij)/eps)
  Eigen::VectorXd f, g;   // absorbed dual potentials
  Eigen::VectorXd a, b;   // relative scalings
  std::vector<char> live0, live1;
};

void rebuild_kernel(SinkhornState& st, const Eigen::MatrixXd& C, double eps) {
  const int n0 = static_cast<int>(C.rows());
  const int n1 = static_cast<int>(C.cols());
  for (int i = 0; i < n0; ++i) {
    for (int j = 0; j < n1; ++j) {
      if (!st.live0[i] || !st.live1[j] || std::isinf(C(i, j))) {
        st.K(i, j) = 0.0;
        continue;
      }
      double e = (st.f[i] + st.g[j] - C(i, j)) / eps;
      st.K(i, j) = std::exp(std::min(e, 600.0));
    }
  }
  st.a.setOnes();
  st.b.setOnes();
}

void absorb(SinkhornState& st, const Eigen::MatrixXd& C, double eps) {
  for (int i = 0; i < st.f.size(); ++i)
    if (st.live0[static_cast<size_t>(i)]) st.f[i] += eps * std::log(st.a[i]);
  for (int j = 0; j < st.g.size(); ++j)
    if (st.live1[static_cast<size_t>(j)]) st.g[j] += eps * std::log(st.b[j]);
  rebuild_kernel(st, C, eps);
}

// Shared Sinkhorn driver. `balanced` switches between hard marginal
// constraints (W2) and KL soft marginals with the 1/(1+eps) exponent (HK).
Coupling run_sinkhorn(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                      const Eigen::MatrixXd& C, const SolverConfig& cfg, bool balanced) {
  cfg.validate();
  const int n0 = mu0.size();
  const int n1 = mu1.size();
  if (n0 == 0 || n1 == 0) throw std::invalid_argument("solver: empty measure");

  SinkhornState st;
  st.K.resize(n0, n1);
  st.f = Eigen::VectorXd::Zero(n0);
  st.g = Eigen::VectorXd::Zero(n1);
  st.a = Eigen::VectorXd::Ones(n0);
  st.b = Eigen::VectorXd::Ones(n1);
  st.live0.assign(static_cast<size_t>(n0), 0);
  st.live1.assign(static_cast<size_t>(n1), 0);
  for (int i = 0; i < n0; ++i)
    if (mu0.mass(i) > 0.0)
      for (int j = 0; j < n1; ++j)
        if (mu1.mass(j) > 0.0 && !std::isinf(C(i, j))) {
          st.live0[static_cast<size_t>(i)] = 1;
          break;
        }
  for (int j = 0; j < n1; ++j)
    if (mu1.mass(j) > 0.0)
      for (int i = 0; i < n0; ++i)
        if (mu0.mass(i) > 0.0 && !std::isinf(C(i, j))) {
          st.live1[static_cast<size_t>(j)] = 1;
          break;
        }
  bool any_live = false;
  for (char l : st.live0) any_live |= (l != 0);

  double eps0 = cfg.epsilon_start > 0.0
                    ? cfg.epsilon_start
                    : 0.5 * (support_sq_diameter(mu0) + support_sq_diameter(mu1));
  std::vector<double> schedule = epsilon_schedule(eps0, cfg.epsilon_final, cfg.epsilon_decay);

  const double absorb_threshold = 200.0;  // on |log a|, |log b|
  bool converged = !any_live;

  if (any_live) {
    for (size_t stage = 0; stage < schedule.size(); ++stage) {
      double eps = schedule[stage];
      rebuild_kernel(st, C, eps);
      bool final_stage = (stage + 1 == schedule.size());
      double tol = final_stage ? cfg.tol_marginal : std::max(cfg.tol_marginal, 1e-6);
      converged = false;
      for (int iter = 0; iter < cfg.max_iters_per_eps; ++iter) {
        double delta = 0.0;
        Eigen::VectorXd s0 = st.K * st.b;
        for (int i = 0; i < n0; ++i) {
          if (!st.live0[static_cast<size_t>(i)]) continue;
          double s = std::max(s0[i], 1e-300);
          double la_new = balanced
                              ? std::log(mu0.mass(i)) - std::log(s)
                              : (std::log(mu0.mass(i)) - std::log(s) - st.f[i]) / (1.0 + eps);
          delta = std::max(delta, eps * std::abs(la_new - std::log(st.a[i])));
          st.a[i] = std::exp(la_new);
        }
        Eigen::VectorXd s1 = st.K.transpose() * st.a;
        for (int j = 0; j < n1; ++j) {
          if (!st.live1[static_cast<size_t>(j)]) continue;
          double s = std::max(s1[j], 1e-300);
          double lb_new = balanced
                              ? std::log(mu1.mass(j)) - std::log(s)
                              : (std::log(mu1.mass(j)) - std::log(s) - st.g[j]) / (1.0 + eps);
          delta = std::max(delta, eps * std::abs(lb_new - std::log(st.b[j])));
          st.b[j] = std::exp(lb_new);
        }

        if (!balanced) {
          // Optimal translation of the dual pair (f + lambda, g - lambda);
          // removes the slow mode of the KL-damped fixed point iteration.
          // The stabilized kernel is invariant under the shift.
          std::vector<double> t0, t1;
          for (int i = 0; i < n0; ++i)
            if (st.live0[static_cast<size_t>(i)])
              t0.push_back(std::log(mu0.mass(i)) - st.f[i] - eps * std::log(st.a[i]));
          for (int j = 0; j < n1; ++j)
            if (st.live1[static_cast<size_t>(j)])
              t1.push_back(std::log(mu1.mass(j)) - st.g[j] - eps * std::log(st.b[j]));
          double lambda = 0.5 * (logsumexp(t0) - logsumexp(t1));
          if (std::isfinite(lambda)) {
            for (int i = 0; i < n0; ++i) st.f[i] += lambda;
            for (int j = 0; j < n1; ++j) st.g[j] -= lambda;
            delta = std::max(delta, std::abs(lambda));
          }
        }

        double la_max = 0.0;
        la_max = std::max(st.a.array().abs().log().abs().maxCoeff(), la_max);
        la_max = std::max(st.b.array().abs().log().abs().maxCoeff(), la_max);
        if (cfg.log_domain && la_max > absorb_threshold) absorb(st, C, eps);

        if (delta < tol) {
          converged = true;
          break;
        }
      }
      absorb(st, C, eps);  // plan = K after absorption
    }
  } else {
    st.K.setZero();
  }

  Coupling out;
  out.weights = st.K;
  out.converged = converged;
  if (balanced) {
    // Round to the transport polytope so marginals are exact.
    Eigen::VectorXd r = out.weights.rowwise().sum();
    for (int i = 0; i < n0; ++i) {
      double sc = r[i] > 0.0 ? std::min(1.0, mu0.mass(i) / r[i]) : 0.0;
      out.weights.row(i) *= sc;
    }
    Eigen::VectorXd c = out.weights.colwise().sum().transpose();
    for (int j = 0; j < n1; ++j) {
      double sc = c[j] > 0.0 ? std::min(1.0, mu1.mass(j) / c[j]) : 0.0;
      out.weights.col(j) *= sc;
    }
    Eigen::VectorXd er = mu0.masses() - out.weights.rowwise().sum();
    Eigen::VectorXd ec = mu1.masses() - out.weights.colwise().sum().transpose();
    double total_err = er.sum();
    if (total_err > 0.0) out.weights += er * ec.transpose() / total_err;
    out.weights = out.weights.cwiseMax(0.0);
  }

  Eigen::VectorXd row = out.weights.rowwise().sum();
  Eigen::VectorXd col = out.weights.colwise().sum().transpose();
  out.row_marginal = DiscreteMeasure(mu0.points(), row, mu0.domain_box());
  out.col_marginal = DiscreteMeasure(mu1.points(), col, mu1.domain_box());

  if (balanced) {
    double transport = 0.0;
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j)
        if (out.weights(i, j) > 0.0) transport += out.weights(i, j) * C(i, j);
    out.objective_value = transport;
  } else {
    double transport = 0.0;
    for (int i = 0; i < n0; ++i) {
      for (int j = 0; j < n1; ++j) {
        double w = out.weights(i, j);
        if (w == 0.0) continue;
        if (std::isinf(C(i, j))) {
          out.objective_value = kInfiniteCost;
          return out;
        }
        transport += w * C(i, j);
      }
    }
    out.objective_value = transport + kl_divergence(row, mu0.masses()) +
                          kl_divergence(col, mu1.masses());
  }
  return out;
}

}  // namespace

void SolverConfig::validate() const {
  if (!(epsilon_final > 0.0)) throw std::invalid_argument("SolverConfig: epsilon_final <= 0");
  if (epsilon_start > 0.0 && epsilon_final > epsilon_start)
    throw std::invalid_argument("SolverConfig: epsilon_final > epsilon_start");
  if (!(epsilon_decay > 0.0) || !(epsilon_decay < 1.0))
    throw std::invalid_argument("SolverConfig: epsilon_decay must lie in (0,1)");
  if (max_iters_per_eps < 1) throw std::invalid_argument("SolverConfig: max_iters_per_eps < 1");
  if (!(tol_marginal > 0.0)) throw std::invalid_argument("SolverConfig: tol_marginal <= 0");
}

SolverConfig parse_solver_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  SolverConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = line;
    if (auto pos = t.find('#'); pos != std::string::npos) t = t.substr(0, pos);
    t.erase(0, t.find_first_not_of(" \t\r\n"));
    t.erase(t.find_last_not_of(" \t\r\n") + 1);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = t.substr(0, eq);
    std::string val = t.substr(eq + 1);
    key.erase(key.find_last_not_of(" \t") + 1);
    val.erase(0, val.find_first_not_of(" \t"));
    try {
      if (key == "epsilon_start")
        cfg.epsilon_start = std::stod(val);
      else if (key == "epsilon_final")
        cfg.epsilon_final = std::stod(val);
      else if (key == "epsilon_decay")
        cfg.epsilon_decay = std::stod(val);
      else if (key == "max_iters_per_eps")
        cfg.max_iters_per_eps = std::stoi(val);
      else if (key == "tol_marginal")
        cfg.tol_marginal = std::stod(val);
      else if (key == "log_domain")
        cfg.log_domain = (val == "true" || val == "1");
      else
        throw std::runtime_error(path + ": unknown key '" + key + "'");
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      throw std::runtime_error(path + ": bad value for " + key + ": '" + val + "'");
    }
  }
  cfg.validate();
  return cfg;
}

Coupling solve_hk(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                  const SolverConfig& cfg) {
  CostMatrix cm = hk_cost_matrix(mu0, mu1);
  return run_sinkhorn(mu0, mu1, cm.values, cfg, /*balanced=*/false);
}

Coupling solve_w2(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1,
                  const SolverConfig& cfg) {
  if (std::abs(mu0.total_mass() - mu1.total_mass()) > 1e-9)
    throw std::invalid_argument(
        "solve_w2: total masses differ; normalize the measures first");
  Eigen::MatrixXd C = w2_cost_matrix(mu0, mu1);
  return run_sinkhorn(mu0, mu1, C, cfg, /*balanced=*/true);
}

std::pair<Coupling, double> brute_force_hk(const DiscreteMeasure& mu0,
                                           const DiscreteMeasure& mu1) {
  const int n0 = mu0.size();
  const int n1 = mu1.size();
  if (n0 * n1 > 9) throw std::invalid_argument("brute_force_hk: support too large");

  CostMatrix cm = hk_cost_matrix(mu0, mu1);
  // P(i,j) = mu0_i * mu1_j * exp(-c_ij); the unique coordinate minimizer of
  // the strictly convex objective solves (r_i + m)(s_j + m) = P(i,j).
  Eigen::MatrixXd P(n0, n1);
  for (int i = 0; i < n0; ++i)
    for (int j = 0; j < n1; ++j)
      P(i, j) = std::isinf(cm.values(i, j))
                    ? 0.0
                    : mu0.mass(i) * mu1.mass(j) * std::exp(-cm.values(i, j));

  auto descend = [&](Eigen::MatrixXd plan) {
    Eigen::VectorXd r = plan.rowwise().sum();
    Eigen::VectorXd s = plan.colwise().sum().transpose();
    for (int sweep = 0; sweep < 200000; ++sweep) {
      double shift = 0.0;
      for (int i = 0; i < n0; ++i) {
        for (int j = 0; j < n1; ++j) {
          double R = r[i] - plan(i, j);
          double S = s[j] - plan(i, j);
          double disc = (R - S) * (R - S) + 4.0 * P(i, j);
          double m = 0.5 * (-(R + S) + std::sqrt(disc));
          m = std::max(m, 0.0);
          shift = std::max(shift, std::abs(m - plan(i, j)));
          r[i] = R + m;
          s[j] = S + m;
          plan(i, j) = m;
        }
      }
      if (shift < 1e-15 * (1.0 + plan.maxCoeff())) break;
    }
    return plan;
  };

  Eigen::MatrixXd best;
  double best_val = kInfiniteCost;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  for (int start = 0; start < 3; ++start) {
    Eigen::MatrixXd init(n0, n1);
    for (int i = 0; i < n0; ++i)
      for (int j = 0; j < n1; ++j) {
        double base = std::sqrt(P(i, j)) / std::max(n0, n1);
        init(i, j) = start == 0 ? base : base * unif(rng);
      }
    Eigen::MatrixXd plan = descend(init);
    double val = soft_marginal_objective(plan, mu0, mu1);
    if (val < best_val) {
      best_val = val;
      best = plan;
    }
  }

  Coupling out;
  out.weights = best;
  out.row_marginal = DiscreteMeasure(mu0.points(), best.rowwise().sum(), mu0.domain_box());
  out.col_marginal =
      DiscreteMeasure(mu1.points(), best.colwise().sum().transpose(), mu1.domain_box());
  out.objective_value = best_val;
  out.converged = true;
  return {out, best_val};
}

double hk_kappa_sq(const DiscreteMeasure& mu0, const DiscreteMeasure& mu1, double kappa,
                   const SolverConfig& cfg) {
  Coupling pi = solve_hk(rescale_domain(mu0, kappa), rescale_domain(mu1, kappa), cfg);
  return kappa * kappa * pi.objective_value;
}

}  // namespace hklin
