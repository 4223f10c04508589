#include "hklin/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "hklin/parallel.hpp"

namespace hklin {

namespace {

Eigen::VectorXd sqrt_weights(const DiscreteMeasure& mu0) {
  return mu0.masses().array().sqrt();
}

std::pair<std::vector<int>, std::vector<int>> split_classes(const std::vector<int>& labels) {
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() != 2)
    throw std::invalid_argument("lda: exactly two classes required");
  int lo = *distinct.begin();
  std::vector<int> c0, c1;
  for (size_t i = 0; i < labels.size(); ++i)
    (labels[i] == lo ? c0 : c1).push_back(static_cast<int>(i));
  return {c0, c1};
}

}  // namespace

DiscreteMeasure linear_mean(const std::vector<DiscreteMeasure>& samples, const GridSpec& grid) {
  if (samples.empty()) throw std::invalid_argument("linear_mean: empty sample list");
  grid.validate();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(grid.node_count());
  for (const auto& s : samples) {
    DiscreteMeasure r = rasterize(s, grid);
    for (int i = 0; i < r.size(); ++i) {
      int c = static_cast<int>(std::lround((r.points()(i, 0) - grid.origin[0]) / grid.spacing[0]));
      int row = static_cast<int>(std::lround((r.points()(i, 1) - grid.origin[1]) / grid.spacing[1]));
      acc[row * grid.cols + c] += r.mass(i);
    }
  }
  acc /= static_cast<double>(samples.size());
  std::vector<int> nz;
  for (int i = 0; i < acc.size(); ++i)
    if (acc[i] > 0.0) nz.push_back(static_cast<int>(i));
  if (nz.empty()) throw std::runtime_error("linear_mean: all samples empty");
  Eigen::MatrixXd P(static_cast<Eigen::Index>(nz.size()), 2);
  Eigen::VectorXd M(static_cast<Eigen::Index>(nz.size()));
  for (size_t i = 0; i < nz.size(); ++i) {
    P.row(static_cast<Eigen::Index>(i)) = grid.node(nz[i] / grid.cols, nz[i] % grid.cols).transpose();
    M[static_cast<Eigen::Index>(i)] = acc[nz[i]];
  }
  return DiscreteMeasure(std::move(P), std::move(M), grid.bounding_box());
}

Eigen::RowVectorXd flatten_hk(const DiscreteMeasure& mu0, const TangentField& tf) {
  const int n = mu0.size();
  const int d = mu0.dim();
  Eigen::VectorXd w = sqrt_weights(mu0);
  Eigen::RowVectorXd row((d + 1) * n);
  for (int k = 0; k < d; ++k)
    row.segment(k * n, n) = (tf.v0.col(k).array() * w.array()).transpose();
  row.segment(d * n, n) = (0.5 * tf.alpha0.array() * w.array()).transpose();
  return row;
}

Eigen::RowVectorXd flatten_w2(const DiscreteMeasure& mu0, const W2TangentField& tf) {
  const int n = mu0.size();
  const int d = mu0.dim();
  Eigen::VectorXd w = sqrt_weights(mu0);
  Eigen::RowVectorXd row(d * n);
  for (int k = 0; k < d; ++k)
    row.segment(k * n, n) = (tf.v0.col(k).array() * w.array()).transpose();
  return row;
}

TangentField unflatten_hk(const DiscreteMeasure& mu0, const Eigen::RowVectorXd& row) {
  const int n = mu0.size();
  const int d = mu0.dim();
  if (row.size() != (d + 1) * n) throw std::invalid_argument("unflatten_hk: dimension mismatch");
  Eigen::VectorXd w = sqrt_weights(mu0);
  TangentField tf;
  tf.v0.resize(n, d);
  for (int k = 0; k < d; ++k)
    tf.v0.col(k) = row.segment(k * n, n).transpose().array() / w.array();
  tf.alpha0 = 2.0 * row.segment(d * n, n).transpose().array() / w.array();
  tf.mu1_perp = DiscreteMeasure(mu0.dim());
  return tf;
}

W2TangentField unflatten_w2(const DiscreteMeasure& mu0, const Eigen::RowVectorXd& row) {
  const int n = mu0.size();
  const int d = mu0.dim();
  if (row.size() != d * n) throw std::invalid_argument("unflatten_w2: dimension mismatch");
  Eigen::VectorXd w = sqrt_weights(mu0);
  W2TangentField tf;
  tf.v0.resize(n, d);
  for (int k = 0; k < d; ++k)
    tf.v0.col(k) = row.segment(k * n, n).transpose().array() / w.array();
  return tf;
}

EmbeddingMatrix embed_dataset(const DiscreteMeasure& mu0,
                              const std::vector<DiscreteMeasure>& samples, Metric metric,
                              double kappa, const SolverConfig& cfg, int workers) {
  if (samples.empty()) throw std::invalid_argument("embed_dataset: empty sample list");
  if (!(kappa > 0.0)) throw std::invalid_argument("embed_dataset: kappa must be positive");

  double scale = metric == Metric::hk ? kappa : 1.0;
  DiscreteMeasure ref = rescale_domain(mu0, scale);
  const int n = static_cast<int>(samples.size());
  const int channels = metric == Metric::hk ? mu0.dim() + 1 : mu0.dim();

  EmbeddingMatrix emb;
  emb.reference = ref;
  emb.metric = metric;
  emb.kappa = scale;
  emb.rows.resize(n, channels * ref.size());
  std::vector<char> converged(static_cast<size_t>(n), 1);

  parallel_for_index(n, workers, [&](int i) {
    DiscreteMeasure sample = rescale_domain(samples[static_cast<size_t>(i)], scale);
    if (metric == Metric::hk) {
      Coupling pi = solve_hk(ref, sample, cfg);
      converged[static_cast<size_t>(i)] = pi.converged ? 1 : 0;
      LebesgueDecomposition decomp = barycentric_project(pi, ref, sample);
      TangentField tf = hk_log(ref, sample, decomp);
      double singular = tf.mu1_perp.total_mass();
      if (singular > 1e-6 * sample.total_mass())
        throw std::runtime_error(
            "embed_dataset: sample " + std::to_string(i) +
            " has singular mass; widen the reference measure or increase kappa");
      emb.rows.row(i) = flatten_hk(ref, tf);
    } else {
      Coupling pi = solve_w2(ref, sample, cfg);
      converged[static_cast<size_t>(i)] = pi.converged ? 1 : 0;
      W2TangentField tf = w2_log(ref, sample, pi);
      emb.rows.row(i) = flatten_w2(ref, tf);
    }
  });
  for (char c : converged) emb.all_converged &= (c != 0);
  return emb;
}

PcaResult pca(const Eigen::MatrixXd& rows) {
  const int n = static_cast<int>(rows.rows());
  if (n < 2) throw std::invalid_argument("pca: need at least 2 rows");
  PcaResult out;
  out.mean = rows.colwise().mean();
  Eigen::MatrixXd centered = rows.rowwise() - out.mean;

  // Gram trick: the covariance spectrum of an n x D matrix with n << D is
  // cheaper through the n x n Gram matrix.
  Eigen::MatrixXd gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw std::runtime_error("pca: eigensolver failed");

  double total = std::max(gram.trace(), 0.0);
  double lambda_max = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  std::vector<int> keep;
  for (int k = n - 1; k >= 0; --k) {
    double lam = eig.eigenvalues()[k];
    if (lam > 1e-12 * lambda_max && lam > 0.0) keep.push_back(k);
  }
  const int m = static_cast<int>(keep.size());
  out.modes.resize(m, rows.cols());
  out.eigenvalues.resize(m);
  out.explained_variance_ratio.resize(m);
  for (int idx = 0; idx < m; ++idx) {
    double lam = eig.eigenvalues()[keep[static_cast<size_t>(idx)]];
    Eigen::VectorXd u = eig.eigenvectors().col(keep[static_cast<size_t>(idx)]);
    Eigen::RowVectorXd mode = (centered.transpose() * u).transpose() / std::sqrt(lam);
    int arg = 0;
    mode.array().abs().maxCoeff(&arg);
    if (mode[arg] < 0.0) mode = -mode;
    out.modes.row(idx) = mode;
    out.eigenvalues[idx] = lam / (n - 1);
    out.explained_variance_ratio[idx] = total > 0.0 ? lam / total : 0.0;
  }
  return out;
}

PcaResult pca(const EmbeddingMatrix& emb) { return pca(emb.rows); }

LdaResult lda(const EmbeddingMatrix& emb) {
  const int n = static_cast<int>(emb.rows.rows());
  if (static_cast<int>(emb.labels.size()) != n)
    throw std::invalid_argument("lda: labels required for every row");
  auto [c0, c1] = split_classes(emb.labels);

  // Work in an orthonormal basis of the centered data span; the regularized
  // scatter inverse applied to the mean difference stays in that span.
  Eigen::RowVectorXd mean = emb.rows.colwise().mean();
  Eigen::MatrixXd centered = emb.rows.rowwise() - mean;
  Eigen::MatrixXd gram = centered * centered.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw std::runtime_error("lda: eigensolver failed");
  double lambda_max = std::max(eig.eigenvalues().maxCoeff(), 0.0);
  std::vector<Eigen::VectorXd> basis_cols;
  for (int k = n - 1; k >= 0; --k) {
    double lam = eig.eigenvalues()[k];
    if (lam > 1e-12 * lambda_max && lam > 0.0)
      basis_cols.push_back(centered.transpose() * eig.eigenvectors().col(k) / std::sqrt(lam));
  }
  if (basis_cols.empty()) throw std::invalid_argument("lda: degenerate data");
  const int m = static_cast<int>(basis_cols.size());
  Eigen::MatrixXd B(emb.rows.cols(), m);
  for (int k = 0; k < m; ++k) B.col(k) = basis_cols[static_cast<size_t>(k)];

  Eigen::MatrixXd Z = centered * B;  // n x m coordinates
  Eigen::VectorXd m0 = Eigen::VectorXd::Zero(m), m1 = Eigen::VectorXd::Zero(m);
  for (int i : c0) m0 += Z.row(i).transpose();
  for (int i : c1) m1 += Z.row(i).transpose();
  m0 /= static_cast<double>(c0.size());
  m1 /= static_cast<double>(c1.size());

  Eigen::MatrixXd Sw = Eigen::MatrixXd::Zero(m, m);
  for (int i : c0) {
    Eigen::VectorXd d = Z.row(i).transpose() - m0;
    Sw += d * d.transpose();
  }
  for (int i : c1) {
    Eigen::VectorXd d = Z.row(i).transpose() - m1;
    Sw += d * d.transpose();
  }
  double trace = Sw.trace();
  Sw += (trace > 0.0 ? 1e-6 * trace : 1e-6) * Eigen::MatrixXd::Identity(m, m);

  Eigen::VectorXd t_sub = Sw.ldlt().solve(m1 - m0);
  if (!(t_sub.norm() > 0.0)) throw std::runtime_error("lda: vanishing discriminant direction");
  t_sub.normalize();
  if (t_sub.dot(m1 - m0) < 0.0) t_sub = -t_sub;

  LdaResult out;
  out.direction = B * t_sub;
  Eigen::VectorXd z_mid = 0.5 * (m0 + m1);
  out.offset = mean.transpose().dot(out.direction) + z_mid.dot(t_sub);
  out.projections.resize(n);
  out.predicted.resize(static_cast<size_t>(n));
  int low_label = *std::min_element(emb.labels.begin(), emb.labels.end());
  int high_label = *std::max_element(emb.labels.begin(), emb.labels.end());
  int correct = 0;
  for (int i = 0; i < n; ++i) {
    out.projections[i] = emb.rows.row(i).dot(out.direction) - out.offset;
    out.predicted[static_cast<size_t>(i)] = out.projections[i] > 0.0 ? high_label : low_label;
    if (out.predicted[static_cast<size_t>(i)] == emb.labels[static_cast<size_t>(i)]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / n;
  return out;
}

namespace {

struct BinaryCounts {
  int tp = 0, fp = 0, tn = 0, fn = 0;
};

double rank_auc(const std::vector<double>& scores, const std::vector<int>& truth,
                int positive_label) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[static_cast<size_t>(a)] < scores[static_cast<size_t>(b)]; });
  // midrank handling for tied scores
  std::vector<double> ranks(scores.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j + 1 < order.size() &&
           scores[static_cast<size_t>(order[j + 1])] == scores[static_cast<size_t>(order[i])])
      ++j;
    double r = 0.5 * (i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[static_cast<size_t>(order[k])] = r;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  int np = 0, nn = 0;
  for (size_t k = 0; k < scores.size(); ++k) {
    if (truth[k] == positive_label) {
      pos_rank_sum += ranks[k];
      ++np;
    } else {
      ++nn;
    }
  }
  if (np == 0 || nn == 0) return 0.5;
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (static_cast<double>(np) * nn);
}

}  // namespace

KnnMetrics knn_classify(const EmbeddingMatrix& emb, int k, KnnProtocol protocol,
                        double train_fraction, unsigned seed) {
  const int n = static_cast<int>(emb.rows.rows());
  if (static_cast<int>(emb.labels.size()) != n)
    throw std::invalid_argument("knn_classify: labels required for every row");
  if (k < 1) throw std::invalid_argument("knn_classify: k must be >= 1");
  if (protocol == KnnProtocol::leave_one_out && k >= n)
    throw std::invalid_argument("knn_classify: k >= n in leave-one-out");

  std::vector<int> train, test;
  if (protocol == KnnProtocol::leave_one_out) {
    test.resize(static_cast<size_t>(n));
    std::iota(test.begin(), test.end(), 0);
  } else {
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    int n_train = std::max(1, static_cast<int>(std::lround(train_fraction * n)));
    n_train = std::min(n_train, n - 1);
    train.assign(order.begin(), order.begin() + n_train);
    test.assign(order.begin() + n_train, order.end());
    if (k > n_train) throw std::invalid_argument("knn_classify: k exceeds training set size");
  }

  int positive_label = *std::max_element(emb.labels.begin(), emb.labels.end());
  bool binary = std::set<int>(emb.labels.begin(), emb.labels.end()).size() == 2;

  BinaryCounts counts;
  int correct = 0;
  std::vector<double> scores;
  std::vector<int> truth;
  for (int qi : test) {
    std::vector<std::pair<double, int>> neighbors;  // (distance, index)
    if (protocol == KnnProtocol::leave_one_out) {
      for (int j = 0; j < n; ++j)
        if (j != qi) neighbors.emplace_back((emb.rows.row(qi) - emb.rows.row(j)).norm(), j);
    } else {
      for (int j : train) neighbors.emplace_back((emb.rows.row(qi) - emb.rows.row(j)).norm(), j);
    }
    int kk = std::min<int>(k, static_cast<int>(neighbors.size()));
    std::partial_sort(neighbors.begin(), neighbors.begin() + kk, neighbors.end());

    // vote; ties resolved by smaller distance sum, then by label order
    std::map<int, std::pair<int, double>> votes;  // label -> (count, distance sum)
    for (int t = 0; t < kk; ++t) {
      auto& v = votes[emb.labels[static_cast<size_t>(neighbors[static_cast<size_t>(t)].second)]];
      v.first += 1;
      v.second += neighbors[static_cast<size_t>(t)].first;
    }
    int best_label = 0;
    int best_count = -1;
    double best_dist = 0.0;
    for (const auto& [label, v] : votes) {
      if (v.first > best_count ||
          (v.first == best_count && (v.second < best_dist ||
                                     (v.second == best_dist && label < best_label)))) {
        best_label = label;
        best_count = v.first;
        best_dist = v.second;
      }
    }

    int truth_label = emb.labels[static_cast<size_t>(qi)];
    if (best_label == truth_label) ++correct;
    if (binary) {
      bool predicted_pos = best_label == positive_label;
      bool is_pos = truth_label == positive_label;
      counts.tp += predicted_pos && is_pos;
      counts.fp += predicted_pos && !is_pos;
      counts.tn += !predicted_pos && !is_pos;
      counts.fn += !predicted_pos && is_pos;
      int pos_votes = votes.count(positive_label) ? votes[positive_label].first : 0;
      scores.push_back(static_cast<double>(pos_votes) / kk);
      truth.push_back(truth_label);
    }
  }

  KnnMetrics out;
  out.accuracy = test.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test.size());
  if (binary) {
    out.tpr = counts.tp + counts.fn > 0 ? static_cast<double>(counts.tp) / (counts.tp + counts.fn)
                                        : 0.0;
    out.fpr = counts.fp + counts.tn > 0 ? static_cast<double>(counts.fp) / (counts.fp + counts.tn)
                                        : 0.0;
    out.auc = rank_auc(scores, truth, positive_label);
  } else {
    out.tpr = out.fpr = out.auc = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

DiscreteMeasure exp_along_mode(const EmbeddingMatrix& emb, const PcaResult& p, int mode_index,
                               double s, const GridSpec& grid) {
  if (mode_index < 0 || mode_index >= p.modes.rows())
    throw std::invalid_argument("exp_along_mode: mode index out of range");
  Eigen::RowVectorXd row = p.mean + s * p.modes.row(mode_index);
  DiscreteMeasure cloud(emb.reference.dim());
  if (emb.metric == Metric::hk) {
    TangentField tf = unflatten_hk(emb.reference, row);
    // An s beyond the Exp domain is clamped to alpha0 = -2 (full destruction).
    tf.alpha0 = tf.alpha0.cwiseMax(-2.0);
    for (int i = 0; i < tf.alpha0.size(); ++i)
      if (tf.alpha0[i] <= -2.0) tf.v0.row(i).setZero();
    cloud = hk_exp(emb.reference, tf);
  } else {
    W2TangentField tf = unflatten_w2(emb.reference, row);
    cloud = w2_exp(emb.reference, tf);
  }
  if (cloud.size() == 0) return cloud;
  DiscreteMeasure unscaled = rescale_domain(cloud, 1.0 / emb.kappa);
  return rasterize(unscaled, grid);
}

}  // namespace hklin
