#pragma once

#include <vector>

#include "hklin/measure.hpp"
#include "hklin/solver.hpp"
#include "hklin/tangent.hpp"

namespace hklin {

enum class Metric { hk, w2 };

/// Stacked g-weighted tangent vectors of a dataset. Rows are flattened
/// channel blocks scaled by sqrt of the reference masses, so the Euclidean
/// dot product of two rows equals the tangent inner product. For HK the
/// channels are (vx, vy, alpha/2); for W2 just (vx, vy). All coordinates
/// live at the solver scale (domains divided by kappa).
struct EmbeddingMatrix {
  Eigen::MatrixXd rows;       // n_samples x channels*|supp reference|
  std::vector<int> labels;    // empty or one label per row
  DiscreteMeasure reference;  // kappa-rescaled reference measure
  Metric metric = Metric::hk;
  double kappa = 1.0;
  bool all_converged = true;
};

struct PcaResult {
  Eigen::MatrixXd modes;                     // one orthonormal mode per row
  Eigen::VectorXd eigenvalues;               // non-increasing, >= 0
  Eigen::RowVectorXd mean;
  Eigen::VectorXd explained_variance_ratio;  // sums to 1
};

struct LdaResult {
  Eigen::VectorXd direction;  // unit vector, oriented from class 0 to class 1
  double offset = 0.0;        // <z, direction> for the midpoint z of the means
  Eigen::VectorXd projections;
  std::vector<int> predicted;
  double accuracy = 0.0;
};

enum class KnnProtocol { leave_one_out, train_test };

struct KnnMetrics {
  double accuracy = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double auc = 0.0;
};

/// Pointwise average of the samples after rasterization to `grid`.
DiscreteMeasure linear_mean(const std::vector<DiscreteMeasure>& samples, const GridSpec& grid);

/// Solves one transport problem per sample (in parallel) and stacks the
/// flattened logarithmic maps. Samples should be normalized and the reference
/// wide enough that no singular mass appears; a sample whose singular part
/// exceeds 1e-6 of its mass is an error asking for a wider reference.
EmbeddingMatrix embed_dataset(const DiscreteMeasure& mu0,
                              const std::vector<DiscreteMeasure>& samples, Metric metric,
                              double kappa, const SolverConfig& cfg, int workers = 0);

/// Row <-> tangent-field conversions that realize the g-weighting.
Eigen::RowVectorXd flatten_hk(const DiscreteMeasure& mu0, const TangentField& tf);
Eigen::RowVectorXd flatten_w2(const DiscreteMeasure& mu0, const W2TangentField& tf);
TangentField unflatten_hk(const DiscreteMeasure& mu0, const Eigen::RowVectorXd& row);
W2TangentField unflatten_w2(const DiscreteMeasure& mu0, const Eigen::RowVectorXd& row);

/// PCA of the centered rows; deterministic sign (largest-magnitude
/// coordinate of each mode is positive).
PcaResult pca(const EmbeddingMatrix& emb);
PcaResult pca(const Eigen::MatrixXd& rows);

/// Two-class Fisher discriminant with scatter regularized by
/// 1e-6 * trace * identity.
LdaResult lda(const EmbeddingMatrix& emb);

KnnMetrics knn_classify(const EmbeddingMatrix& emb, int k, KnnProtocol protocol,
                        double train_fraction = 0.5, unsigned seed = 0);

/// Evaluates Exp at mean + s * mode (inverting the g-weighting), maps the
/// result back to the original length scale and rasterizes onto `grid`.
/// An s that would push alpha0 below -2 is clamped to the domain boundary.
DiscreteMeasure exp_along_mode(const EmbeddingMatrix& emb, const PcaResult& p, int mode_index,
                               double s, const GridSpec& grid);

}  // namespace hklin
