#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace hklin {

using Point = Eigen::VectorXd;

struct BoundingBox {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  bool contains(const Eigen::VectorXd& p, double slack = 0.0) const;
};

/// A non-negative measure given as a weighted point cloud on a box domain.
/// Values are immutable after construction and safe to share across threads.
class DiscreteMeasure {
 public:
  DiscreteMeasure() : DiscreteMeasure(0) {}
  /// Empty measure of the given dimension (intermediate results only;
  /// file loading rejects empty inputs).
  explicit DiscreteMeasure(int dim);
  DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd masses);
  DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd masses, BoundingBox box);

  int size() const { return static_cast<int>(points_.rows()); }
  int dim() const { return dim_; }
  const Eigen::MatrixXd& points() const { return points_; }
  const Eigen::VectorXd& masses() const { return masses_; }
  const BoundingBox& domain_box() const { return box_; }
  Point point(int i) const { return points_.row(i).transpose(); }
  double mass(int i) const { return masses_[i]; }
  double total_mass() const { return masses_.sum(); }

 private:
  int dim_;
  Eigen::MatrixXd points_;  // size() x dim()
  Eigen::VectorXd masses_;  // size(), entries >= 0
  BoundingBox box_;
};

/// Regular 2-d grid of nodes; node (r, c) sits at origin + (c*dx, r*dy).
struct GridSpec {
  int rows = 0;
  int cols = 0;
  Eigen::Vector2d origin{0.0, 0.0};
  Eigen::Vector2d spacing{1.0, 1.0};

  int node_count() const { return rows * cols; }
  Eigen::Vector2d node(int r, int c) const {
    return {origin[0] + c * spacing[0], origin[1] + r * spacing[1]};
  }
  BoundingBox bounding_box() const;
  void validate() const;
};

enum class MeasureFormat { csv_points, csv_grid };

/// csv_points: header "x,y,mass", one point per row.
/// csv_grid: geometry line "#grid rows cols x0 y0 dx dy", then rows x cols masses.
/// Zero-mass entries are dropped; all-zero input is an error.
DiscreteMeasure load_measure(const std::string& path, MeasureFormat format);

/// Reads the grid geometry line of a csv_grid file without loading masses.
GridSpec peek_grid(const std::string& path);

void save_csv_points(const DiscreteMeasure& mu, const std::string& path,
                     const std::string& comment = "");
/// Rasterizes onto `grid` and writes the dense mass matrix.
void save_csv_grid(const DiscreteMeasure& mu, const GridSpec& grid, const std::string& path,
                   const std::string& comment = "");
/// 8-bit grayscale render (ASCII PGM), masses scaled by the grid maximum.
void save_pgm(const DiscreteMeasure& mu, const GridSpec& grid, const std::string& path);

/// Rescales total mass to 1; point locations unchanged. Errors on zero mass.
DiscreteMeasure normalize(const DiscreteMeasure& mu);

/// Divides every coordinate by kappa; masses unchanged. The length-scale
/// convention is HK_kappa(mu0, mu1)^2 = kappa^2 * HK_1(mu0/kappa, mu1/kappa)^2.
DiscreteMeasure rescale_domain(const DiscreteMeasure& mu, double kappa);

/// Splats each point onto its surrounding grid nodes with bilinear weights.
/// Points within one spacing outside the grid are clamped to the boundary;
/// anything farther out is an error. Total mass is preserved.
DiscreteMeasure rasterize(const DiscreteMeasure& mu, const GridSpec& grid);

DiscreteMeasure drop_zero_masses(const DiscreteMeasure& mu);

/// Uniform unit-mass-per-node measure on the grid nodes.
DiscreteMeasure uniform_measure(const GridSpec& grid);

/// Two-ellipse test image on a resolution x resolution grid (unit spacing).
/// p1 in [-1,1] elongates one ellipse horizontally and the other vertically
/// (roles swap for p1 < 0); p2 in [-1,1] grows the left ellipse and shrinks
/// the right one. Boundaries are anti-aliased by 4x supersampling.
DiscreteMeasure gen_ellipses(double p1, double p2, int resolution);

}  // namespace hklin
