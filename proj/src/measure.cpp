#include "hklin/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hklin {

namespace {

BoundingBox box_of_points(const Eigen::MatrixXd& pts) {
  BoundingBox box;
  if (pts.rows() == 0) {
    box.lo = Eigen::VectorXd::Zero(pts.cols());
    box.hi = Eigen::VectorXd::Zero(pts.cols());
    return box;
  }
  box.lo = pts.colwise().minCoeff().transpose();
  box.hi = pts.colwise().maxCoeff().transpose();
  return box;
}

void validate_measure(const Eigen::MatrixXd& pts, const Eigen::VectorXd& masses,
                      const BoundingBox& box) {
  if (pts.rows() != masses.size())
    throw std::invalid_argument("DiscreteMeasure: points/masses length mismatch");
  if (!pts.allFinite()) throw std::invalid_argument("DiscreteMeasure: non-finite coordinate");
  if (!masses.allFinite()) throw std::invalid_argument("DiscreteMeasure: non-finite mass");
  if (masses.size() > 0 && masses.minCoeff() < 0.0)
    throw std::invalid_argument("DiscreteMeasure: negative mass");
  if (box.lo.size() != pts.cols() || box.hi.size() != pts.cols())
    throw std::invalid_argument("DiscreteMeasure: domain box dimension mismatch");
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    for (Eigen::Index k = 0; k < pts.cols(); ++k) {
      if (pts(i, k) < box.lo[k] - 1e-12 || pts(i, k) > box.hi[k] + 1e-12)
        throw std::invalid_argument("DiscreteMeasure: point outside domain box");
    }
  }
}

double parse_double(const std::string& tok, const std::string& context) {
  try {
    size_t pos = 0;
    double v = std::stod(tok, &pos);
    while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
    if (pos != tok.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("parse failure in " + context + ": '" + tok + "'");
  }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string tok;
  std::stringstream ss(line);
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

bool BoundingBox::contains(const Eigen::VectorXd& p, double slack) const {
  for (Eigen::Index k = 0; k < lo.size(); ++k)
    if (p[k] < lo[k] - slack || p[k] > hi[k] + slack) return false;
  return true;
}

DiscreteMeasure::DiscreteMeasure(int dim)
    : dim_(dim), points_(0, dim), masses_(0) {
  box_.lo = Eigen::VectorXd::Zero(dim);
  box_.hi = Eigen::VectorXd::Zero(dim);
}

DiscreteMeasure::DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd masses)
    : dim_(static_cast<int>(points.cols())),
      points_(std::move(points)),
      masses_(std::move(masses)),
      box_(box_of_points(points_)) {
  validate_measure(points_, masses_, box_);
}

DiscreteMeasure::DiscreteMeasure(Eigen::MatrixXd points, Eigen::VectorXd masses, BoundingBox box)
    : dim_(static_cast<int>(points.cols())),
      points_(std::move(points)),
      masses_(std::move(masses)),
      box_(std::move(box)) {
  validate_measure(points_, masses_, box_);
}

BoundingBox GridSpec::bounding_box() const {
  BoundingBox box;
  box.lo = Eigen::VectorXd(2);
  box.hi = Eigen::VectorXd(2);
  box.lo << origin[0], origin[1];
  box.hi << origin[0] + (cols - 1) * spacing[0], origin[1] + (rows - 1) * spacing[1];
  return box;
}

void GridSpec::validate() const {
  if (rows < 1 || cols < 1) throw std::invalid_argument("GridSpec: rows/cols must be >= 1");
  if (!(spacing[0] > 0.0) || !(spacing[1] > 0.0))
    throw std::invalid_argument("GridSpec: spacing must be positive");
  if (!origin.allFinite() || !spacing.allFinite())
    throw std::invalid_argument("GridSpec: non-finite geometry");
}

DiscreteMeasure load_measure(const std::string& path, MeasureFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);

  if (format == MeasureFormat::csv_points) {
    std::string line;
    bool header_seen = false;
    std::vector<Eigen::Vector2d> pts;
    std::vector<double> masses;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string t = trim(line);
      if (t.empty()) continue;
      if (t[0] == '#') continue;
      if (!header_seen) {
        if (t != "x,y,mass")
          throw std::runtime_error(path + ": expected header 'x,y,mass', got '" + t + "'");
        header_seen = true;
        continue;
      }
      auto toks = split_csv(t);
      if (toks.size() != 3)
        throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 3 columns");
      double x = parse_double(toks[0], path);
      double y = parse_double(toks[1], path);
      double m = parse_double(toks[2], path);
      if (m < 0.0) throw std::runtime_error(path + ": negative mass");
      if (m == 0.0) continue;
      pts.emplace_back(x, y);
      masses.push_back(m);
    }
    if (!header_seen) throw std::runtime_error(path + ": missing 'x,y,mass' header");
    if (pts.empty()) throw std::runtime_error(path + ": EmptyMeasure (no positive-mass points)");
    Eigen::MatrixXd P(static_cast<Eigen::Index>(pts.size()), 2);
    Eigen::VectorXd M(static_cast<Eigen::Index>(pts.size()));
    for (size_t i = 0; i < pts.size(); ++i) {
      P.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
      M[static_cast<Eigen::Index>(i)] = masses[i];
    }
    return DiscreteMeasure(std::move(P), std::move(M));
  }

  // csv_grid
  GridSpec grid = peek_grid(path);
  std::string line;
  std::vector<double> values;
  values.reserve(static_cast<size_t>(grid.node_count()));
  bool geometry_seen = false;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      if (t.rfind("#grid", 0) == 0) geometry_seen = true;
      continue;
    }
    if (!geometry_seen) throw std::runtime_error(path + ": data before '#grid' geometry line");
    for (const auto& tok : split_csv(t)) values.push_back(parse_double(tok, path));
  }
  if (static_cast<int>(values.size()) != grid.node_count())
    throw std::runtime_error(path + ": expected " + std::to_string(grid.node_count()) +
                             " grid values, got " + std::to_string(values.size()));
  std::vector<int> nz;
  for (int i = 0; i < grid.node_count(); ++i) {
    if (values[static_cast<size_t>(i)] < 0.0) throw std::runtime_error(path + ": negative mass");
    if (values[static_cast<size_t>(i)] > 0.0) nz.push_back(i);
  }
  if (nz.empty()) throw std::runtime_error(path + ": EmptyMeasure (all-zero grid)");
  Eigen::MatrixXd P(static_cast<Eigen::Index>(nz.size()), 2);
  Eigen::VectorXd M(static_cast<Eigen::Index>(nz.size()));
  for (size_t i = 0; i < nz.size(); ++i) {
    int r = nz[i] / grid.cols;
    int c = nz[i] % grid.cols;
    P.row(static_cast<Eigen::Index>(i)) = grid.node(r, c).transpose();
    M[static_cast<Eigen::Index>(i)] = values[static_cast<size_t>(nz[i])];
  }
  return DiscreteMeasure(std::move(P), std::move(M), grid.bounding_box());
}

GridSpec peek_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    if (t.rfind("#grid", 0) == 0) {
      std::stringstream ss(t.substr(5));
      GridSpec g;
      double x0, y0, dx, dy;
      if (!(ss >> g.rows >> g.cols >> x0 >> y0 >> dx >> dy))
        throw std::runtime_error(path + ": malformed '#grid rows cols x0 y0 dx dy' line");
      g.origin = {x0, y0};
      g.spacing = {dx, dy};
      g.validate();
      return g;
    }
    if (t[0] == '#') continue;
    break;
  }
  throw std::runtime_error(path + ": missing '#grid' geometry line");
}

void save_csv_points(const DiscreteMeasure& mu, const std::string& path,
                     const std::string& comment) {
  if (mu.dim() != 2) throw std::invalid_argument("save_csv_points: only 2-d measures");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "x,y,mass\n";
  for (int i = 0; i < mu.size(); ++i) {
    out << format_double(mu.points()(i, 0)) << "," << format_double(mu.points()(i, 1)) << ","
        << format_double(mu.mass(i)) << "\n";
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

namespace {

Eigen::MatrixXd rasterize_dense(const DiscreteMeasure& mu, const GridSpec& grid) {
  grid.validate();
  if (mu.dim() != 2) throw std::invalid_argument("rasterize: only 2-d measures");
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(grid.rows, grid.cols);
  for (int i = 0; i < mu.size(); ++i) {
    double gx = (mu.points()(i, 0) - grid.origin[0]) / grid.spacing[0];
    double gy = (mu.points()(i, 1) - grid.origin[1]) / grid.spacing[1];
    if (gx < -1.0 || gx > grid.cols || gy < -1.0 || gy > grid.rows)
      throw std::invalid_argument("rasterize: point farther than one spacing outside grid");
    gx = std::clamp(gx, 0.0, static_cast<double>(grid.cols - 1));
    gy = std::clamp(gy, 0.0, static_cast<double>(grid.rows - 1));
    int c0 = std::min(static_cast<int>(std::floor(gx)), std::max(grid.cols - 2, 0));
    int r0 = std::min(static_cast<int>(std::floor(gy)), std::max(grid.rows - 2, 0));
    double fx = gx - c0;
    double fy = gy - r0;
    int c1 = std::min(c0 + 1, grid.cols - 1);
    int r1 = std::min(r0 + 1, grid.rows - 1);
    double m = mu.mass(i);
    img(r0, c0) += m * (1 - fx) * (1 - fy);
    img(r0, c1) += m * fx * (1 - fy);
    img(r1, c0) += m * (1 - fx) * fy;
    img(r1, c1) += m * fx * fy;
  }
  return img;
}

DiscreteMeasure from_dense(const Eigen::MatrixXd& img, const GridSpec& grid) {
  std::vector<int> nz;
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      if (img(r, c) > 0.0) nz.push_back(r * grid.cols + c);
  Eigen::MatrixXd P(static_cast<Eigen::Index>(nz.size()), 2);
  Eigen::VectorXd M(static_cast<Eigen::Index>(nz.size()));
  for (size_t i = 0; i < nz.size(); ++i) {
    int r = nz[i] / grid.cols;
    int c = nz[i] % grid.cols;
    P.row(static_cast<Eigen::Index>(i)) = grid.node(r, c).transpose();
    M[static_cast<Eigen::Index>(i)] = img(r, c);
  }
  if (nz.empty()) return DiscreteMeasure(2);
  return DiscreteMeasure(std::move(P), std::move(M), grid.bounding_box());
}

}  // namespace

void save_csv_grid(const DiscreteMeasure& mu, const GridSpec& grid, const std::string& path,
                   const std::string& comment) {
  Eigen::MatrixXd img = rasterize_dense(mu, grid);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "#grid " << grid.rows << " " << grid.cols << " " << format_double(grid.origin[0]) << " "
      << format_double(grid.origin[1]) << " " << format_double(grid.spacing[0]) << " "
      << format_double(grid.spacing[1]) << "\n";
  if (!comment.empty()) out << "# " << comment << "\n";
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      if (c) out << ",";
      out << format_double(img(r, c));
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

void save_pgm(const DiscreteMeasure& mu, const GridSpec& grid, const std::string& path) {
  Eigen::MatrixXd img = rasterize_dense(mu, grid);
  double peak = img.maxCoeff();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "P2\n" << grid.cols << " " << grid.rows << "\n255\n";
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      int v = peak > 0.0 ? static_cast<int>(std::lround(255.0 * img(r, c) / peak)) : 0;
      out << v << (c + 1 == grid.cols ? "\n" : " ");
    }
  }
  if (!out) throw std::runtime_error("write failure: " + path);
}

DiscreteMeasure normalize(const DiscreteMeasure& mu) {
  double total = mu.total_mass();
  if (!(total > 0.0)) throw std::invalid_argument("normalize: zero total mass");
  return DiscreteMeasure(mu.points(), mu.masses() / total, mu.domain_box());
}

DiscreteMeasure rescale_domain(const DiscreteMeasure& mu, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("rescale_domain: kappa must be positive");
  BoundingBox box{mu.domain_box().lo / kappa, mu.domain_box().hi / kappa};
  return DiscreteMeasure(mu.points() / kappa, mu.masses(), std::move(box));
}

DiscreteMeasure rasterize(const DiscreteMeasure& mu, const GridSpec& grid) {
  return from_dense(rasterize_dense(mu, grid), grid);
}

DiscreteMeasure drop_zero_masses(const DiscreteMeasure& mu) {
  std::vector<int> keep;
  for (int i = 0; i < mu.size(); ++i)
    if (mu.mass(i) > 0.0) keep.push_back(i);
  Eigen::MatrixXd P(static_cast<Eigen::Index>(keep.size()), mu.dim());
  Eigen::VectorXd M(static_cast<Eigen::Index>(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i) {
    P.row(static_cast<Eigen::Index>(i)) = mu.points().row(keep[i]);
    M[static_cast<Eigen::Index>(i)] = mu.mass(keep[i]);
  }
  if (keep.empty()) return DiscreteMeasure(mu.dim());
  return DiscreteMeasure(std::move(P), std::move(M), mu.domain_box());
}

DiscreteMeasure uniform_measure(const GridSpec& grid) {
  grid.validate();
  Eigen::MatrixXd P(grid.node_count(), 2);
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c) P.row(r * grid.cols + c) = grid.node(r, c).transpose();
  return DiscreteMeasure(std::move(P), Eigen::VectorXd::Ones(grid.node_count()),
                         grid.bounding_box());
}

DiscreteMeasure gen_ellipses(double p1, double p2, int resolution) {
  if (resolution < 16) throw std::invalid_argument("gen_ellipses: resolution must be >= 16");
  if (p1 < -1.0 || p1 > 1.0 || p2 < -1.0 || p2 > 1.0)
    throw std::invalid_argument("gen_ellipses: parameters must lie in [-1,1]");

  double scale = resolution / 64.0;
  // Left ellipse grows with p2 and is elongated horizontally for p1 > 0;
  // the right ellipse takes the opposite role in both parameters.
  double q = 1.0 + 0.35 * p1;
  double ra = 7.0 * (1.0 + 0.25 * p2 / 7.0) * scale;
  double rb = 7.0 * (1.0 - 0.25 * p2 / 7.0) * scale;
  Eigen::Vector2d ca(16.0 * scale, 32.0 * scale);
  Eigen::Vector2d cb(48.0 * scale, 32.0 * scale);
  double ax = ra * q, ay = ra / q;  // left: horizontal elongation for q > 1
  double bx = rb / q, by = rb * q;  // right: vertical elongation for q > 1

  auto inside = [](double x, double y, const Eigen::Vector2d& cen, double sx, double sy) {
    double u = (x - cen[0]) / sx;
    double v = (y - cen[1]) / sy;
    return u * u + v * v <= 1.0;
  };

  const int ss = 4;  // supersampling factor per axis
  GridSpec grid{resolution, resolution, {0.0, 0.0}, {1.0, 1.0}};
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(resolution, resolution);
  for (int r = 0; r < resolution; ++r) {
    for (int c = 0; c < resolution; ++c) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy) {
        for (int sx = 0; sx < ss; ++sx) {
          double x = c - 0.5 + (sx + 0.5) / ss;
          double y = r - 0.5 + (sy + 0.5) / ss;
          if (inside(x, y, ca, ax, ay) || inside(x, y, cb, bx, by)) ++hits;
        }
      }
      img(r, c) = static_cast<double>(hits) / (ss * ss);
    }
  }
  DiscreteMeasure out = from_dense(img, grid);
  if (out.size() == 0) throw std::runtime_error("gen_ellipses: degenerate empty image");
  return out;
}

}  // namespace hklin
