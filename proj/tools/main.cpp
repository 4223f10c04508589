// Command line front end: dataset generation, distances, embeddings,
// PCA/LDA/kNN experiments, geodesic rendering and kappa sweeps.
//
// Exit codes: 0 ok, 1 usage, 2 solver warning, 3 I/O failure.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "hklin/analysis.hpp"
#include "hklin/geodesic.hpp"
#include "hklin/measure.hpp"
#include "hklin/solver.hpp"
#include "hklin/tangent.hpp"

namespace fs = std::filesystem;
using namespace hklin;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitSolverWarning = 2;
constexpr int kExitIo = 3;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ExperimentConfig {
  std::string metric = "hk";
  double kappa = 1.0;
  std::string reference = "linear_mean";
  std::string reference_file;
  std::string grid_text;
  SolverConfig solver;
  unsigned seed = 0;
  int workers = 0;
  bool pgm = false;

  Metric metric_enum() const { return metric == "w2" ? Metric::w2 : Metric::hk; }

  void validate() const {
    if (metric != "hk" && metric != "w2")
      throw std::invalid_argument("config: metric must be hk or w2");
    if (!(kappa > 0.0)) throw std::invalid_argument("config: kappa must be positive");
    if (reference != "linear_mean" && reference != "uniform" && reference != "file")
      throw std::invalid_argument("config: reference must be linear_mean, uniform or file");
    if (reference == "file" && reference_file.empty())
      throw std::invalid_argument("config: reference=file requires --reference-file");
    solver.validate();
  }
};

void add_solver_flags(CLI::App* cmd, ExperimentConfig& cfg) {
  cmd->add_option("--epsilon-start", cfg.solver.epsilon_start,
                  "Initial entropic regularization (0 = auto)");
  cmd->add_option("--epsilon-final", cfg.solver.epsilon_final, "Final entropic regularization");
  cmd->add_option("--epsilon-decay", cfg.solver.epsilon_decay, "Annealing decay in (0,1)");
  cmd->add_option("--max-iters", cfg.solver.max_iters_per_eps, "Iteration cap per epsilon");
  cmd->add_option("--tol", cfg.solver.tol_marginal, "Dual fixed-point tolerance");
  cmd->add_option("--solver-config", [&cfg](const std::vector<std::string>& vals) {
    cfg.solver = parse_solver_config(vals.front());
    return true;
  }, "Load solver settings from a key=value file");
}

GridSpec parse_grid_text(const std::string& text) {
  GridSpec g;
  auto x = text.find('x');
  if (x == std::string::npos) throw std::invalid_argument("config: --grid expects ROWSxCOLS");
  g.rows = std::stoi(text.substr(0, x));
  g.cols = std::stoi(text.substr(x + 1));
  g.validate();
  return g;
}

MeasureFormat detect_format(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#grid", 0) == 0) return MeasureFormat::csv_grid;
    if (line.empty() || line[0] == '#') continue;
    return MeasureFormat::csv_points;
  }
  throw std::runtime_error(path + ": empty file");
}

DiscreteMeasure load_auto(const std::string& path, const std::string& format) {
  if (format == "csv_points") return load_measure(path, MeasureFormat::csv_points);
  if (format == "csv_grid") return load_measure(path, MeasureFormat::csv_grid);
  return load_measure(path, detect_format(path));
}

struct ManifestEntry {
  std::string file;
  double p1 = 0.0, p2 = 0.0;
  int label = 0;
};

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line.rfind("file,p1,p2,label", 0) != 0)
        throw std::runtime_error(path + ": expected header 'file,p1,p2,label'");
      header = true;
      continue;
    }
    std::stringstream ss(line);
    std::string file, p1, p2, label;
    if (!std::getline(ss, file, ',') || !std::getline(ss, p1, ',') ||
        !std::getline(ss, p2, ',') || !std::getline(ss, label, ','))
      throw std::runtime_error(path + ": malformed manifest row '" + line + "'");
    ManifestEntry e;
    e.file = (base / file).string();
    e.p1 = std::stod(p1);
    e.p2 = std::stod(p2);
    e.label = std::stoi(label);
    out.push_back(e);
  }
  if (out.empty()) throw std::runtime_error(path + ": empty manifest");
  return out;
}

std::string config_echo(const std::string& command, const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << "hklin " << command << " metric=" << cfg.metric << " kappa=" << fmt(cfg.kappa)
     << " reference=" << cfg.reference << " epsilon_final=" << fmt(cfg.solver.epsilon_final)
     << " epsilon_decay=" << fmt(cfg.solver.epsilon_decay)
     << " tol_marginal=" << fmt(cfg.solver.tol_marginal) << " seed=" << cfg.seed;
  return os.str();
}

// ---------------------------------------------------------------------------
// embedding file I/O

void write_embedding(const EmbeddingMatrix& emb, const GridSpec& grid,
                     const ExperimentConfig& cfg, const std::string& out_path) {
  fs::path out(out_path);
  fs::path ref_file = out;
  ref_file.replace_extension(".reference.csv");
  // the reference is stored at the original scale, kappa recorded alongside
  save_csv_points(rescale_domain(emb.reference, 1.0 / emb.kappa), ref_file.string(),
                  "reference measure");

  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write file: " + out_path);
  os << "# " << config_echo("embed", cfg) << " metric_enum=" << (emb.metric == Metric::hk ? "hk" : "w2")
     << " scale=" << fmt(emb.kappa) << " reference_file=" << ref_file.filename().string()
     << " rows=" << grid.rows << " cols=" << grid.cols << " x0=" << fmt(grid.origin[0])
     << " y0=" << fmt(grid.origin[1]) << " dx=" << fmt(grid.spacing[0])
     << " dy=" << fmt(grid.spacing[1]) << " n=" << emb.rows.rows() << " dim=" << emb.rows.cols()
     << " converged=" << (emb.all_converged ? 1 : 0) << "\n";
  for (Eigen::Index i = 0; i < emb.rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < emb.rows.cols(); ++j) os << fmt(emb.rows(i, j)) << ",";
    os << (i < static_cast<Eigen::Index>(emb.labels.size()) ? emb.labels[static_cast<size_t>(i)]
                                                            : 0)
       << "\n";
  }
  if (!os) throw std::runtime_error("write failure: " + out_path);
}

struct EmbeddingFile {
  EmbeddingMatrix emb;
  GridSpec grid;
};

EmbeddingFile load_embedding(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open embedding: " + path);
  std::string line;
  if (!std::getline(in, line) || line.empty() || line[0] != '#')
    throw std::runtime_error(path + ": missing metadata header");
  std::map<std::string, std::string> meta;
  {
    std::stringstream ss(line.substr(1));
    std::string tok;
    while (ss >> tok) {
      auto eq = tok.find('=');
      if (eq != std::string::npos) meta[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
  }
  auto need = [&](const std::string& key) {
    auto it = meta.find(key);
    if (it == meta.end()) throw std::runtime_error(path + ": metadata missing " + key);
    return it->second;
  };

  EmbeddingFile out;
  out.emb.metric = need("metric_enum") == "w2" ? Metric::w2 : Metric::hk;
  out.emb.kappa = std::stod(need("scale"));
  out.grid.rows = std::stoi(need("rows"));
  out.grid.cols = std::stoi(need("cols"));
  out.grid.origin = {std::stod(need("x0")), std::stod(need("y0"))};
  out.grid.spacing = {std::stod(need("dx")), std::stod(need("dy"))};
  int n = std::stoi(need("n"));
  int dim = std::stoi(need("dim"));

  fs::path ref = fs::path(path).parent_path() / need("reference_file");
  DiscreteMeasure reference = load_measure(ref.string(), MeasureFormat::csv_points);
  out.emb.reference = rescale_domain(reference, out.emb.kappa);

  out.emb.rows.resize(n, dim);
  out.emb.labels.resize(static_cast<size_t>(n));
  int row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (row >= n) throw std::runtime_error(path + ": more rows than declared");
    std::stringstream ss(line);
    std::string tok;
    for (int j = 0; j < dim; ++j) {
      if (!std::getline(ss, tok, ',')) throw std::runtime_error(path + ": truncated row");
      out.emb.rows(row, j) = std::stod(tok);
    }
    if (!std::getline(ss, tok, ',')) throw std::runtime_error(path + ": missing label");
    out.emb.labels[static_cast<size_t>(row)] = std::stoi(tok);
    ++row;
  }
  if (row != n) throw std::runtime_error(path + ": fewer rows than declared");
  return out;
}

// ---------------------------------------------------------------------------
// dataset loading shared by embed / kappa-sweep

struct Dataset {
  std::vector<DiscreteMeasure> samples;  // normalized
  std::vector<int> labels;
  GridSpec grid;
  DiscreteMeasure reference;  // normalized, original scale
};

Dataset load_dataset(const std::string& manifest_path, const ExperimentConfig& cfg) {
  Dataset ds;
  auto entries = load_manifest(manifest_path);
  bool grid_known = false;
  for (const auto& e : entries) {
    MeasureFormat format = detect_format(e.file);
    if (format == MeasureFormat::csv_grid && !grid_known) {
      ds.grid = peek_grid(e.file);
      grid_known = true;
    }
    ds.samples.push_back(normalize(load_measure(e.file, format)));
    ds.labels.push_back(e.label);
  }
  if (!cfg.grid_text.empty()) {
    GridSpec g = parse_grid_text(cfg.grid_text);
    if (grid_known) {
      g.origin = ds.grid.origin;
      g.spacing = ds.grid.spacing;
    } else {
      // span the union bounding box of the samples
      BoundingBox box = ds.samples.front().domain_box();
      for (const auto& s : ds.samples) {
        box.lo = box.lo.cwiseMin(s.domain_box().lo);
        box.hi = box.hi.cwiseMax(s.domain_box().hi);
      }
      g.origin = {box.lo[0], box.lo[1]};
      g.spacing = {std::max((box.hi[0] - box.lo[0]) / std::max(g.cols - 1, 1), 1e-12),
                   std::max((box.hi[1] - box.lo[1]) / std::max(g.rows - 1, 1), 1e-12)};
    }
    ds.grid = g;
    grid_known = true;
  }
  if (!grid_known)
    throw std::invalid_argument("config: --grid required for point-cloud datasets");

  if (cfg.reference == "linear_mean")
    ds.reference = normalize(linear_mean(ds.samples, ds.grid));
  else if (cfg.reference == "uniform")
    ds.reference = normalize(uniform_measure(ds.grid));
  else
    ds.reference = normalize(load_auto(cfg.reference_file, "auto"));
  return ds;
}

// ---------------------------------------------------------------------------
// commands

int cmd_distance(const std::string& file_a, const std::string& file_b,
                 const std::string& format, ExperimentConfig cfg, bool do_normalize) {
  cfg.validate();
  DiscreteMeasure a = load_auto(file_a, format);
  DiscreteMeasure b = load_auto(file_b, format);
  if (do_normalize) {
    a = normalize(a);
    b = normalize(b);
  }

  Coupling pi;
  double squared = 0.0;
  if (cfg.metric_enum() == Metric::hk) {
    DiscreteMeasure as = rescale_domain(a, cfg.kappa);
    DiscreteMeasure bs = rescale_domain(b, cfg.kappa);
    pi = solve_hk(as, bs, cfg.solver);
    squared = cfg.kappa * cfg.kappa * pi.objective_value;
  } else {
    pi = solve_w2(a, b, cfg.solver);
    squared = pi.objective_value;
  }
  double tv0 = (pi.row_marginal.masses() - a.masses()).cwiseAbs().sum();
  double tv1 = (pi.col_marginal.masses() - b.masses()).cwiseAbs().sum();
  std::cout << "# " << config_echo("distance", cfg) << "\n";
  std::cout << "metric=" << cfg.metric << "\n";
  std::cout << "value=" << fmt(std::sqrt(std::max(squared, 0.0))) << "\n";
  std::cout << "squared=" << fmt(squared) << "\n";
  std::cout << "plan_mass=" << fmt(pi.weights.sum()) << "\n";
  std::cout << "marginal_err_0=" << fmt(tv0) << "\n";
  std::cout << "marginal_err_1=" << fmt(tv1) << "\n";
  std::cout << "converged=" << (pi.converged ? 1 : 0) << "\n";
  return pi.converged ? kExitOk : kExitSolverWarning;
}

int cmd_gen_ellipses(const std::string& outdir, int resolution, int count, bool pgm) {
  if (count < 2) throw std::invalid_argument("config: --count must be >= 2");
  fs::create_directories(outdir);
  GridSpec grid{resolution, resolution, {0, 0}, {1, 1}};
  std::ofstream manifest(fs::path(outdir) / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write manifest in " + outdir);
  manifest << "# hklin gen-ellipses resolution=" << resolution << " count=" << count << "\n";
  manifest << "file,p1,p2,label\n";
  int index = 0;
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      double p1 = -1.0 + 2.0 * i / (count - 1);
      double p2 = -1.0 + 2.0 * j / (count - 1);
      char name[64];
      std::snprintf(name, sizeof(name), "ellipses_%03d.csv", index);
      DiscreteMeasure mu = gen_ellipses(p1, p2, resolution);
      std::ostringstream comment;
      comment << "p1=" << fmt(p1) << " p2=" << fmt(p2);
      save_csv_grid(mu, grid, (fs::path(outdir) / name).string(), comment.str());
      if (pgm) {
        char pgm_name[64];
        std::snprintf(pgm_name, sizeof(pgm_name), "ellipses_%03d.pgm", index);
        save_pgm(mu, grid, (fs::path(outdir) / pgm_name).string());
      }
      manifest << name << "," << fmt(p1) << "," << fmt(p2) << "," << (p2 > 0 ? 1 : 0) << "\n";
      ++index;
    }
  }
  if (!manifest) throw std::runtime_error("write failure: manifest");
  std::cout << "wrote " << index << " images + manifest to " << outdir << "\n";
  return kExitOk;
}

int cmd_embed(const std::string& manifest, const std::string& out, ExperimentConfig cfg) {
  cfg.validate();
  Dataset ds = load_dataset(manifest, cfg);
  EmbeddingMatrix emb = embed_dataset(ds.reference, ds.samples, cfg.metric_enum(), cfg.kappa,
                                      cfg.solver, cfg.workers);
  emb.labels = ds.labels;
  write_embedding(emb, ds.grid, cfg, out);
  std::cout << "embedded " << emb.rows.rows() << " samples (dim " << emb.rows.cols() << ") -> "
            << out << "\n";
  return emb.all_converged ? kExitOk : kExitSolverWarning;
}

int cmd_pca(const std::string& embedding_path, const std::string& out_prefix, int sweep_modes,
            int sweep_steps, bool pgm) {
  EmbeddingFile ef = load_embedding(embedding_path);
  PcaResult p = pca(ef.emb);

  std::string eig_path = out_prefix + "_eigenvalues.csv";
  {
    std::ofstream os(eig_path);
    if (!os) throw std::runtime_error("cannot write file: " + eig_path);
    os << "# hklin pca source=" << fs::path(embedding_path).filename().string() << "\n";
    os << "mode,eigenvalue,explained_variance_ratio\n";
    for (Eigen::Index k = 0; k < p.eigenvalues.size(); ++k)
      os << (k + 1) << "," << fmt(p.eigenvalues[k]) << ","
         << fmt(p.explained_variance_ratio[k]) << "\n";
  }
  std::string modes_path = out_prefix + "_modes.csv";
  {
    std::ofstream os(modes_path);
    if (!os) throw std::runtime_error("cannot write file: " + modes_path);
    os << "# hklin pca modes (one mode per row, mean first)\n";
    for (Eigen::Index j = 0; j < p.mean.size(); ++j)
      os << (j ? "," : "") << fmt(p.mean[j]);
    os << "\n";
    for (Eigen::Index k = 0; k < p.modes.rows(); ++k) {
      for (Eigen::Index j = 0; j < p.modes.cols(); ++j)
        os << (j ? "," : "") << fmt(p.modes(k, j));
      os << "\n";
    }
  }

  sweep_modes = std::min<int>(sweep_modes, static_cast<int>(p.modes.rows()));
  for (int k = 0; k < sweep_modes; ++k) {
    double sigma = std::sqrt(p.eigenvalues[k]);
    for (int step = 0; step < sweep_steps; ++step) {
      double s = sweep_steps > 1 ? -sigma + 2.0 * sigma * step / (sweep_steps - 1) : 0.0;
      DiscreteMeasure img = exp_along_mode(ef.emb, p, k, s, ef.grid);
      char name[128];
      std::snprintf(name, sizeof(name), "%s_mode%d_s%d.csv", out_prefix.c_str(), k + 1, step);
      std::ostringstream comment;
      comment << "mode=" << (k + 1) << " s=" << fmt(s) << " sigma=" << fmt(sigma);
      save_csv_grid(img, ef.grid, name, comment.str());
      if (pgm) {
        std::snprintf(name, sizeof(name), "%s_mode%d_s%d.pgm", out_prefix.c_str(), k + 1, step);
        save_pgm(img, ef.grid, name);
      }
    }
  }
  double top2 = p.explained_variance_ratio.head(std::min<Eigen::Index>(2, p.explained_variance_ratio.size())).sum();
  std::cout << "modes=" << p.eigenvalues.size() << " top2_explained_variance=" << fmt(top2)
            << " -> " << eig_path << "\n";
  return kExitOk;
}

int cmd_classify(const std::string& embedding_path, const std::string& algo, int k,
                 const std::string& protocol, double train_frac, unsigned seed,
                 const std::string& out) {
  EmbeddingFile ef = load_embedding(embedding_path);
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write file: " + out);
  os << "# hklin classify algo=" << algo << " k=" << k << " protocol=" << protocol
     << " seed=" << seed << "\n";
  os << "algo,k,accuracy,tpr,fpr,auc\n";
  if (algo == "knn") {
    KnnProtocol proto = protocol == "train_test" ? KnnProtocol::train_test
                                                 : KnnProtocol::leave_one_out;
    KnnMetrics m = knn_classify(ef.emb, k, proto, train_frac, seed);
    os << "knn," << k << "," << fmt(m.accuracy) << "," << fmt(m.tpr) << "," << fmt(m.fpr) << ","
       << fmt(m.auc) << "\n";
    std::cout << "knn accuracy=" << fmt(m.accuracy) << " auc=" << fmt(m.auc) << "\n";
  } else if (algo == "lda") {
    LdaResult r = lda(ef.emb);
    // rank AUC of the projection coordinate
    std::vector<double> scores(r.projections.data(), r.projections.data() + r.projections.size());
    int positive = *std::max_element(ef.emb.labels.begin(), ef.emb.labels.end());
    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < ef.emb.labels.size(); ++i) {
      bool pred_pos = r.predicted[i] == positive;
      bool is_pos = ef.emb.labels[i] == positive;
      tp += pred_pos && is_pos;
      fp += pred_pos && !is_pos;
      tn += !pred_pos && !is_pos;
      fn += !pred_pos && is_pos;
    }
    double tpr = tp + fn > 0 ? double(tp) / (tp + fn) : 0.0;
    double fpr = fp + tn > 0 ? double(fp) / (fp + tn) : 0.0;
    // Mann-Whitney AUC via midranks
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int x, int y) { return scores[size_t(x)] < scores[size_t(y)]; });
    std::vector<double> ranks(scores.size());
    size_t i = 0;
    while (i < order.size()) {
      size_t j = i;
      while (j + 1 < order.size() && scores[size_t(order[j + 1])] == scores[size_t(order[i])]) ++j;
      for (size_t t = i; t <= j; ++t) ranks[size_t(order[t])] = 0.5 * (i + j) + 1.0;
      i = j + 1;
    }
    double pos_sum = 0.0;
    int np = 0, nn = 0;
    for (size_t t = 0; t < scores.size(); ++t) {
      if (ef.emb.labels[t] == positive) {
        pos_sum += ranks[t];
        ++np;
      } else {
        ++nn;
      }
    }
    double auc = (np > 0 && nn > 0) ? (pos_sum - np * (np + 1.0) / 2.0) / (double(np) * nn) : 0.5;
    os << "lda,-," << fmt(r.accuracy) << "," << fmt(tpr) << "," << fmt(fpr) << "," << fmt(auc)
       << "\n";
    std::cout << "lda accuracy=" << fmt(r.accuracy) << " auc=" << fmt(auc) << "\n";
  } else {
    throw std::invalid_argument("config: --algo must be knn or lda");
  }
  if (!os) throw std::runtime_error("write failure: " + out);
  return kExitOk;
}

int cmd_geodesic(const std::string& file_a, const std::string& file_b, int frames,
                 const std::string& outdir, ExperimentConfig cfg, bool do_normalize) {
  cfg.validate();
  if (frames < 2) throw std::invalid_argument("config: --frames must be >= 2");
  DiscreteMeasure a = load_auto(file_a, "auto");
  DiscreteMeasure b = load_auto(file_b, "auto");
  if (do_normalize) {
    a = normalize(a);
    b = normalize(b);
  }
  GridSpec grid;
  if (!cfg.grid_text.empty()) {
    grid = parse_grid_text(cfg.grid_text);
    BoundingBox box = a.domain_box();
    box.lo = box.lo.cwiseMin(b.domain_box().lo);
    box.hi = box.hi.cwiseMax(b.domain_box().hi);
    grid.origin = {box.lo[0], box.lo[1]};
    grid.spacing = {std::max((box.hi[0] - box.lo[0]) / std::max(grid.cols - 1, 1), 1e-12),
                    std::max((box.hi[1] - box.lo[1]) / std::max(grid.rows - 1, 1), 1e-12)};
  } else if (detect_format(file_a) == MeasureFormat::csv_grid) {
    grid = peek_grid(file_a);
  } else {
    throw std::invalid_argument("config: --grid required for point-cloud inputs");
  }

  fs::create_directories(outdir);
  bool converged = true;
  if (cfg.metric_enum() == Metric::hk) {
    DiscreteMeasure as = rescale_domain(a, cfg.kappa);
    DiscreteMeasure bs = rescale_domain(b, cfg.kappa);
    Coupling pi = solve_hk(as, bs, cfg.solver);
    converged = pi.converged;
    LebesgueDecomposition decomp = barycentric_project(pi, as, bs);
    for (int f = 0; f < frames; ++f) {
      double t = static_cast<double>(f) / (frames - 1);
      DiscreteMeasure rho = interpolate_hk(pi, decomp, t);
      DiscreteMeasure back =
          rho.size() > 0 ? rescale_domain(rho, 1.0 / cfg.kappa) : DiscreteMeasure(2);
      char name[64];
      std::snprintf(name, sizeof(name), "frame_%03d.csv", f);
      std::ostringstream comment;
      comment << config_echo("geodesic", cfg) << " t=" << fmt(t);
      save_csv_grid(back, grid, (fs::path(outdir) / name).string(), comment.str());
      if (cfg.pgm) {
        std::snprintf(name, sizeof(name), "frame_%03d.pgm", f);
        save_pgm(back, grid, (fs::path(outdir) / name).string());
      }
    }
  } else {
    Coupling pi = solve_w2(a, b, cfg.solver);
    converged = pi.converged;
    for (int f = 0; f < frames; ++f) {
      double t = static_cast<double>(f) / (frames - 1);
      DiscreteMeasure rho = interpolate_w2(pi, t);
      char name[64];
      std::snprintf(name, sizeof(name), "frame_%03d.csv", f);
      std::ostringstream comment;
      comment << config_echo("geodesic", cfg) << " t=" << fmt(t);
      save_csv_grid(rho, grid, (fs::path(outdir) / name).string(), comment.str());
      if (cfg.pgm) {
        std::snprintf(name, sizeof(name), "frame_%03d.pgm", f);
        save_pgm(rho, grid, (fs::path(outdir) / name).string());
      }
    }
  }
  std::cout << "wrote " << frames << " frames to " << outdir << "\n";
  return converged ? kExitOk : kExitSolverWarning;
}

int cmd_kappa_sweep(const std::string& manifest, const std::vector<double>& kappas,
                    const std::string& algo, int k, const std::string& out,
                    ExperimentConfig cfg) {
  cfg.validate();
  if (kappas.empty()) throw std::invalid_argument("config: --kappas must list at least one value");
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write file: " + out);
  os << "# " << config_echo("kappa-sweep", cfg) << " algo=" << algo << "\n";

  if (algo == "distance") {
    auto entries = load_manifest(manifest);
    if (entries.size() < 2)
      throw std::invalid_argument("config: distance sweep needs two manifest entries");
    DiscreteMeasure a = normalize(load_auto(entries[0].file, "auto"));
    DiscreteMeasure b = normalize(load_auto(entries[1].file, "auto"));
    os << "kappa,hk_squared,hk\n";
    for (double kappa : kappas) {
      SolverConfig solver = cfg.solver;
      if (solver.epsilon_start <= 0.0) {
        // keep the regularization proportional to the rescaled cost scale
        double diam2 = (a.domain_box().hi - a.domain_box().lo).squaredNorm() / (kappa * kappa);
        solver.epsilon_final = std::max(cfg.solver.epsilon_final * diam2, 1e-12);
      }
      double sq = hk_kappa_sq(a, b, kappa, solver);
      os << fmt(kappa) << "," << fmt(sq) << "," << fmt(std::sqrt(std::max(sq, 0.0))) << "\n";
    }
  } else {
    os << "kappa,algo,k,accuracy,tpr,fpr,auc\n";
    for (double kappa : kappas) {
      ExperimentConfig local = cfg;
      local.kappa = kappa;
      Dataset ds = load_dataset(manifest, local);
      EmbeddingMatrix emb = embed_dataset(ds.reference, ds.samples, local.metric_enum(), kappa,
                                          local.solver, local.workers);
      emb.labels = ds.labels;
      if (algo == "knn") {
        KnnMetrics m = knn_classify(emb, k, KnnProtocol::leave_one_out);
        os << fmt(kappa) << ",knn," << k << "," << fmt(m.accuracy) << "," << fmt(m.tpr) << ","
           << fmt(m.fpr) << "," << fmt(m.auc) << "\n";
      } else if (algo == "lda") {
        LdaResult r = lda(emb);
        os << fmt(kappa) << ",lda,-," << fmt(r.accuracy) << ",-,-,-\n";
      } else {
        throw std::invalid_argument("config: --algo must be knn, lda or distance");
      }
      std::cout << "kappa=" << fmt(kappa) << " done\n";
    }
  }
  if (!os) throw std::runtime_error("write failure: " + out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hellinger-Kantorovich distances, tangent embeddings and analysis"};
  app.require_subcommand(1);

  ExperimentConfig cfg;

  // distance
  auto* dist = app.add_subcommand("distance", "Distance between two measure files");
  std::string dist_a, dist_b, dist_format = "auto";
  bool dist_normalize = false;
  dist->add_option("fileA", dist_a)->required();
  dist->add_option("fileB", dist_b)->required();
  dist->add_option("--format", dist_format, "csv_points, csv_grid or auto");
  dist->add_option("--metric", cfg.metric, "hk or w2");
  dist->add_option("--kappa", cfg.kappa, "HK length scale");
  dist->add_flag("--normalize", dist_normalize, "Normalize inputs to unit mass");
  add_solver_flags(dist, cfg);

  // gen-ellipses
  auto* gen = app.add_subcommand("gen-ellipses", "Generate the two-ellipse dataset");
  std::string gen_out = "ellipses";
  int gen_resolution = 64, gen_count = 8;
  bool gen_pgm = false;
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--resolution", gen_resolution, "Grid resolution");
  gen->add_option("--count", gen_count, "Samples per parameter axis");
  gen->add_flag("--pgm", gen_pgm, "Also write PGM renders");

  // embed
  auto* embed = app.add_subcommand("embed", "Embed a dataset into the tangent space");
  std::string embed_manifest, embed_out = "embedding.csv";
  embed->add_option("--manifest", embed_manifest)->required();
  embed->add_option("--out", embed_out, "Embedding CSV path");
  embed->add_option("--metric", cfg.metric, "hk or w2");
  embed->add_option("--kappa", cfg.kappa, "HK length scale");
  embed->add_option("--reference", cfg.reference, "linear_mean, uniform or file");
  embed->add_option("--reference-file", cfg.reference_file, "Reference measure file");
  embed->add_option("--grid", cfg.grid_text, "ROWSxCOLS for the reference grid");
  embed->add_option("--workers", cfg.workers, "Worker threads (0 = all cores)");
  embed->add_option("--seed", cfg.seed, "Seed echoed into outputs");
  add_solver_flags(embed, cfg);

  // pca
  auto* pca_cmd = app.add_subcommand("pca", "PCA of an embedding + mode sweeps");
  std::string pca_embedding, pca_out = "pca";
  int pca_sweep_modes = 2, pca_sweep_steps = 5;
  bool pca_pgm = false;
  pca_cmd->add_option("--embedding", pca_embedding)->required();
  pca_cmd->add_option("--out", pca_out, "Output prefix");
  pca_cmd->add_option("--sweep-modes", pca_sweep_modes, "Leading modes to render");
  pca_cmd->add_option("--sweep-steps", pca_sweep_steps, "Images per mode sweep");
  pca_cmd->add_flag("--pgm", pca_pgm, "Also write PGM renders");

  // classify
  auto* cls = app.add_subcommand("classify", "kNN or LDA on an embedding");
  std::string cls_embedding, cls_algo = "knn", cls_protocol = "leave_one_out",
              cls_out = "metrics.csv";
  int cls_k = 1;
  double cls_train_frac = 0.5;
  cls->add_option("--embedding", cls_embedding)->required();
  cls->add_option("--algo", cls_algo, "knn or lda");
  cls->add_option("--k", cls_k, "Neighbors for knn");
  cls->add_option("--protocol", cls_protocol, "leave_one_out or train_test");
  cls->add_option("--train-frac", cls_train_frac, "Training fraction for train_test");
  cls->add_option("--seed", cfg.seed, "Split seed");
  cls->add_option("--out", cls_out, "Metrics CSV path");

  // geodesic
  auto* geo = app.add_subcommand("geodesic", "Render geodesic frames between two measures");
  std::string geo_a, geo_b, geo_outdir = "geodesic";
  int geo_frames = 5;
  bool geo_normalize = false;
  geo->add_option("fileA", geo_a)->required();
  geo->add_option("fileB", geo_b)->required();
  geo->add_option("--frames", geo_frames, "Number of frames");
  geo->add_option("--outdir", geo_outdir, "Output directory");
  geo->add_option("--metric", cfg.metric, "hk or w2");
  geo->add_option("--kappa", cfg.kappa, "HK length scale");
  geo->add_option("--grid", cfg.grid_text, "ROWSxCOLS for point-cloud inputs");
  geo->add_flag("--pgm", cfg.pgm, "Also write PGM renders");
  geo->add_flag("--normalize", geo_normalize, "Normalize inputs to unit mass");
  add_solver_flags(geo, cfg);

  // kappa-sweep
  auto* sweep = app.add_subcommand("kappa-sweep", "Scan kappa values");
  std::string sweep_manifest, sweep_algo = "knn", sweep_out = "kappa_sweep.csv";
  std::vector<double> sweep_kappas;
  int sweep_k = 1;
  sweep->add_option("--manifest", sweep_manifest)->required();
  sweep->add_option("--kappas", sweep_kappas, "Kappa values")->delimiter(',')->required();
  sweep->add_option("--algo", sweep_algo, "knn, lda or distance");
  sweep->add_option("--k", sweep_k, "Neighbors for knn");
  sweep->add_option("--out", sweep_out, "Output CSV");
  sweep->add_option("--reference", cfg.reference, "linear_mean, uniform or file");
  sweep->add_option("--reference-file", cfg.reference_file, "Reference measure file");
  sweep->add_option("--grid", cfg.grid_text, "ROWSxCOLS");
  sweep->add_option("--workers", cfg.workers, "Worker threads");
  sweep->add_option("--seed", cfg.seed, "Seed echoed into outputs");
  add_solver_flags(sweep, cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (dist->parsed()) return cmd_distance(dist_a, dist_b, dist_format, cfg, dist_normalize);
    if (gen->parsed()) return cmd_gen_ellipses(gen_out, gen_resolution, gen_count, gen_pgm);
    if (embed->parsed()) return cmd_embed(embed_manifest, embed_out, cfg);
    if (pca_cmd->parsed())
      return cmd_pca(pca_embedding, pca_out, pca_sweep_modes, pca_sweep_steps, pca_pgm);
    if (cls->parsed())
      return cmd_classify(cls_embedding, cls_algo, cls_k, cls_protocol, cls_train_frac, cfg.seed,
                          cls_out);
    if (geo->parsed()) return cmd_geodesic(geo_a, geo_b, geo_frames, geo_outdir, cfg, geo_normalize);
    if (sweep->parsed())
      return cmd_kappa_sweep(sweep_manifest, sweep_kappas, sweep_algo, sweep_k, sweep_out, cfg);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitUsage;
}
