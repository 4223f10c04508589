#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hklin/measure.hpp"

using namespace hklin;
namespace fs = std::filesystem;

namespace {

const char* cli_path() { return HKLIN_CLI_PATH; }

fs::path work_dir() {
  fs::path dir = fs::temp_directory_path() / "hklin_cli_tests";
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, std::string* output = nullptr) {
  fs::path log = work_dir() / "out.log";
  std::string cmd = std::string(cli_path()) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  if (output) {
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    *output = ss.str();
  }
  return WEXITSTATUS(status);
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_dirac_file(const fs::path& p, double x, double y, double m) {
  std::ofstream out(p);
  out << "x,y,mass\n" << x << "," << y << "," << m << "\n";
}

}  // namespace

TEST_CASE("cli: usage errors exit with code 1") {
  CHECK(run("no-such-command") == 1);
  CHECK(run("distance onlyone.csv") == 1);
}

TEST_CASE("cli: missing files exit with code 3") {
  CHECK(run("distance /nonexistent/a.csv /nonexistent/b.csv") == 3);
}

TEST_CASE("cli: distance between Dirac files matches the closed form") {
  fs::path a = work_dir() / "dirac_a.csv";
  fs::path b = work_dir() / "dirac_b.csv";
  write_dirac_file(a, 0, 0, 1);
  write_dirac_file(b, 0.5, 0, 1);
  std::string out;
  int code = run("distance " + a.string() + " " + b.string() + " --metric hk", &out);
  CHECK(code == 0);
  auto pos = out.find("value=");
  REQUIRE(pos != std::string::npos);
  double value = std::stod(out.substr(pos + 6));
  CHECK(value == doctest::Approx(0.49480791850904576).epsilon(1e-3));

  // identical files give a near-zero distance
  int code2 = run("distance " + a.string() + " " + a.string() + " --metric hk", &out);
  CHECK(code2 == 0);
  pos = out.find("squared=");
  REQUIRE(pos != std::string::npos);
  CHECK(std::stod(out.substr(pos + 8)) <= 1e-2);
}

TEST_CASE("cli: w2 on unequal masses names normalize") {
  fs::path a = work_dir() / "w2_a.csv";
  fs::path b = work_dir() / "w2_b.csv";
  write_dirac_file(a, 0, 0, 1.0);
  write_dirac_file(b, 1, 0, 2.0);
  std::string out;
  int code = run("distance " + a.string() + " " + b.string() + " --metric w2", &out);
  CHECK(code == 1);
  CHECK(out.find("normalize") != std::string::npos);
}

TEST_CASE("cli: gen-ellipses writes 64 deterministic files plus manifest") {
  fs::path dir1 = work_dir() / "gen1";
  fs::path dir2 = work_dir() / "gen2";
  fs::remove_all(dir1);
  fs::remove_all(dir2);
  CHECK(run("gen-ellipses --out " + dir1.string()) == 0);
  CHECK(run("gen-ellipses --out " + dir2.string()) == 0);

  int count = 0;
  for (const auto& entry : fs::directory_iterator(dir1))
    if (entry.path().extension() == ".csv" && entry.path().filename() != "manifest.csv") ++count;
  CHECK(count == 64);
  CHECK(fs::exists(dir1 / "manifest.csv"));

  // deterministic: byte-identical outputs on rerun
  CHECK(file_bytes(dir1 / "manifest.csv") == file_bytes(dir2 / "manifest.csv"));
  CHECK(file_bytes(dir1 / "ellipses_000.csv") == file_bytes(dir2 / "ellipses_000.csv"));
  CHECK(file_bytes(dir1 / "ellipses_037.csv") == file_bytes(dir2 / "ellipses_037.csv"));

  // manifest lists p1,p2 per file
  std::ifstream manifest(dir1 / "manifest.csv");
  std::string line;
  std::getline(manifest, line);  // comment
  std::getline(manifest, line);
  CHECK(line == "file,p1,p2,label");
  std::getline(manifest, line);
  CHECK(line.find("ellipses_000.csv,-1,-1,0") == 0);
}

TEST_CASE("cli: embed -> pca -> classify pipeline on a small dataset") {
  fs::path dir = work_dir() / "pipeline";
  fs::remove_all(dir);
  // a coarse 4x4 parameter grid at low resolution keeps this fast
  CHECK(run("gen-ellipses --out " + dir.string() + " --resolution 32 --count 4") == 0);

  fs::path emb = dir / "emb.csv";
  std::string out;
  int code = run("embed --manifest " + (dir / "manifest.csv").string() + " --metric hk --kappa 2.5" +
                     " --epsilon-final 1e-3 --workers 2 --out " + emb.string(),
                 &out);
  CHECK(code == 0);
  CHECK(fs::exists(emb));
  CHECK(fs::exists(dir / "emb.reference.csv"));

  code = run("pca --embedding " + emb.string() + " --out " + (dir / "pca").string() +
                 " --sweep-modes 1 --sweep-steps 3",
             &out);
  CHECK(code == 0);
  CHECK(fs::exists(dir / "pca_eigenvalues.csv"));
  CHECK(fs::exists(dir / "pca_modes.csv"));
  CHECK(fs::exists(dir / "pca_mode1_s0.csv"));
  CHECK(fs::exists(dir / "pca_mode1_s2.csv"));

  code = run("classify --embedding " + emb.string() + " --algo knn --k 1 --out " +
                 (dir / "metrics.csv").string(),
             &out);
  CHECK(code == 0);
  auto pos = out.find("accuracy=");
  REQUIRE(pos != std::string::npos);
  double acc = std::stod(out.substr(pos + 9));
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);

  code = run("classify --embedding " + emb.string() + " --algo lda --out " +
                 (dir / "metrics_lda.csv").string(),
             &out);
  CHECK(code == 0);
}

TEST_CASE("cli: geodesic frames start at the first input") {
  fs::path dir = work_dir() / "geo";
  fs::remove_all(dir);
  fs::create_directories(dir);
  GridSpec grid{16, 16, {0, 0}, {1, 1}};
  DiscreteMeasure a = drop_zero_masses(
      rasterize(DiscreteMeasure(
                    (Eigen::MatrixXd(2, 2) << 3, 7, 4, 7).finished(),
                    (Eigen::VectorXd(2) << 1.0, 0.5).finished()),
                grid));
  DiscreteMeasure b = drop_zero_masses(
      rasterize(DiscreteMeasure(
                    (Eigen::MatrixXd(2, 2) << 11, 8, 12, 8).finished(),
                    (Eigen::VectorXd(2) << 0.8, 0.7).finished()),
                grid));
  save_csv_grid(a, grid, (dir / "a.csv").string());
  save_csv_grid(b, grid, (dir / "b.csv").string());

  int code = run("geodesic " + (dir / "a.csv").string() + " " + (dir / "b.csv").string() +
                 " --frames 5 --outdir " + (dir / "frames").string() +
                 " --metric hk --kappa 8 --epsilon-final 1e-4");
  CHECK(code == 0);
  for (int f = 0; f < 5; ++f) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03d.csv", f);
    CHECK(fs::exists(dir / "frames" / name));
  }
  DiscreteMeasure frame0 =
      load_measure((dir / "frames" / "frame_000.csv").string(), MeasureFormat::csv_grid);
  CHECK(frame0.total_mass() == doctest::Approx(a.total_mass()).epsilon(1e-2));
  // frame 0 sits on the support of a
  CHECK(frame0.size() <= a.size() + 8);
}

TEST_CASE("cli: kappa-sweep distance table is monotone in kappa") {
  fs::path dir = work_dir() / "sweep";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_dirac_file(dir / "a.csv", 0, 0, 1);
  write_dirac_file(dir / "b.csv", 0.8, 0, 1);
  {
    std::ofstream manifest(dir / "manifest.csv");
    manifest << "file,p1,p2,label\na.csv,0,0,0\nb.csv,0,0,1\n";
  }
  fs::path table = dir / "table.csv";
  int code = run("kappa-sweep --manifest " + (dir / "manifest.csv").string() +
                 " --kappas 0.25,0.5,1,2,4 --algo distance --out " + table.string());
  CHECK(code == 0);

  std::ifstream in(table);
  std::string line;
  std::getline(in, line);  // comment
  std::getline(in, line);  // header
  CHECK(line == "kappa,hk_squared,hk");
  double prev = -1.0;
  int rows = 0;
  while (std::getline(in, line)) {
    auto c1 = line.find(',');
    auto c2 = line.find(',', c1 + 1);
    double sq = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    CHECK(sq >= prev - 1e-6);
    prev = sq;
    ++rows;
  }
  CHECK(rows == 5);
}
