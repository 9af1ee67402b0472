#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "tbal/io.hpp"
#include "tbal/population_model.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

std::string tmp(const std::string& name) {
  fs::create_directories(TBAL_TEST_TMP);
  return (fs::path(TBAL_TEST_TMP) / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run run(const std::string& args) {
  const std::string log = tmp("cli_output.txt");
  const std::string cmd = std::string("\"") + TBAL_CLI_PATH + "\" " + args + " > \"" + log + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return Run{WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

std::string covariate_file(const std::string& name, std::size_t n, bool duplicate = false) {
  tbal::Rng rng(5);
  const auto pop = tbal::GaussianPopulationPair::isotropic(3, 0.3);
  tbal::Matrix x = tbal::sample_covariates(pop, tbal::Population::source, n, rng);
  if (duplicate) x.col(2) = x.col(1);
  const std::string path = tmp(name);
  tbal::write_covariates_csv(path, x, tbal::importance_weights(pop, x));
  return path;
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("design") {
  const std::string cov = covariate_file("cov.csv", 40);
  const std::string out = tmp("assign.csv");

  const auto cr = run("design --covariates " + cov + " --balance cr --seed 3 --out " + out);
  REQUIRE(cr.code == 0);
  CHECK(cr.out.find("treated=20") != std::string::npos);
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "unit,assignment,z,weight,clipped_weight");
  int treated = 0, rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto c1 = line.find(',');
    treated += std::stoi(line.substr(c1 + 1));
  }
  CHECK(rows == 40);
  CHECK(treated == 20);

  const auto tb = run("design --covariates " + cov + " --balance tb --alpha 0.99 --pool 100 --seed 3 --out " + out);
  REQUIRE(tb.code == 0);
  CHECK(tb.out.find("candidates=10000") != std::string::npos);
  CHECK(tb.out.find("m_statistic=") != std::string::npos);
  CHECK(tb.out.find("realized_threshold=") != std::string::npos);
  CHECK(tb.out.find("condition_number=") != std::string::npos);

  const auto again = run("design --covariates " + cov + " --balance tb --alpha 0.99 --pool 100 --seed 3 --out " + out);
  CHECK(again.out == tb.out);

  const auto thr = run("design --covariates " + cov + " --balance sb --unit-weights --threshold 50 --out " + out);
  CHECK(thr.code == 0);

  const std::string dup = covariate_file("dup.csv", 40, true);
  const auto singular = run("design --covariates " + dup + " --balance tb --out " + out);
  CHECK(singular.code == 4);
  CHECK(singular.out.find("singular") != std::string::npos);
  CHECK(run("design --covariates " + dup + " --balance tb --ridge --out " + out).code != 2);

  CHECK(run("design --covariates " + tmp("missing.csv") + " --out " + out).code == 3);
  CHECK(run("design --covariates " + cov + " --threshold 2 --alpha 0.5 --out " + out).code == 2);
  CHECK(run("design --covariates " + cov + " --unit-weights --weights-column --out " + out).code == 2);
  CHECK(run("design --covariates " + cov + " --balance xx --out " + out).code == 2);
}

TEST_CASE("simulate") {
  const std::string scen = tmp("tiny.scenario");
  std::ofstream(scen) << "name = tiny\nd = 2\nn = 40\nalpha = 0.9\npool = 5\nreps = 6\n"
                         "sweep_param = delta\nsweep_values = 0.1, 0.4\n";
  const std::string a = tmp("a.csv");
  const std::string b = tmp("b.csv");
  const auto r1 = run("simulate --scenario " + scen + " --out " + a + " --threads 1");
  REQUIRE(r1.code == 0);
  CHECK(r1.out.find("scenario=tiny sweep_param=delta sweep_value=0.1 true_ate=") != std::string::npos);
  CHECK(r1.out.find("WE-TB.mse=") != std::string::npos);
  REQUIRE(run("simulate --scenario " + scen + " --out " + b + " --threads 4").code == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(count_lines(slurp(a)) == 1 + 2 * 6);

  CHECK(run("simulate --scenario " + tmp("none.scenario") + " --out " + a).code == 2);
  const std::string bad = tmp("bad.scenario");
  std::ofstream(bad) << "colour = blue\n";
  CHECK(run("simulate --scenario " + bad + " --out " + a).code == 2);

  const auto preset =
      run("simulate --scenario " TBAL_PRESET_DIR "/fig1_linear.scenario --reps 1 --threads 0 --out " + a);
  REQUIRE(preset.code == 0);
  const std::string csv = slurp(a);
  CHECK(count_lines(csv) == 1 + 6 * 19);
  CHECK(csv.find("fig1_linear,n,9500,WE-TB,1,") != std::string::npos);
}

TEST_CASE("theory") {
  const auto vda = run("theory --vda 2 2");
  REQUIRE(vda.code == 0);
  CHECK(std::abs(std::stod(vda.out.substr(vda.out.find("vda=") + 4)) - 0.418023) <= 1e-6);
  CHECK(run("theory --vda 2 1e9").out == "vda=1\n");
  CHECK(run("theory --predict 2.0 0.5 0.4").out == "predicted_variance=1.4\n");
  CHECK(run("theory --threshold 2 0.36787944117144233").out.rfind("threshold=2", 0) == 0);
  CHECK(run("theory").code == 2);
  CHECK(run("theory --vda 2 2 --predict 1 1 1").code == 2);
  CHECK(run("theory --vda 2 0").code == 2);

  const std::string cov = covariate_file("r2cov.csv", 50);
  tbal::Rng rng(8);
  const auto table = tbal::read_covariates_csv(cov);
  const std::string y = tmp("r2y.csv");
  tbal::write_outcomes_csv(y, tbal::generate_outcomes(tbal::OutcomeModel{}, table.x, rng));
  const auto r2 = run("theory --r2 " + cov + " " + y);
  REQUIRE(r2.code == 0);
  CHECK(r2.out.find("r2_weighted=") != std::string::npos);
  CHECK(r2.out.find("r2_unweighted=") != std::string::npos);
}

TEST_CASE("validate") {
  const auto a = run("validate --suite mc --seed 7");
  const auto b = run("validate --suite mc --seed 7");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.find("check=") != std::string::npos);

  const auto en = run("validate --suite enumeration");
  CHECK(en.code == 0);
  CHECK(en.out.find("treatment_probability") != std::string::npos);

  const auto broken = run("validate --suite enumeration --inject-fault sign-symmetry");
  CHECK(broken.code == 1);
  CHECK(broken.out.find("status=fail") != std::string::npos);
  CHECK(run("validate --suite nope").code == 2);
}
