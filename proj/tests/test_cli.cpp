#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lazyq/lazyq.hpp"
#include "testutil.hpp"

using nlohmann::json;

namespace {

struct CliResult {
  int exit_code;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(LAZYQ_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buffer[4096];
  std::size_t got = 0;
  while ((got = fread(buffer, 1, sizeof buffer, pipe)) > 0) {
    out.append(buffer, got);
  }
  const int status = pclose(pipe);
  return CliResult{WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() /
                    ("lazyq_test_" + std::to_string(getpid()) + "_" + name);
  std::ofstream out(path);
  out << content;
  return path.string();
}

std::string matrix_file(const std::string& name, const lazyq::ComplexMatrix& m) {
  return write_temp(name, lazyq::io::matrix_to_json(m).dump());
}

std::vector<std::pair<double, double>> parse_csv(const std::string& text,
                                                 const std::string& header) {
  std::istringstream lines(text);
  std::string line;
  REQUIRE(std::getline(lines, line));
  REQUIRE(line == header);
  std::vector<std::pair<double, double>> rows;
  while (std::getline(lines, line)) {
    const auto comma = line.find(',');
    REQUIRE(comma != std::string::npos);
    rows.emplace_back(std::strtod(line.substr(0, comma).c_str(), nullptr),
                      std::strtod(line.substr(comma + 1).c_str(), nullptr));
  }
  return rows;
}

}  // namespace

TEST_CASE("fit reports a zero temperature for the maximally mixed state") {
  const std::string rho = matrix_file("mixed.json",
                                      0.5 * lazyq::ComplexMatrix::Identity(2, 2));
  const auto result = run_cli("fit " + rho);
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  REQUIRE(doc["command"] == "fit");
  REQUIRE(doc["gauge"] == "trace-zero");
  REQUIRE(doc["entropy"].get<double>() == 0.0);
  REQUIRE(doc["log_z"].get<double>() == 0.0);
  for (const auto& entry : doc["temperature"]["data"]) {
    REQUIRE(std::abs(entry[0].get<double>()) < 1e-9);
    REQUIRE(std::abs(entry[1].get<double>()) < 1e-9);
  }
}

TEST_CASE("fit refuses states that are not full range") {
  lazyq::ComplexMatrix m = lazyq::ComplexMatrix::Zero(2, 2);
  m(0, 0) = lazyq::Complex(1.0, 0.0);
  const auto result = run_cli("fit " + matrix_file("rank1.json", m));
  REQUIRE(result.exit_code == 1);
  REQUIRE(result.output.find("NotFullRange") != std::string::npos);
}

TEST_CASE("usage and parse problems exit with code 2") {
  REQUIRE(run_cli("").exit_code == 2);
  REQUIRE(run_cli("no-such-command").exit_code == 2);
  REQUIRE(run_cli("fit").exit_code == 2);
  REQUIRE(run_cli("fit " + write_temp("bad.json", "not json")).exit_code == 2);
  REQUIRE(run_cli("fit /no/such/file.json").exit_code == 2);
  REQUIRE(run_cli("qubit-curve --steps 1").exit_code == 2);
  const std::string rho = matrix_file("mixed2.json",
                                      0.5 * lazyq::ComplexMatrix::Identity(2, 2));
  REQUIRE(run_cli("fit " + rho + " --gauge sideways").exit_code == 2);
}

TEST_CASE("eval reports partition data for a given temperature matrix") {
  lazyq::ComplexMatrix b = lazyq::ComplexMatrix::Zero(2, 2);
  b(0, 0) = lazyq::Complex(-1.0, 0.0);
  b(1, 1) = lazyq::Complex(1.0, 0.0);
  const auto result = run_cli("eval " + matrix_file("qubit_b.json", b));
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  REQUIRE(doc["log_z"].get<double>() == Catch::Approx(0.161439361571196).margin(1e-11));
  REQUIRE(doc["occupations"][0].get<double>() ==
          Catch::Approx(0.656517642749666).margin(1e-11));
  REQUIRE(doc["entropy"].get<double>() == Catch::Approx(0.151595923928136).margin(1e-11));
}

TEST_CASE("fit then eval round-trips the spectrum") {
  std::mt19937_64 rng(61);
  const auto rho = testutil::random_density(rng, 3);
  const auto fit = run_cli("fit " + matrix_file("random_rho.json", rho.matrix()));
  REQUIRE(fit.exit_code == 0);
  const json fit_doc = json::parse(fit.output);

  // Re-emit the fitted temperature matrix and evaluate it.
  lazyq::ComplexMatrix b(3, 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      const auto& entry = fit_doc["temperature"]["data"][static_cast<std::size_t>(i * 3 + j)];
      b(i, j) = lazyq::Complex(entry[0].get<double>(), entry[1].get<double>());
    }
  }
  const auto eval = run_cli("eval " + matrix_file("fitted_b.json", b));
  REQUIRE(eval.exit_code == 0);
  const json eval_doc = json::parse(eval.output);

  Eigen::VectorXd occupations(3);
  for (int i = 0; i < 3; ++i) {
    occupations(i) = eval_doc["occupations"][static_cast<std::size_t>(i)].get<double>();
  }
  std::sort(occupations.begin(), occupations.end());
  // The emitted matrix is rounded to 12 digits, so allow a little slack.
  REQUIRE((occupations - rho.spectrum()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("sample reports acceptance statistics and deviations") {
  lazyq::ComplexMatrix rho = lazyq::ComplexMatrix::Zero(2, 2);
  rho(0, 0) = lazyq::Complex(0.656517642749666, 0.0);
  rho(1, 1) = lazyq::Complex(0.343482357250334, 0.0);
  const std::string rho_path = matrix_file("qubit_rho.json", rho);
  const std::string states_path =
      (std::filesystem::temp_directory_path() /
       ("lazyq_test_" + std::to_string(getpid()) + "_states.txt"))
          .string();

  const auto result =
      run_cli("sample " + rho_path + " --count 2000 --seed 9 --out " + states_path);
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  REQUIRE(doc["accepted"].get<std::size_t>() == 2000);
  REQUIRE(doc["proposed"].get<std::size_t>() >= 2000);
  const double predicted = doc["predicted_acceptance"].get<double>();
  REQUIRE(predicted == Catch::Approx(0.432332358382).margin(1e-9));
  const double sigma = std::sqrt(predicted * (1.0 - predicted) /
                                 doc["proposed"].get<double>());
  REQUIRE(std::abs(doc["acceptance_rate"].get<double>() - predicted) < 4.0 * sigma);
  REQUIRE(doc["max_abs_deviation"].get<double>() < 0.05);

  std::ifstream states(states_path);
  REQUIRE(states.good());
  int lines = 0;
  std::string line;
  while (std::getline(states, line)) {
    if (!line.empty()) ++lines;
  }
  REQUIRE(lines == 2000);

  // Same seed, same document.
  const auto repeat =
      run_cli("sample " + rho_path + " --count 2000 --seed 9 --out " + states_path);
  REQUIRE(repeat.output == result.output);
}

TEST_CASE("verify cross-checks the oracles for a qubit temperature") {
  lazyq::ComplexMatrix b = lazyq::ComplexMatrix::Zero(2, 2);
  b(0, 0) = lazyq::Complex(-1.0, 0.0);
  b(1, 1) = lazyq::Complex(1.0, 0.0);
  const auto result =
      run_cli("verify " + matrix_file("verify_b.json", b) + " --mc-samples 5000 --seed 3");
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  REQUIRE(doc["all_pass"].get<bool>());
  bool saw_contour = false;
  bool saw_qubit = false;
  for (const auto& check : doc["checks"]) {
    if (check["name"] == "contour-vs-divided-difference") saw_contour = true;
    if (check["name"] == "qubit-closed-form") saw_qubit = true;
    REQUIRE(check["pass"].get<bool>());
  }
  REQUIRE(saw_contour);
  REQUIRE(saw_qubit);
}

TEST_CASE("verify skips monte carlo when the spread is too large") {
  lazyq::ComplexMatrix b = lazyq::ComplexMatrix::Zero(2, 2);
  b(1, 1) = lazyq::Complex(80.0, 0.0);
  const auto result = run_cli("verify " + matrix_file("wide_b.json", b));
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  bool skipped = false;
  for (const auto& check : doc["checks"]) {
    if (check.contains("skipped")) skipped = true;
  }
  REQUIRE(skipped);
}

TEST_CASE("qubit-curve emits an odd strictly increasing table") {
  const auto result = run_cli("qubit-curve");
  REQUIRE(result.exit_code == 0);
  const auto rows = parse_csv(result.output, "beta,delta");
  REQUIRE(rows.size() == 241);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    REQUIRE(rows[i].first > rows[i - 1].first);
    REQUIRE(rows[i].second > rows[i - 1].second);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& mirror = rows[rows.size() - 1 - i];
    REQUIRE(rows[i].first == -mirror.first);
    REQUIRE(rows[i].second == -mirror.second);
    REQUIRE(std::abs(rows[i].second) < 0.5);
  }
}

TEST_CASE("qubit-curve respects a custom grid") {
  const auto result = run_cli("qubit-curve --min -2 --max 2 --steps 5");
  REQUIRE(result.exit_code == 0);
  const auto rows = parse_csv(result.output, "beta,delta");
  REQUIRE(rows.size() == 5);
  REQUIRE(rows[0].first == -2.0);
  REQUIRE(rows[2].first == 0.0);
  REQUIRE(rows[4].first == 2.0);
  REQUIRE(rows[2].second == 0.0);
}

TEST_CASE("qubit-curve inverse emits the inverse relation") {
  const auto result = run_cli("qubit-curve --inverse --steps 49");
  REQUIRE(result.exit_code == 0);
  const auto rows = parse_csv(result.output, "delta,beta");
  REQUIRE(rows.size() == 49);
  for (const auto& [delta, beta] : rows) {
    REQUIRE(std::abs(delta) <= 0.49);
    REQUIRE(lazyq::qubit_delta(beta) == Catch::Approx(delta).margin(1e-9));
  }
}

TEST_CASE("conditional fits the scalar constraint from the command line") {
  lazyq::ComplexMatrix h = lazyq::ComplexMatrix::Zero(2, 2);
  h(0, 0) = lazyq::Complex(1.0, 0.0);
  h(1, 1) = lazyq::Complex(-1.0, 0.0);
  const std::string h_path = matrix_file("sigma_z.json", h);

  const auto result = run_cli("conditional " + h_path + " --target -0.313035285499331");
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  REQUIRE(doc["beta"].get<double>() == Catch::Approx(1.0).margin(1e-9));
  REQUIRE(doc["mean"].get<double>() == Catch::Approx(-0.313035285499331).margin(1e-9));

  const auto unattainable = run_cli("conditional " + h_path + " --target 1.0");
  REQUIRE(unattainable.exit_code == 1);
  REQUIRE(unattainable.output.find("TargetUnattainable") != std::string::npos);
}

TEST_CASE("equalize reports a temperature between the marginals") {
  lazyq::ComplexMatrix h = lazyq::ComplexMatrix::Zero(2, 2);
  h(0, 0) = lazyq::Complex(1.0, 0.0);
  h(1, 1) = lazyq::Complex(-1.0, 0.0);
  const std::string h_path = matrix_file("eq_h.json", h);
  const std::string g_path = matrix_file("eq_g.json", h);

  const double target_a = lazyq::conditional_mean(
      lazyq::Observable(lazyq::HermitianMatrix::validated(h)), 0.5);
  const double target_b = lazyq::conditional_mean(
      lazyq::Observable(lazyq::HermitianMatrix::validated(h)), 2.0);

  std::ostringstream cmd;
  cmd << "equalize " << h_path << " " << g_path << " --target-a " << target_a
      << " --target-b " << target_b << " --mc-samples 5000 --seed 17";
  const auto result = run_cli(cmd.str());
  REQUIRE(result.exit_code == 0);
  const json doc = json::parse(result.output);
  REQUIRE(doc["between"].get<bool>());
  REQUIRE(doc["beta_joint"].get<double>() > doc["beta_a"].get<double>());
  REQUIRE(doc["beta_joint"].get<double>() < doc["beta_b"].get<double>());
  REQUIRE(doc["factorization_residual"].get<double>() <= 1e-12);
  REQUIRE(doc["mc_pass"].get<bool>());
}
