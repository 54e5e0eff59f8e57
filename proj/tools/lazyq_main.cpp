#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lazyq/lazyq.hpp"

// Command-line front end. All result documents are JSON on stdout with
// numbers rounded to 12 significant digits; curves are CSV. Exit codes:
// 0 success, 1 domain error (validation, convergence, range), 2 usage or
// parse error.

namespace {

using lazyq::io::json;
using lazyq::io::round12;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw lazyq::Error(lazyq::ErrorKind::ParseError, "cannot open file: " + path);
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

lazyq::HermitianMatrix parse_hermitian_file(const std::string& path) {
  return lazyq::HermitianMatrix::validated(lazyq::io::parse_matrix_text(read_file(path)).matrix);
}

lazyq::DensityMatrix parse_density_file(const std::string& path) {
  return lazyq::validate_density(lazyq::io::parse_matrix_text(read_file(path)).matrix);
}

lazyq::Gauge parse_gauge(const std::string& name) {
  return name == "logz-zero" ? lazyq::Gauge::LogZZero : lazyq::Gauge::TraceZero;
}

void emit(const json& doc) { std::cout << doc.dump(2) << "\n"; }

json ensemble_report(const lazyq::LazyEnsemble& ens) {
  json doc;
  doc["dim"] = ens.temperature.dim();
  doc["gauge"] = lazyq::to_string(ens.gauge);
  doc["temperature"] = lazyq::io::rounded_matrix(ens.temperature.matrix());
  doc["nodes"] = lazyq::io::rounded_vector(ens.nodes);
  doc["log_z"] = round12(ens.log_z);
  doc["entropy"] = round12(ens.entropy);
  doc["occupations"] = lazyq::io::rounded_vector(ens.occupations);
  doc["newton_iterations"] = ens.newton_iterations;
  return doc;
}

int run_fit(const std::string& rho_path, const std::string& gauge_name, double tol) {
  const lazyq::DensityMatrix rho = parse_density_file(rho_path);
  const lazyq::LazyEnsemble ens = lazyq::fit_temperature(rho, parse_gauge(gauge_name), tol);
  json doc;
  doc["command"] = "fit";
  doc.update(ensemble_report(ens));
  emit(doc);
  return 0;
}

int run_eval(const std::string& b_path) {
  const lazyq::HermitianMatrix b = parse_hermitian_file(b_path);
  const lazyq::EigenDecomposition d = lazyq::eigh(b);
  const lazyq::PartitionResult part = lazyq::evaluate_partition(
      {d.values.data(), static_cast<std::size_t>(d.values.size())});
  json doc;
  doc["command"] = "eval";
  doc["dim"] = b.dim();
  doc["nodes"] = lazyq::io::rounded_vector(d.values);
  doc["log_z"] = round12(part.log_z);
  doc["occupations"] = lazyq::io::rounded_vector(part.occupations);
  doc["entropy"] = round12(part.entropy);
  emit(doc);
  return 0;
}

int run_sample(const std::string& rho_path, std::size_t count, std::uint64_t seed,
               const std::string& out_path) {
  const lazyq::DensityMatrix rho = parse_density_file(rho_path);
  const lazyq::LazyEnsemble ens = lazyq::fit_temperature(rho);
  lazyq::RandomStream stream(seed);
  const lazyq::SampleBatch batch = lazyq::sample_lazy(ens, count, stream);
  const lazyq::DensityMatrix empirical = lazyq::empirical_density_matrix(batch);
  const lazyq::EntropyEstimate entropy = lazyq::estimate_entropy(batch, ens);

  const double deviation =
      (empirical.matrix() - rho.matrix()).cwiseAbs().maxCoeff();

  json doc;
  doc["command"] = "sample";
  doc["dim"] = rho.dim();
  doc["seed"] = seed;
  doc["proposed"] = batch.proposed;
  doc["accepted"] = batch.accepted();
  doc["acceptance_rate"] = round12(batch.acceptance_rate());
  doc["predicted_acceptance"] = round12(lazyq::predicted_acceptance(ens));
  doc["empirical"] = lazyq::io::rounded_matrix(empirical.matrix());
  doc["max_abs_deviation"] = round12(deviation);
  doc["entropy_estimate"] = round12(entropy.value);
  doc["entropy_std_error"] = round12(entropy.std_error);
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
      throw lazyq::Error(lazyq::ErrorKind::ParseError, "cannot open file: " + out_path);
    }
    out << lazyq::io::states_to_text(batch);
    doc["states_file"] = out_path;
  }
  emit(doc);
  return 0;
}

int run_verify(const std::string& b_path, std::size_t mc_samples, int contour_points,
               std::uint64_t seed) {
  const lazyq::HermitianMatrix b = parse_hermitian_file(b_path);
  const lazyq::LazyEnsemble ens = lazyq::ensemble_from_temperature(b, lazyq::Gauge::TraceZero);
  const std::span<const double> nodes{ens.nodes.data(),
                                      static_cast<std::size_t>(ens.nodes.size())};
  json checks = json::array();
  bool all_pass = true;
  auto record = [&](json check, bool pass) {
    check["pass"] = pass;
    checks.push_back(std::move(check));
    all_pass = all_pass && pass;
  };

  const double spread = ens.node_max() - ens.node_min();
  constexpr double kMaxContourSpread = 600.0;
  if (spread <= kMaxContourSpread) {
    // Two independent evaluations of Z: divided differences against the
    // contour integral around the spectrum. The trapezoid error decays like
    // exp(-points / radius), so the automatic point count tracks the radius.
    const double radius = ens.nodes.cwiseAbs().maxCoeff() + 1.0;
    const int points = contour_points > 0
                           ? contour_points
                           : std::max(512, 32 * static_cast<int>(std::ceil(radius)));
    const double z_dd = std::exp(ens.log_z);
    const double z_contour = lazyq::partition_contour(nodes, points);
    const double rel = std::abs(z_contour - z_dd) / z_dd;
    record(json{{"name", "contour-vs-divided-difference"},
                {"points", points},
                {"z", round12(z_dd)},
                {"z_contour", round12(z_contour)},
                {"relative_difference", round12(rel)},
                {"tolerance", 1e-8}},
           rel <= 1e-8);
  } else {
    // The integrand reaches exp(spread / 2) on the contour; beyond this
    // guard it overflows and the comparison is meaningless.
    record(json{{"name", "contour-vs-divided-difference"},
                {"skipped", "spectral spread exceeds the contour range"},
                {"spread", round12(spread)}},
           true);
  }
  {
    const double sum_defect = std::abs(ens.occupations.sum() - 1.0);
    record(json{{"name", "occupations-sum-to-one"},
                {"defect", round12(sum_defect)},
                {"tolerance", 1e-12}},
           sum_defect <= 1e-12 && ens.occupations.minCoeff() > 0.0);
  }
  if (b.dim() == 2) {
    // Closed forms for a single qubit: Z = sinh(beta)/beta and occupations
    // 1/2 +- delta(beta) in the trace-zero gauge.
    const double beta = 0.5 * (ens.nodes(1) - ens.nodes(0));
    const double log_z_closed = std::log(lazyq::qubit_partition(beta));
    const double delta = lazyq::qubit_delta(beta);
    const double log_z_err = std::abs(ens.log_z - log_z_closed);
    const double occ_err = std::max(std::abs(ens.occupations(0) - (0.5 + delta)),
                                    std::abs(ens.occupations(1) - (0.5 - delta)));
    record(json{{"name", "qubit-closed-form"},
                {"beta", round12(beta)},
                {"log_z_error", round12(log_z_err)},
                {"occupation_error", round12(occ_err)},
                {"tolerance", 1e-10}},
           log_z_err <= 1e-10 * std::max(1.0, std::abs(log_z_closed)) && occ_err <= 1e-10);
  }

  if (mc_samples > 0 && spread <= lazyq::kMaxSamplingSpread) {
    lazyq::RandomStream stream(seed);
    const lazyq::SampleBatch batch = lazyq::sample_lazy(ens, mc_samples, stream);
    {
      const double predicted = lazyq::predicted_acceptance(ens);
      const double observed = batch.acceptance_rate();
      const double sigma =
          std::sqrt(predicted * (1.0 - predicted) / static_cast<double>(batch.proposed));
      const double pull = sigma > 0.0 ? std::abs(observed - predicted) / sigma : 0.0;
      record(json{{"name", "acceptance-rate"},
                  {"predicted", round12(predicted)},
                  {"observed", round12(observed)},
                  {"pull", round12(pull)}},
             pull <= 4.0);
    }
    {
      const lazyq::DensityMatrix empirical = lazyq::empirical_density_matrix(batch);
      Eigen::VectorXd sorted_occ = ens.occupations;
      std::sort(sorted_occ.begin(), sorted_occ.end());
      const double err = (empirical.spectrum() - sorted_occ).cwiseAbs().maxCoeff();
      const double tol = 5e-3 * std::sqrt(1e5 / static_cast<double>(mc_samples));
      record(json{{"name", "empirical-eigenvalues"},
                  {"max_error", round12(err)},
                  {"tolerance", round12(tol)}},
             err <= tol);
    }
    {
      const lazyq::EntropyEstimate est = lazyq::estimate_entropy(batch, ens);
      const double err = std::abs(est.value - ens.entropy);
      const double tol = 3.0 * est.std_error + 1e-12;
      record(json{{"name", "entropy-estimate"},
                  {"analytic", round12(ens.entropy)},
                  {"estimate", round12(est.value)},
                  {"std_error", round12(est.std_error)},
                  {"tolerance", round12(tol)}},
             err <= tol);
    }
  } else if (mc_samples > 0) {
    json note;
    note["name"] = "monte-carlo";
    note["skipped"] = "spectral spread exceeds the sampling guard";
    note["spread"] = round12(spread);
    note["pass"] = true;
    checks.push_back(std::move(note));
  }

  json doc;
  doc["command"] = "verify";
  doc["dim"] = b.dim();
  doc["checks"] = std::move(checks);
  doc["all_pass"] = all_pass;
  emit(doc);
  return all_pass ? 0 : 1;
}

int run_qubit_curve(std::optional<double> min_opt, std::optional<double> max_opt, int steps,
                    bool inverse) {
  const double lo = min_opt.value_or(inverse ? -0.49 : -6.0);
  const double hi = max_opt.value_or(inverse ? 0.49 : 6.0);
  if (!(lo < hi)) {
    throw std::invalid_argument("--min must be strictly below --max");
  }
  std::cout << (inverse ? "delta,beta" : "beta,delta") << "\n";
  for (int i = 0; i < steps; ++i) {
    // Symmetric interpolation: a grid symmetric about zero contains exact
    // +-x pairs, so the emitted curve is odd to the last digit.
    const double x = (lo * static_cast<double>(steps - 1 - i) + hi * static_cast<double>(i)) /
                     static_cast<double>(steps - 1);
    const double y = inverse ? lazyq::qubit_inverse_delta(x) : lazyq::qubit_delta(x);
    std::cout << lazyq::io::format12(x) << "," << lazyq::io::format12(y) << "\n";
  }
  return 0;
}

int run_conditional(const std::string& h_path, double target, double tol) {
  const lazyq::Observable h(parse_hermitian_file(h_path));
  const lazyq::ConditionalEnsemble cond = lazyq::fit_conditional(h, target, tol);
  json doc;
  doc["command"] = "conditional";
  doc["dim"] = h.dim();
  doc["spectrum"] = lazyq::io::rounded_vector(h.spectrum());
  doc["target"] = round12(target);
  doc["beta"] = round12(cond.beta);
  doc["log_z"] = round12(cond.log_z);
  doc["mean"] = round12(cond.mean);
  emit(doc);
  return 0;
}

int run_equalize(const std::string& h_path, const std::string& g_path, double target_a,
                 double target_b, double tol, std::size_t mc_samples, std::uint64_t seed) {
  const lazyq::Observable h(parse_hermitian_file(h_path));
  const lazyq::Observable g(parse_hermitian_file(g_path));
  const lazyq::ConditionalEnsemble cond_a = lazyq::fit_conditional(h, target_a, tol);
  const lazyq::ConditionalEnsemble cond_b = lazyq::fit_conditional(g, target_b, tol);
  const lazyq::ConditionalEnsemble joint = lazyq::joint_fit(cond_a, cond_b, tol);

  const double lo = std::min(cond_a.beta, cond_b.beta);
  const double hi = std::max(cond_a.beta, cond_b.beta);

  json doc;
  doc["command"] = "equalize";
  doc["beta_a"] = round12(cond_a.beta);
  doc["beta_b"] = round12(cond_b.beta);
  doc["beta_joint"] = round12(joint.beta);
  doc["between"] = joint.beta >= lo && joint.beta <= hi;
  doc["joint_mean"] = round12(joint.mean);
  doc["joint_log_z"] = round12(joint.log_z);
  doc["factorization_residual"] =
      round12(lazyq::factorization_check(h, g, joint.beta));
  if (mc_samples > 0) {
    lazyq::RandomStream stream(seed);
    const lazyq::FactorizationCheck mc =
        lazyq::factorization_mc_check(h, g, joint.beta, mc_samples, stream);
    doc["mc_estimate"] = round12(mc.mc_estimate);
    doc["mc_expected"] = round12(mc.mc_expected);
    doc["mc_std_error"] = round12(mc.mc_std_error);
    doc["mc_pass"] = mc.mc_pass;
  }
  emit(doc);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exponential ensembles of pure states: fits, partition functions, sampling"};
  app.require_subcommand(1);

  std::string rho_path;
  std::string b_path;
  std::string g_path;
  std::string gauge_name = "trace-zero";
  std::string out_path;
  double tol = 1e-10;
  std::size_t count = 0;
  std::size_t mc_samples = 20000;
  int contour_points = 0;
  std::uint64_t seed = 1;
  std::optional<double> grid_min;
  std::optional<double> grid_max;
  int steps = 241;
  bool inverse = false;
  double target = 0.0;
  double target_a = 0.0;
  double target_b = 0.0;

  CLI::App* fit = app.add_subcommand("fit", "Fit the temperature matrix of a density matrix");
  fit->add_option("rho-file", rho_path, "density matrix document")->required();
  fit->add_option("--gauge", gauge_name, "additive-constant convention")
      ->check(CLI::IsMember({"trace-zero", "logz-zero"}));
  fit->add_option("--tol", tol, "occupation residual tolerance");

  CLI::App* eval = app.add_subcommand("eval", "Partition data for a given temperature matrix");
  eval->add_option("B-file", b_path, "Hermitian matrix document")->required();

  CLI::App* sample = app.add_subcommand("sample", "Draw states from the fitted ensemble");
  sample->add_option("rho-file", rho_path, "density matrix document")->required();
  sample->add_option("--count", count, "number of accepted samples")->required();
  sample->add_option("--seed", seed, "random seed")->required();
  sample->add_option("--out", out_path, "write accepted states to this file");

  CLI::App* verify = app.add_subcommand("verify", "Cross-check the partition oracles");
  verify->add_option("B-file", b_path, "Hermitian matrix document")->required();
  verify->add_option("--mc-samples", mc_samples, "accepted samples for the Monte Carlo checks");
  verify->add_option("--contour-points", contour_points,
                     "trapezoidal points for the contour (0 selects automatically)")
      ->check(CLI::Range(0, 1 << 20));
  verify->add_option("--seed", seed, "random seed");

  CLI::App* curve = app.add_subcommand("qubit-curve", "Emit the qubit delta(beta) curve as CSV");
  curve->add_option("--min", grid_min, "grid start");
  curve->add_option("--max", grid_max, "grid end");
  curve->add_option("--steps", steps, "grid points")->check(CLI::Range(2, 1 << 20));
  curve->add_flag("--inverse", inverse, "emit (delta, beta) for the inverse map");

  CLI::App* conditional =
      app.add_subcommand("conditional", "Fit a scalar inverse temperature to a target mean");
  conditional->add_option("H-file", b_path, "observable document")->required();
  conditional->add_option("--target", target, "target expectation")->required();
  conditional->add_option("--tol", tol, "mean residual tolerance");

  CLI::App* equalize =
      app.add_subcommand("equalize", "Couple two conditional ensembles at a common temperature");
  equalize->add_option("H-file", b_path, "first observable document")->required();
  equalize->add_option("H2-file", g_path, "second observable document")->required();
  equalize->add_option("--target-a", target_a, "target mean for the first observable")
      ->required();
  equalize->add_option("--target-b", target_b, "target mean for the second observable")
      ->required();
  equalize->add_option("--tol", tol, "mean residual tolerance");
  equalize->add_option("--mc-samples", mc_samples, "Monte Carlo normalization samples (0 skips)");
  equalize->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*fit) return run_fit(rho_path, gauge_name, tol);
    if (*eval) return run_eval(b_path);
    if (*sample) return run_sample(rho_path, count, seed, out_path);
    if (*verify) return run_verify(b_path, mc_samples, contour_points, seed);
    if (*curve) return run_qubit_curve(grid_min, grid_max, steps, inverse);
    if (*conditional) return run_conditional(b_path, target, tol);
    if (*equalize)
      return run_equalize(b_path, g_path, target_a, target_b, tol,
                          equalize->count("--mc-samples") > 0 ? mc_samples : 0, seed);
  } catch (const lazyq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == lazyq::ErrorKind::ParseError ? 2 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
