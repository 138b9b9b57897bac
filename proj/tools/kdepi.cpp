// kdepi: kernel density estimates with plug-in bandwidth, expansion constants and coverage tables.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "kdepi/kdepi.hpp"

using namespace kdepi;

namespace {

constexpr int kUsageError = 1;
constexpr int kNumericalError = 2;

struct Common {
  std::string config;
  std::string out;
  int model = 0;
  std::vector<double> x;
  std::vector<long long> n;
  int reps = 0;
  double alpha = 0.0;
  long long seed = -1;
  std::string variant;
  std::string methods;
  std::string format = "csv";
  int threads = -1;
};

// Command-line values override the config file.
SimConfig build_config(const Common& o) {
  SimConfig cfg = o.config.empty() ? SimConfig{} : load_config(o.config);
  if (o.model) apply_setting(cfg, "model", std::to_string(o.model));
  if (!o.x.empty()) cfg.x_points = o.x;
  if (!o.n.empty()) cfg.n_values = o.n;
  if (o.reps) cfg.replications = o.reps;
  if (o.alpha != 0.0) cfg.alpha = o.alpha;
  if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.variant.empty()) cfg.il_variant = parse_variant(o.variant);
  if (!o.methods.empty()) apply_setting(cfg, "methods", o.methods);
  if (o.threads >= 0) cfg.threads = o.threads;
  cfg.validate();
  return cfg;
}

std::vector<double> read_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open data file '" + path + "'");
  std::vector<double> data;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    double v;
    if (!(ss >> v)) {
      std::string rest;
      if (std::istringstream(line) >> rest) throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": not a number");
      continue;
    }
    std::string extra;
    if (ss >> extra) throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": trailing text");
    data.push_back(v);
  }
  if (data.size() < 2) throw std::invalid_argument("data file needs at least two values");
  return data;
}

// Pilot bandwidth from a normal reference fitted to the sample.
double normal_reference_b(const std::vector<double>& data, const KernelSpec& pilot, int L, int Lp, ILVariant v) {
  double m = 0.0;
  for (double d : data) m += d;
  m /= data.size();
  double s2 = 0.0;
  for (double d : data) s2 += (d - m) * (d - m);
  const double sd = std::sqrt(s2 / (data.size() - 1));
  if (!(sd > 0.0)) throw std::domain_error("sample has zero spread");
  const MixtureDensity ref({{1.0, m, sd}});
  return pilot_bandwidth(density_functionals(ref, L, Lp), pilot_convolution_functionals(pilot, L, Lp), L, Lp,
                         static_cast<long long>(data.size()), v);
}

int run_estimate(const Common& o, const std::string& data_path, double b_flag) {
  const SimConfig cfg = build_config(o);
  const auto data = read_data(data_path);
  const auto n = static_cast<long long>(data.size());
  const KernelSpec kernel = gaussian_kernel();
  const KernelSpec pilot = hermite_order_kernel(cfg.Lp);
  const KernelConstants kc(kernel);
  const double b = b_flag > 0.0 ? b_flag : normal_reference_b(data, pilot, cfg.L, cfg.Lp, cfg.il_variant);
  const auto rep = plugin_bandwidth(data, kc, pilot, cfg.L, b, cfg.il_variant);
  const double z = normal_quantile(1.0 - cfg.alpha / 2.0);
  std::printf("n=%lld b=%.6g I_L_hat=%.6g h_hat=%.6g\n", n, b, rep.I_L_hat, rep.h_hat);
  for (double x : cfg.x_points) {
    const double f = kde(data, kernel, rep.h_hat, x);
    const double mu20 = variance_estimate(data, kernel, rep.h_hat, x);
    if (!(mu20 > 0.0)) throw std::domain_error("variance estimate is zero at x=" + format_real(x));
    const auto ci = make_interval(f, rep.h_hat, n, mu20, {-z, z});
    std::printf("x=%s f_hat=%.6g h_hat=%.6g ci%g=[%.6g, %.6g]\n", format_real(x).c_str(), f, rep.h_hat,
                100.0 * (1.0 - cfg.alpha), ci.lo, ci.hi);
  }
  return 0;
}

int run_coverage_cmd(const Common& o) {
  const SimConfig cfg = build_config(o);
  const auto table = run_coverage(cfg);
  for (const auto& e : table.errors)
    std::fprintf(stderr, "cell model=%s n=%lld x=%s failed: %s\n", model_label(cfg).c_str(), e.n,
                 format_real(e.x).c_str(), e.message.c_str());
  if (o.out.empty()) {
    std::cout << emit_table(table, o.format);
  } else {
    std::filesystem::create_directories(o.out);
    for (double x : cfg.x_points) {
      const auto part = select_x(table, x);
      const std::string stem = "model" + model_label(cfg) + "_x" + format_real(x);
      std::ofstream(std::filesystem::path(o.out) / (stem + ".csv")) << emit_csv(part);
      std::ofstream(std::filesystem::path(o.out) / (stem + ".md")) << emit_markdown(part);
    }
  }
  return table.errors.empty() ? 0 : kNumericalError;
}

int run_context(const Common& o) {
  const SimConfig cfg = build_config(o);
  const KernelSpec kernel = gaussian_kernel();
  const KernelSpec pilot = hermite_order_kernel(cfg.Lp);
  for (long long n : cfg.n_values)
    for (double x : cfg.x_points) {
      const auto c = build_context(cfg.model, kernel, pilot, cfg.L, cfg.Lp, x, n, BPolicy::mse(cfg.il_variant));
      std::printf("model=%s x=%s n=%lld variant=%s\n", model_label(cfg).c_str(), format_real(x).c_str(), n,
                  to_string(cfg.il_variant).c_str());
      std::printf("  h0=%.7f b0=%.4f I_L=%.7g f(x)=%.7g center=%.7f\n", c.h0, c.b, c.I_L, c.f_x, c.center);
      std::printf("  mu20=%.7g mu30=%.7g mu40=%.7g mu11=%.7g mu21=%.7g mu02=%.7g\n", c.mu20, c.mu30, c.mu40, c.mu11,
                  c.mu21, c.mu02);
      std::printf("  xi11=%.7g rho11=%.7g omega111=%.7g psi111=%.7g delta=%.7g C_PI=%.7g\n", c.xi11, c.rho11,
                  c.omega111, c.psi111, c.delta, c.C_PI);
      const double lo = cornish_fisher_quantile(c, CdfKind::main, cfg.alpha / 2.0);
      const double hi = cornish_fisher_quantile(c, CdfKind::main, 1.0 - cfg.alpha / 2.0);
      std::printf("  main quantiles: %.6f %.6f\n", lo, hi);
    }
  return 0;
}

int run_verify() {
  int failures = 0;
  auto check = [&](bool ok, const std::string& what) {
    std::printf("%s %s\n", ok ? "ok  " : "FAIL", what.c_str());
    failures += !ok;
  };
  const KernelSpec kernel = gaussian_kernel();
  const KernelSpec pilot = hermite_order_kernel(6);
  const auto pf = pilot_convolution_functionals(pilot, 2, 6);
  const double b_expect[2][4] = {{0.8448, 0.7908, 0.6930, 0.6351}, {0.5227, 0.4893, 0.4287, 0.3929}};
  const long long ns[] = {50, 100, 400, 1000};
  for (int m = 1; m <= 2; ++m) {
    const auto d = density_functionals(marron_wand(m), 2, 6);
    for (int i = 0; i < 4; ++i) {
      const double b = pilot_bandwidth(d, pf, 2, 6, ns[i], ILVariant::ustat);
      char buf[96];
      std::snprintf(buf, sizeof buf, "b0 model %d n=%lld: %.4f (expect %.4f)", m, ns[i], b, b_expect[m - 1][i]);
      check(std::abs(b - b_expect[m - 1][i]) < 5e-4, buf);
    }
  }
  double low = 0.0;
  for (int l = 1; l <= 5; ++l) low = std::max(low, std::abs(kernel_moment(pilot, l, 1)));
  check(low < 1e-8 && std::abs(kernel_moment(pilot, 6, 1) - 15.0) < 1e-6, "order-6 pilot moments");
  check(std::abs(kernel_moment(kernel, 2, 1) - 1.0) < 1e-10, "gaussian second moment");
  double worst = 0.0;
  for (int m = 1; m <= 2; ++m)
    for (double x : {0.0, 1.0}) {
      const auto c = build_context(marron_wand(m), kernel, pilot, 2, 6, x, 400, BPolicy::mse(ILVariant::ustat));
      for (auto k : {CdfKind::normal, CdfKind::hall2, CdfKind::main, CdfKind::pilot2})
        for (double a : {0.025, 0.05, 0.95, 0.975})
          worst = std::max(worst, std::abs(cdf_approx(c, cornish_fisher_quantile(c, k, a), k) - a));
    }
  char buf[96];
  std::snprintf(buf, sizeof buf, "quantile round-trips, max error %.2e", worst);
  check(worst <= 1e-8, buf);
  return failures ? kNumericalError : 0;
}

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--model", o.model, "Marron-Wand model")->check(CLI::IsMember({1, 2}));
  cmd->add_option("--x", o.x, "evaluation points");
  cmd->add_option("--n", o.n, "sample sizes");
  cmd->add_option("--alpha", o.alpha, "nominal level")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--variant", o.variant, "I_L estimator")->check(CLI::IsMember({"ustat", "convo", "squared"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kernel density estimation with plug-in bandwidth"};
  app.require_subcommand(1);
  Common o;
  std::string data_path;
  double b_flag = 0.0;

  auto* est = app.add_subcommand("estimate", "density estimate, plug-in bandwidth and normal CI for a data file");
  add_common(est, o);
  est->add_option("--data", data_path, "one value per line, # comments")->required()->check(CLI::ExistingFile);
  est->add_option("--b", b_flag, "pilot bandwidth (default: normal reference)")->check(CLI::PositiveNumber);

  auto* cov = app.add_subcommand("coverage", "Monte Carlo coverage table");
  add_common(cov, o);
  cov->add_option("--out", o.out, "directory for one csv and one md per (model, x)");
  cov->add_option("--reps", o.reps, "replications")->check(CLI::PositiveNumber);
  cov->add_option("--seed", o.seed, "base seed")->check(CLI::NonNegativeNumber);
  cov->add_option("--methods", o.methods, "comma list of normal,hall,main,pilot");
  cov->add_option("--format", o.format, "stdout format")->check(CLI::IsMember({"csv", "markdown"}));
  cov->add_option("--threads", o.threads, "worker threads, 0 for all cores")->check(CLI::NonNegativeNumber);

  auto* ctx = app.add_subcommand("context", "print population expansion constants");
  add_common(ctx, o);

  auto* ver = app.add_subcommand("verify", "run the built-in oracle checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsageError;
  }

  try {
    if (*est) return run_estimate(o, data_path, b_flag);
    if (*cov) return run_coverage_cmd(o);
    if (*ctx) return run_context(o);
    if (*ver) return run_verify();
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n%s", e.what(), app.help().c_str());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return kNumericalError;
  }
  return kUsageError;
}
