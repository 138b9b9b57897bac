#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bandwidth.hpp"
#include "density.hpp"
#include "edgeworth.hpp"
#include "kde.hpp"
#include "kernel.hpp"
#include "numerics.hpp"

namespace kdepi {

enum class Method { normal, hall, main, pilot };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::normal: return "normal";
    case Method::hall: return "hall";
    case Method::main: return "main";
    case Method::pilot: return "pilot";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::normal, Method::hall, Method::main, Method::pilot})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline CdfKind cdf_kind(Method m) {
  switch (m) {
    case Method::normal: return CdfKind::normal;
    case Method::hall: return CdfKind::hall2;
    case Method::main: return CdfKind::main;
    case Method::pilot: return CdfKind::pilot2;
  }
  return CdfKind::normal;
}

struct SimConfig {
  int model_id = 1;  // 0 for an inline mixture
  MixtureDensity model = marron_wand(1);
  std::vector<double> x_points{0.0};
  std::vector<long long> n_values{100};
  int replications = 2000;
  double alpha = 0.05;
  int L = 2;
  int Lp = 6;
  ILVariant il_variant = ILVariant::ustat;
  std::uint64_t seed = 20240611;
  std::vector<Method> methods{Method::normal, Method::hall, Method::main, Method::pilot};
  int threads = 0;  // 0: hardware concurrency
  double bandwidth_scale = 1.0;  // multiplies the plug-in bandwidth; sensitivity studies only

  void validate() const {
    if (replications < 1) throw std::invalid_argument("SimConfig: replications must be >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("SimConfig: alpha must lie in (0,1)");
    if (x_points.empty() || n_values.empty() || methods.empty())
      throw std::invalid_argument("SimConfig: x, n and methods must be non-empty");
    for (auto n : n_values)
      if (n < 2) throw std::invalid_argument("SimConfig: every n must be >= 2");
    if (L < 1 || Lp < 2 || Lp % 2) throw std::invalid_argument("SimConfig: need L >= 1 and even Lp >= 2");
    if (!(bandwidth_scale > 0.0)) throw std::invalid_argument("SimConfig: bandwidth_scale must be positive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_real(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  std::size_t pos = 0;
  const long long v = std::stoll(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

}  // namespace detail

// "w:mean:sd, w:mean:sd, ..."
inline MixtureDensity parse_mixture(const std::string& s) {
  std::vector<MixtureComponent> comps;
  for (const auto& item : detail::split_list(s)) {
    const auto parts = detail::split_list(item, ':');
    if (parts.size() != 3) throw std::invalid_argument("mixture component must be weight:mean:sd, got '" + item + "'");
    comps.push_back({detail::parse_real(parts[0]), detail::parse_real(parts[1]), detail::parse_real(parts[2])});
  }
  return MixtureDensity(std::move(comps));
}

inline void apply_setting(SimConfig& cfg, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "model") {
    cfg.model_id = static_cast<int>(parse_int(value));
    cfg.model = marron_wand(cfg.model_id);
  } else if (key == "mixture") {
    cfg.model_id = 0;
    cfg.model = parse_mixture(value);
  } else if (key == "x") {
    cfg.x_points.clear();
    for (const auto& v : split_list(value)) cfg.x_points.push_back(parse_real(v));
  } else if (key == "n") {
    cfg.n_values.clear();
    for (const auto& v : split_list(value)) cfg.n_values.push_back(parse_int(v));
  } else if (key == "replications") {
    cfg.replications = static_cast<int>(parse_int(value));
  } else if (key == "alpha") {
    cfg.alpha = parse_real(value);
  } else if (key == "L") {
    cfg.L = static_cast<int>(parse_int(value));
  } else if (key == "Lp") {
    cfg.Lp = static_cast<int>(parse_int(value));
  } else if (key == "variant") {
    cfg.il_variant = parse_variant(value);
  } else if (key == "seed") {
    cfg.seed = static_cast<std::uint64_t>(parse_int(value));
  } else if (key == "methods") {
    cfg.methods.clear();
    for (const auto& v : split_list(value)) cfg.methods.push_back(parse_method(v));
  } else if (key == "bandwidth_scale") {
    cfg.bandwidth_scale = parse_real(value);
  } else if (key == "threads") {
    cfg.threads = static_cast<int>(parse_int(value));
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'");
  }
}

inline SimConfig parse_config(std::istream& is) {
  SimConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    try {
      apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path + "'");
  return parse_config(in);
}

struct QuantilePair {
  double lower = 0.0;  // w_{alpha/2}
  double upper = 0.0;  // w_{1-alpha/2}
};

struct Interval {
  double lo = 0.0, hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double v) const { return lo <= v && v <= hi; }
};

// [fhat - w_{a/2} s, fhat - w_{1-a/2} s] with s = sqrt(mu20 / (n h)), normalised so lo <= hi.
inline Interval make_interval(double f_hat, double h_hat, long long n, double mu20, QuantilePair w) {
  if (!(h_hat > 0.0) || !(mu20 > 0.0)) throw std::invalid_argument("make_interval: h_hat and mu20 must be positive");
  if (!std::isfinite(w.lower) || !std::isfinite(w.upper)) throw std::domain_error("make_interval: non-finite quantile");
  const double s = std::sqrt(mu20 / (static_cast<double>(n) * h_hat));
  const double a = f_hat - w.lower * s, b = f_hat - w.upper * s;
  return {std::min(a, b), std::max(a, b)};
}

inline std::vector<Interval> make_intervals(double f_hat, double h_hat, long long n, double mu20,
                                            const std::vector<QuantilePair>& ws) {
  std::vector<Interval> out;
  for (const auto& w : ws) out.push_back(make_interval(f_hat, h_hat, n, mu20, w));
  return out;
}

// Everything a replication needs at one (n, x), fixed before the replication loop.
struct CellPlan {
  ExpansionContext ctx;
  std::vector<QuantilePair> quantiles;  // one per cfg.methods entry
};

inline CellPlan plan_cell(const SimConfig& cfg, long long n, double x, const KernelSpec& kernel,
                          const KernelSpec& pilot) {
  const ILVariant bvar = cfg.il_variant == ILVariant::ustat ? ILVariant::ustat : ILVariant::convo;
  CellPlan p;
  p.ctx = build_context(cfg.model, kernel, pilot, cfg.L, cfg.Lp, x, n, BPolicy::mse(bvar));
  p.ctx.variant = cfg.il_variant;
  if (!(p.ctx.mu20 > 0.0) || !std::isfinite(p.ctx.mu20))
    throw std::domain_error("plan_cell: mu20 is not positive (density vanishes at x)");
  for (Method m : cfg.methods) {
    const CdfKind k = cdf_kind(m);
    p.quantiles.push_back({cornish_fisher_quantile(p.ctx, k, cfg.alpha / 2.0),
                           cornish_fisher_quantile(p.ctx, k, 1.0 - cfg.alpha / 2.0)});
  }
  return p;
}

struct ReplicationOutcome {
  double h_hat = 0.0;
  double f_hat = 0.0;
  std::vector<bool> covered;
  std::vector<double> lengths;
};

inline ReplicationOutcome evaluate_replication(const std::vector<double>& data, double h_hat, const KernelSpec& kernel,
                                               const CellPlan& plan) {
  ReplicationOutcome r;
  r.h_hat = h_hat;
  r.f_hat = kde(data, kernel, h_hat, plan.ctx.x);
  for (const auto& iv : make_intervals(r.f_hat, h_hat, plan.ctx.n, plan.ctx.mu20, plan.quantiles)) {
    if (!std::isfinite(iv.length())) throw std::domain_error("replication: non-finite interval length");
    r.covered.push_back(iv.contains(plan.ctx.center));
    r.lengths.push_back(iv.length());
  }
  return r;
}

inline ReplicationOutcome run_replication(const SimConfig& cfg, const CellPlan& plan, const KernelSpec& kernel,
                                          const KernelConstants& kc, RngStream stream) {
  const auto data = sample(cfg.model, static_cast<std::size_t>(plan.ctx.n), stream);
  const double I_hat = estimate_IL(data, plan.ctx.pilot, cfg.L, plan.ctx.b, cfg.il_variant);
  return evaluate_replication(data, cfg.bandwidth_scale * plugin_h(kc, cfg.L, I_hat, plan.ctx.n), kernel, plan);
}

struct CoverageRow {
  long long n = 0;
  double x = 0.0;
  Method method = Method::normal;
  double coverage = 0.0;
  double avg_length = 0.0;
  double mc_std_err = 0.0;
  double h0 = 0.0, b0 = 0.0, center = 0.0, mu20 = 0.0;
};

struct CellError {
  long long n = 0;
  double x = 0.0;
  std::string message;
};

struct CoverageTable {
  SimConfig config;
  std::vector<CoverageRow> rows;
  std::vector<CellError> errors;
  double mean_h_hat_ratio = 0.0;  // mean of h_hat / h0 over all replications
};

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(r) for r in [0, count) on `threads` workers; each index is processed exactly once.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int r = 0; r < count; ++r) fn(r);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errs(threads);
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (int r = next++; r < count; r = next++) fn(r);
      } catch (...) {
        errs[t] = std::current_exception();
        next = count;
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);
}

inline CoverageTable run_coverage(const SimConfig& cfg) {
  cfg.validate();
  const KernelSpec kernel = gaussian_kernel();
  const KernelSpec pilot = hermite_order_kernel(cfg.Lp);
  const KernelConstants kc = kernel_constants(kernel);
  const int threads = resolve_threads(cfg.threads);
  const int R = cfg.replications;
  const std::size_t M = cfg.methods.size();

  CoverageTable table;
  table.config = cfg;
  double ratio_sum = 0.0;
  long long ratio_count = 0;
  for (long long n : cfg.n_values) {
    std::vector<CellPlan> plans;
    std::vector<double> xs;
    for (double x : cfg.x_points) {
      try {
        plans.push_back(plan_cell(cfg, n, x, kernel, pilot));
        xs.push_back(x);
      } catch (const std::exception& e) {
        table.errors.push_back({n, x, e.what()});
      }
    }
    if (plans.empty()) continue;
    const double b = plans.front().ctx.b;
    const double h0 = plans.front().ctx.h0;

    // One sample and one plug-in bandwidth per replication, shared by every x.
    std::vector<std::vector<ReplicationOutcome>> out(R);
    parallel_for(R, threads, [&](int r) {
      const auto data = sample(cfg.model, static_cast<std::size_t>(n), RngStream{cfg.seed, static_cast<std::uint64_t>(r)});
      const double I_hat = estimate_IL(data, pilot, cfg.L, b, cfg.il_variant);
      const double h_hat = cfg.bandwidth_scale * plugin_h(kc, cfg.L, I_hat, n);
      out[r].reserve(plans.size());
      for (const auto& p : plans) out[r].push_back(evaluate_replication(data, h_hat, kernel, p));
    });

    for (int r = 0; r < R; ++r) ratio_sum += out[r].front().h_hat / h0;
    ratio_count += R;
    for (std::size_t i = 0; i < plans.size(); ++i) {
      for (std::size_t m = 0; m < M; ++m) {
        long long hits = 0;
        double len = 0.0;
        for (int r = 0; r < R; ++r) {
          hits += out[r][i].covered[m] ? 1 : 0;
          len += out[r][i].lengths[m];
        }
        CoverageRow row;
        row.n = n;
        row.x = xs[i];
        row.method = cfg.methods[m];
        row.coverage = static_cast<double>(hits) / R;
        row.avg_length = len / R;
        row.mc_std_err = std::sqrt(row.coverage * (1.0 - row.coverage) / R);
        row.h0 = plans[i].ctx.h0;
        row.b0 = plans[i].ctx.b;
        row.center = plans[i].ctx.center;
        row.mu20 = plans[i].ctx.mu20;
        table.rows.push_back(row);
      }
    }
  }
  if (ratio_count) table.mean_h_hat_ratio = ratio_sum / ratio_count;
  // Rows ordered by (x, method, n) for stable emission.
  std::stable_sort(table.rows.begin(), table.rows.end(), [&](const CoverageRow& a, const CoverageRow& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.n < b.n;
  });
  return table;
}

inline std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string model_label(const SimConfig& cfg) {
  return cfg.model_id > 0 ? std::to_string(cfg.model_id) : std::string("custom");
}

inline std::string emit_csv(const CoverageTable& t) {
  std::ostringstream os;
  os << "model,x,n,method,coverage,avg_length,mc_std_err,h0,b0,center,mu20\n";
  const std::string model = model_label(t.config);
  for (const auto& r : t.rows) {
    os << model << ',' << format_real(r.x) << ',' << r.n << ',' << to_string(r.method) << ','
       << format_real(r.coverage) << ',' << format_real(r.avg_length) << ',' << format_real(r.mc_std_err) << ','
       << format_real(r.h0) << ',' << format_real(r.b0) << ',' << format_real(r.center) << ','
       << format_real(r.mu20) << '\n';
  }
  return os.str();
}

namespace detail {

inline std::string fixed4(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << v;
  return os.str();
}

}  // namespace detail

// One block per x: rows are methods, columns are n with CP and average length. Within each n
// column ** marks the coverage closest to 1 - alpha and * the second closest (ties share a mark).
inline std::string emit_markdown(const CoverageTable& t) {
  std::ostringstream os;
  const double target = 1.0 - t.config.alpha;
  std::vector<double> xs;
  for (const auto& r : t.rows)
    if (std::find(xs.begin(), xs.end(), r.x) == xs.end()) xs.push_back(r.x);
  if (xs.empty()) {
    os << "| method |\n|---|\n";
    return os.str();
  }
  for (double x : xs) {
    std::vector<long long> ns;
    std::vector<Method> ms;
    std::map<std::pair<int, long long>, const CoverageRow*> cell;
    for (const auto& r : t.rows) {
      if (r.x != x) continue;
      if (std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
      if (std::find(ms.begin(), ms.end(), r.method) == ms.end()) ms.push_back(r.method);
      cell[{static_cast<int>(r.method), r.n}] = &r;
    }
    std::map<std::pair<int, long long>, std::string> mark;
    for (long long n : ns) {
      std::vector<double> dist;
      for (Method m : ms) {
        auto it = cell.find({static_cast<int>(m), n});
        if (it != cell.end()) dist.push_back(std::round(std::abs(it->second->coverage - target) * 1e9));
      }
      std::sort(dist.begin(), dist.end());
      dist.erase(std::unique(dist.begin(), dist.end()), dist.end());
      for (Method m : ms) {
        auto it = cell.find({static_cast<int>(m), n});
        if (it == cell.end()) continue;
        const double d = std::round(std::abs(it->second->coverage - target) * 1e9);
        if (!dist.empty() && d == dist[0]) mark[{static_cast<int>(m), n}] = "**";
        else if (dist.size() > 1 && d == dist[1]) mark[{static_cast<int>(m), n}] = "*";
      }
    }
    os << "model " << model_label(t.config) << ", x = " << format_real(x) << "\n\n| method |";
    for (long long n : ns) os << " n=" << n << " CP | n=" << n << " Ave.Length |";
    os << "\n|---|";
    for (std::size_t i = 0; i < ns.size(); ++i) os << "---|---|";
    os << '\n';
    for (Method m : ms) {
      os << "| " << to_string(m) << " |";
      for (long long n : ns) {
        auto it = cell.find({static_cast<int>(m), n});
        if (it == cell.end()) {
          os << " | |";
          continue;
        }
        os << ' ' << detail::fixed4(it->second->coverage) << mark[{static_cast<int>(m), n}] << " | "
           << detail::fixed4(it->second->avg_length) << " |";
      }
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

inline std::string emit_table(const CoverageTable& t, const std::string& format) {
  if (format == "csv") return emit_csv(t);
  if (format == "markdown") return emit_markdown(t);
  throw std::invalid_argument("unknown table format '" + format + "'");
}

// Sub-table holding only the rows at x.
inline CoverageTable select_x(const CoverageTable& t, double x) {
  CoverageTable out;
  out.config = t.config;
  out.config.x_points = {x};
  for (const auto& r : t.rows)
    if (r.x == x) out.rows.push_back(r);
  return out;
}

}  // namespace kdepi
