#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "edgeworth.hpp"

namespace kdepi {

inline constexpr const char* kContextCacheHeader = "# kdepi-context v1";

inline std::string model_key(const MixtureDensity& f) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& c : f.components()) os << c.weight << ':' << c.mean << ':' << c.sd << ';';
  return os.str();
}

// Identifies a context: model, kernel ids, orders, point, sample size, pilot policy.
inline std::string context_key(const MixtureDensity& f, const KernelSpec& k, const KernelSpec& pilot, int L, int Lp,
                               double x, long long n, const BPolicy& p) {
  std::ostringstream os;
  os << std::setprecision(17) << "model=" << model_key(f) << " kernel=" << k.name() << " pilot=" << pilot.name()
     << " L=" << L << " Lp=" << Lp << " x=" << x << " n=" << n << " variant=" << to_string(p.variant)
     << " bmode=" << static_cast<int>(p.mode) << " b=" << p.value;
  return os.str();
}

inline void write_context(std::ostream& os, const ExpansionContext& c, const std::string& key) {
  os << kContextCacheHeader << '\n' << "key = " << key << '\n' << std::setprecision(17);
  auto put = [&](const char* name, double v) { os << name << " = " << v << '\n'; };
  put("I_L", c.I_L);
  put("h0", c.h0);
  put("b", c.b);
  put("f_x", c.f_x);
  put("center", c.center);
  put("mu20", c.mu20);
  put("mu30", c.mu30);
  put("mu40", c.mu40);
  put("mu11", c.mu11);
  put("mu21", c.mu21);
  put("mu02", c.mu02);
  put("xi11", c.xi11);
  put("rho11", c.rho11);
  put("omega111", c.omega111);
  put("psi111", c.psi111);
  put("delta", c.delta);
  put("C_PI", c.C_PI);
  put("script_L", c.script_L);
  put("has_pilot", c.has_pilot ? 1.0 : 0.0);
  for (std::size_t l = 0; l < c.C_Gamma.size(); ++l) os << "C_Gamma_" << l << " = " << c.C_Gamma[l] << '\n';
}

// Fills the scalar fields of a context whose structural fields (model, kernels, L, Lp, x, n) are
// already set. Returns false when the stream is not a cache entry for `key`.
inline bool read_context(std::istream& is, ExpansionContext& c, const std::string& key) {
  std::string line;
  if (!std::getline(is, line) || line != kContextCacheHeader) return false;
  std::map<std::string, std::string> kv;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("context cache: malformed line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (kv["key"] != key) return false;
  auto get = [&](const std::string& name) {
    auto it = kv.find(name);
    if (it == kv.end()) throw std::runtime_error("context cache: missing field " + name);
    return std::stod(it->second);
  };
  c.I_L = get("I_L");
  c.h0 = get("h0");
  c.b = get("b");
  c.f_x = get("f_x");
  c.center = get("center");
  c.mu20 = get("mu20");
  c.mu30 = get("mu30");
  c.mu40 = get("mu40");
  c.mu11 = get("mu11");
  c.mu21 = get("mu21");
  c.mu02 = get("mu02");
  c.xi11 = get("xi11");
  c.rho11 = get("rho11");
  c.omega111 = get("omega111");
  c.psi111 = get("psi111");
  c.delta = get("delta");
  c.C_PI = get("C_PI");
  c.script_L = get("script_L");
  c.has_pilot = get("has_pilot") != 0.0;
  c.C_Gamma.clear();
  for (int l = 0; l < c.L; ++l) c.C_Gamma.push_back(get("C_Gamma_" + std::to_string(l)));
  return true;
}

// Directory of cached contexts, one file per key.
class ContextCache {
 public:
  explicit ContextCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

  ExpansionContext get(const MixtureDensity& f, const KernelSpec& k, const KernelSpec& pilot, int L, int Lp, double x,
                       long long n, BPolicy p, const ContextOptions& opt = {}) const {
    const std::string key = context_key(f, k, pilot, L, Lp, x, n, p);
    const auto path = dir_ / (std::to_string(std::hash<std::string>{}(key)) + ".ctx");
    if (std::ifstream in{path}) {
      ExpansionContext c;
      c.model = f;
      c.kernel = k;
      c.pilot = pilot;
      c.L = L;
      c.Lp = Lp;
      c.x = x;
      c.n = n;
      c.variant = p.variant;
      if (read_context(in, c, key)) return c;
    }
    auto c = build_context(f, k, pilot, L, Lp, x, n, p, opt);
    std::filesystem::create_directories(dir_);
    std::ofstream out{path};
    write_context(out, c, key);
    return c;
  }

 private:
  std::filesystem::path dir_;
};

}  // namespace kdepi
