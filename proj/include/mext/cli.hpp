#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mext/evd.hpp"
#include "mext/excursion.hpp"
#include "mext/field_sim.hpp"
#include "mext/geometry.hpp"
#include "mext/manifold.hpp"
#include "mext/parallel.hpp"
#include "mext/pickands.hpp"

#ifndef MEXT_VERSION
#define MEXT_VERSION "0.0.0"
#endif

namespace mext::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"net",  "voronoi", "grid", "pickands", "excursion", "chi-excursion",
                                          "evd",  "tube",    "region"};
  return s;
}

class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> msgs)
      : Error("config validation failed: " + join(msgs)), messages_(std::move(msgs)) {}
  const std::vector<std::string>& messages() const { return messages_; }

 private:
  static std::string join(const std::vector<std::string>& m) {
    std::string out;
    for (std::size_t i = 0; i < m.size(); ++i) out += (i ? "; " : "") + m[i];
    return out;
  }
  std::vector<std::string> messages_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

// Typed access to one config object; problems are recorded, not thrown.
class Reader {
 public:
  Reader(const json& j, std::string path, Violations& v) : j_(&j), path_(std::move(path)), v_(&v) {}

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  const std::string& path() const { return path_; }
  Violations& violations() const { return *v_; }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return as<T>(key, fallback);
  }

  template <class T>
  T need(const std::string& key) const {
    if (!has(key)) {
      v_->add(where(key) + " is required");
      return T{};
    }
    return as<T>(key, T{});
  }

  Reader child(const std::string& key) const {
    static const json empty = json::object();
    if (!has(key)) {
      v_->add(where(key) + " is required");
      return Reader(empty, where(key), *v_);
    }
    if (!(*j_)[key].is_object()) {
      v_->add(where(key) + " must be an object");
      return Reader(empty, where(key), *v_);
    }
    return Reader((*j_)[key], where(key), *v_);
  }

 private:
  template <class T>
  T as(const std::string& key, T fallback) const {
    try {
      return (*j_)[key].template get<T>();
    } catch (const json::exception&) {
      v_->add(where(key) + " has the wrong type");
      return fallback;
    }
  }

  const json* j_;
  std::string path_;
  Violations* v_;
};

inline void check_positive(const Reader& r, const std::string& key, double x) {
  r.violations().check(x > 0.0, r.where(key) + " must be positive");
}

inline std::optional<Manifold> parse_manifold(const Reader& r) {
  auto& v = r.violations();
  const auto kind = r.need<std::string>("kind");
  try {
    if (kind == "circle") return Manifold::circle(r.get<double>("radius", 1.0));
    if (kind == "sphere") return Manifold::sphere(r.get<int>("dim", 2), r.get<double>("radius", 1.0));
    if (kind == "flat_torus") return Manifold::flat_torus(r.need<std::vector<double>>("lengths"));
    if (kind == "interval_product")
      return Manifold::interval_product(r.need<std::vector<std::pair<double, double>>>("bounds"));
    if (kind == "product") {
      auto a = parse_manifold(r.child("left"));
      auto b = parse_manifold(r.child("right"));
      if (a && b) return Manifold::product(*a, *b);
      return std::nullopt;
    }
  } catch (const Error& e) {
    v.add(r.where("kind") + ": " + e.what());
    return std::nullopt;
  }
  if (!kind.empty()) v.add(r.where("kind") + " must be one of circle, sphere, flat_torus, interval_product, product");
  return std::nullopt;
}

inline std::optional<Structure> parse_structure(const Reader& r) {
  const auto e = r.need<std::vector<int>>("block_sizes");
  const auto a = r.need<std::vector<double>>("exponents");
  const auto d = r.get<std::vector<int>>("manifold_dims", {});
  const Violations sv = Structure::validate(e, a, d);
  for (const auto& m : sv.messages()) r.violations().add(r.path() + ": " + m);
  if (!sv.empty() || e.empty()) return std::nullopt;
  return Structure(e, a, d);
}

/*!
 * Scalar kernel on M:
 *   {"family": "isotropic", "alpha", "c", "h"}: exp(-(c ||s - t|| / h)^alpha)
 *   {"family": "powered_exponential", "structure", "D", "h"}: constant D
 */
inline std::optional<CovarianceModel> parse_kernel(const Reader& r, const std::optional<Manifold>& M) {
  auto& v = r.violations();
  const auto family = r.get<std::string>("family", "isotropic");
  const double h = r.get<double>("h", 1.0);
  v.check(h > 0.0 && h <= 1.0, r.where("h") + " must lie in (0,1]");
  if (family == "isotropic") {
    const double alpha = r.get<double>("alpha", 2.0), c = r.get<double>("c", 1.0);
    check_positive(r, "c", c);
    v.check(alpha > 0.0 && alpha <= 2.0, r.where("alpha") + ": α_i ∈ (0,2] violated");
    if (!M || !v.empty()) return std::nullopt;
    return CovarianceModel::isotropic(M->ambient_dim(), alpha, c, h, M->intrinsic_dim());
  }
  if (family == "powered_exponential") {
    auto s = parse_structure(r.child("structure"));
    const auto rows = r.need<std::vector<std::vector<double>>>("D");
    if (!s || !M || !v.empty()) return std::nullopt;
    v.check(s->dim() == M->ambient_dim(), r.where("structure") + " dimension must equal the manifold's ambient dimension");
    Mat D(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != D.cols()) {
        v.add(r.where("D") + " rows must have equal length");
        return std::nullopt;
      }
      for (std::size_t j = 0; j < rows[i].size(); ++j)
        D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    if (!v.empty()) return std::nullopt;
    try {
      return CovarianceModel::powered_exponential(*s, D, h);
    } catch (const Error& e) {
      v.add(r.where("D") + ": " + e.what());
      return std::nullopt;
    }
  }
  v.add(r.where("family") + " must be isotropic or powered_exponential");
  return std::nullopt;
}

inline void check_grid(Violations& v, const std::string& what, std::size_t n) {
  v.check(n <= kMaxGridPoints, what + " has " + std::to_string(n) + " points, above the exact-sampling cap of " +
                                   std::to_string(kMaxGridPoints) + "; lower the resolution or raise h");
}

inline void check_reps(const Reader& r, std::size_t n) {
  r.violations().check(n >= 1, r.where("reps") + " must be at least 1");
}

inline std::optional<double> optional_pickands(const Reader& r) {
  if (!r.has("pickands_value")) return std::nullopt;
  const double H = r.get<double>("pickands_value", 0.0);
  check_positive(r, "pickands_value", H);
  return H;
}

inline json to_json(const Vec& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

// One output file: JSON (meta + data) or CSV (# meta lines + body).
struct OutputFile {
  std::string name;
  json data;
  std::string csv;
  bool is_csv = false;
};

struct RunRequest {
  std::string subcommand;
  json config;
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out_dir = "out";
};

struct RunResult {
  std::vector<std::string> files;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

namespace detail {

inline std::string csv_number(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

inline std::string excursion_csv(const std::vector<ExcursionReport>& rows) {
  std::ostringstream os;
  os << "u,asymptotic,empirical,empirical_coarse,stderr,n_reps,grid_points,grid_spacing,grid_limited\n";
  for (const auto& r : rows)
    os << csv_number(r.u) << ',' << csv_number(r.asymptotic) << ',' << csv_number(r.empirical) << ','
       << csv_number(r.empirical_coarse) << ',' << csv_number(r.mc_std_error) << ',' << r.n_reps << ','
       << r.grid_points << ',' << csv_number(r.grid_spacing) << ',' << (r.grid_limited ? "grid-limited" : "ok")
       << '\n';
  return os.str();
}

inline json normalization_json(const GumbelNormalization& g) {
  return {{"h", g.h},       {"a_h", g.a_h}, {"b_h", g.b_h},   {"I_h", g.I_h},
          {"pickands", g.H}, {"p", g.p},     {"route", g.route}, {"loglog_coefficient", g.loglog_coefficient}};
}

inline json coverage_json(const CoverageResult& c) {
  return {{"normalization", normalization_json(c.norm)},
          {"alpha", c.alpha},
          {"threshold", c.threshold},
          {"n_trials", c.n_trials},
          {"grid_points", c.grid_points},
          {"coverage", c.coverage},
          {"coverage_coarse", c.coverage_coarse},
          {"std_error", c.std_error},
          {"mean_region_size", c.mean_region_size},
          {"grid_limited", c.grid_limited}};
}

inline std::vector<double> u_list(const Reader& r) {
  auto u = r.need<std::vector<double>>("u");
  r.violations().check(!u.empty(), r.where("u") + " must not be empty");
  return u;
}

inline std::vector<OutputFile> run_net(const Reader& r, std::uint64_t) {
  auto M = parse_manifold(r.child("manifold"));
  const double eps = r.need<double>("epsilon");
  const int cand = r.get<int>("candidate_resolution", 10000);
  const int ref = r.get<int>("reference_resolution", cand);
  auto& v = r.violations();
  check_positive(r, "epsilon", eps);
  if (M) v.check(eps < M->reach() / 2.0, r.where("epsilon") + " must be below reach/2");
  v.check(ref >= 1, r.where("reference_resolution") + " must be positive");
  if (!v.empty()) return {};
  const auto net = build_epsilon_net(*M, eps, cand);
  const auto cert = certify_net(net, M->sample(ref));
  json pts = json::array();
  for (const auto& p : net.points) pts.push_back(to_json(p));
  json d{{"manifold", M->describe()},
         {"epsilon", eps},
         {"n_points", net.points.size()},
         {"n_candidates", net.candidates.size()},
         {"n_reference", cert.n_reference},
         {"covering_radius", cert.covering_radius},
         {"min_separation", cert.min_separation},
         {"covering_ok", cert.covering_ok},
         {"packing_ok", cert.packing_ok},
         {"packing_bound", packing_bound(*M, eps)},
         {"packing_bound_half_radius", packing_bound_half_radius(*M, eps)},
         {"points", pts}};
  return {{"net.json", d, "", false}};
}

inline std::vector<OutputFile> run_voronoi(const Reader& r, std::uint64_t) {
  auto M = parse_manifold(r.child("manifold"));
  const double eps = r.need<double>("epsilon");
  const int cand = r.get<int>("candidate_resolution", 4000);
  const int res = r.get<int>("sample_resolution", cand);
  auto& v = r.violations();
  check_positive(r, "epsilon", eps);
  if (M) v.check(eps < M->reach() / 2.0, r.where("epsilon") + " must be below reach/2");
  v.check(res >= 2, r.where("sample_resolution") + " must be at least 2");
  if (!v.empty()) return {};
  const auto net = build_epsilon_net(*M, eps, cand);
  const auto sample = M->sample(res);
  const auto vor = restricted_voronoi(net, sample);
  const auto sw = check_sandwich(vor, eps);
  const double link = r.get<double>("link", 1.5 * max_nn_gap(sample));
  json d{{"manifold", M->describe()},
         {"epsilon", eps},
         {"n_seeds", net.points.size()},
         {"n_sample", sample.size()},
         {"cell_sizes", vor.cell_sizes()},
         {"cell_components", cell_components(vor, link)},
         {"inner_violations", sw.inner_violations},
         {"outer_violations", sw.outer_violations},
         {"sandwich_ok", sw.ok()}};
  return {{"voronoi.json", d, "", false}};
}

inline std::vector<OutputFile> run_grid(const Reader& r, std::uint64_t) {
  auto M = parse_manifold(r.child("manifold"));
  auto s = parse_structure(r.child("structure"));
  const double h = r.need<double>("h"), gamma = r.need<double>("gamma"), theta = r.need<double>("theta");
  if (!r.violations().empty()) return {};
  DiscretizationGrid g;
  try {
    g = build_discretization_grid(*M, *s, h, gamma, theta);
  } catch (const Error& e) {
    r.violations().add(e.what());
    return {};
  }
  check_grid(r.violations(), "grid", g.points.size());
  json pts = json::array();
  for (const auto& p : g.points) pts.push_back(to_json(p));
  json d{{"manifold", M->describe()},
         {"h", h},
         {"gamma", gamma},
         {"theta", theta},
         {"n_points", g.points.size()},
         {"counts", g.counts},
         {"spacings", g.spacings},
         {"single_point", g.single_point},
         {"points", pts}};
  return {{"grid.json", d, "", false}};
}

inline std::vector<OutputFile> run_pickands(const Reader& r, std::uint64_t seed) {
  auto s = parse_structure(r.child("structure"));
  const double T = r.get<double>("T", 8.0), gamma = r.get<double>("gamma", 0.05);
  const auto reps = r.get<std::size_t>("reps", 20000);
  const auto method = r.get<std::string>("method", "ratio");
  auto& v = r.violations();
  check_positive(r, "T", T);
  check_positive(r, "gamma", gamma);
  check_reps(r, reps);
  v.check(method == "ratio" || method == "truncated", r.where("method") + " must be ratio or truncated");
  if (s && T > 0.0 && gamma > 0.0) {
    const double side = 2.0 * std::ceil(T / gamma - 1e-9) + 1.0;
    for (int b = 0; b < s->blocks(); ++b)
      check_grid(v, "pickands block " + std::to_string(b) + " grid", static_cast<std::size_t>(std::pow(side, s->block_size(b))));
  }
  if (!v.empty()) return {};
  const auto e = estimate_pickands(*s, T, gamma, reps, seed,
                                   method == "ratio" ? PickandsMethod::ratio : PickandsMethod::truncated);
  const auto cf = pickands_closed_form(*s);
  json d{{"estimate", e.estimate},
         {"std_error", e.std_error},
         {"T", e.T},
         {"gamma", e.gamma},
         {"n_reps", e.n_reps},
         {"excluded", e.excluded},
         {"method", to_string(e.method)},
         {"block_grid_points", e.block_grid_points},
         {"closed_form", cf ? json(*cf) : json(nullptr)}};
  return {{"pickands.json", d, "", false}};
}

inline std::vector<OutputFile> run_excursion(const Reader& r, std::uint64_t seed) {
  auto M = parse_manifold(r.child("manifold"));
  auto model = parse_kernel(r.child("kernel"), M);
  const auto us = u_list(r);
  const auto reps = r.get<std::size_t>("reps", 20000);
  const int res = r.get<int>("grid_resolution", 256);
  const int quad = r.get<int>("quad_resolution", 256);
  const auto export_reps = r.get<std::size_t>("export_field_reps", 0);
  const auto H = optional_pickands(r);
  auto& v = r.violations();
  check_reps(r, reps);
  v.check(quad >= 8, r.where("quad_resolution") + " must be at least 8");
  if (M && res >= 1) check_grid(v, "excursion grid", M->sample(res).size());
  if (model && !H && !pickands_closed_form(model->structure()))
    v.add(r.where("pickands_value") + " is required for alpha != 2 (run the pickands subcommand)");
  if (!v.empty()) return {};
  const auto rows = empirical_excursion(*M, *model, us, reps, res, seed, H, quad);
  std::vector<OutputFile> out{{"excursion.csv", {}, excursion_csv(rows), true}};
  if (export_reps > 0) {
    std::ostringstream os;
    write_field_csv(os, sample_field(*model, M->sample(res), export_reps, seed));
    out.push_back({"field.csv", {}, os.str(), true});
  }
  return out;
}

inline std::vector<OutputFile> run_chi_excursion(const Reader& r, std::uint64_t seed) {
  auto M = parse_manifold(r.child("manifold"));
  auto base = parse_kernel(r.child("kernel"), M);
  const int p = r.get<int>("p", 2);
  const auto us = u_list(r);
  const auto reps = r.get<std::size_t>("reps", 20000);
  const int res = r.get<int>("grid_resolution", 256);
  const int quad = r.get<int>("quad_resolution", 128);
  const auto H = optional_pickands(r);
  auto& v = r.violations();
  check_reps(r, reps);
  v.check(p >= 1 && p <= 3, r.where("p") + " must be 1, 2 or 3");
  if (M && res >= 1) check_grid(v, "chi-excursion grid", M->sample(res).size());
  if (base && !H && !pickands_closed_form(base->structure()))
    v.add(r.where("pickands_value") + " is required for alpha != 2 (run the pickands subcommand)");
  if (!v.empty()) return {};
  const auto chi = CovarianceModel::chi_lift(*base, p);
  const auto rows = empirical_chi_excursion(*M, chi, us, reps, res, seed, H, quad);
  return {{"chi_excursion.csv", {}, excursion_csv(rows), true}};
}

inline std::vector<OutputFile> run_evd(const Reader& r, std::uint64_t seed) {
  auto M = parse_manifold(r.child("manifold"));
  GumbelExperiment cfg{M.value_or(Manifold::circle())};
  cfg.alpha = r.get<double>("alpha", 2.0);
  cfg.c = r.get<double>("c", 0.2);
  cfg.h_list = r.need<std::vector<double>>("h");
  cfg.n_reps = r.get<std::size_t>("reps", 2000);
  cfg.spacing_factor = r.get<double>("spacing_factor", 0.05);
  cfg.quad_resolution = r.get<int>("quad_resolution", 256);
  cfg.z_grid = r.get<std::vector<double>>("z", cfg.z_grid);
  cfg.H = optional_pickands(r);
  cfg.seed = seed;
  auto& v = r.violations();
  check_positive(r, "c", cfg.c);
  check_positive(r, "spacing_factor", cfg.spacing_factor);
  v.check(cfg.alpha > 0.0 && cfg.alpha <= 2.0, r.where("alpha") + ": α_i ∈ (0,2] violated");
  v.check(cfg.n_reps >= 2, r.where("reps") + " must be at least 2");
  for (std::size_t i = 0; i < cfg.h_list.size(); ++i) {
    v.check(cfg.h_list[i] > 0.0 && cfg.h_list[i] < 1.0, r.where("h") + " entries must lie in (0,1)");
    if (i) v.check(cfg.h_list[i] < cfg.h_list[i - 1], r.where("h") + " must be decreasing");
    if (M && cfg.h_list[i] > 0.0 && cfg.c > 0.0 && cfg.spacing_factor > 0.0)
      check_grid(v, "evd grid at h = " + detail::csv_number(cfg.h_list[i]),
                 M->arc_grid(cfg.spacing_factor * cfg.h_list[i] / cfg.c).points.size());
  }
  v.check(cfg.alpha == 2.0 || cfg.H.has_value(), r.where("pickands_value") + " is required for alpha != 2");
  if (!v.empty()) return {};
  const auto rows = gumbel_limit_experiment(cfg);
  json jr = json::array();
  for (const auto& row : rows)
    jr.push_back({{"normalization", normalization_json(row.norm)},
                  {"n_reps", row.n_reps},
                  {"grid_points", row.grid_points},
                  {"grid_spacing", row.grid_spacing},
                  {"grid_limited", row.grid_limited},
                  {"z", row.z},
                  {"empirical_cdf", row.empirical_cdf},
                  {"empirical_cdf_coarse", row.empirical_cdf_coarse},
                  {"gumbel_cdf", row.gumbel},
                  {"ks", row.ks.distance},
                  {"ks_std_error", row.ks.std_error}});
  json d{{"manifold", cfg.manifold.describe()}, {"rows", jr}, {"ks_trend_ok", ks_trend_ok(rows)}};
  return {{"evd.json", d, "", false}};
}

inline std::vector<OutputFile> run_tube(const Reader& r, std::uint64_t seed) {
  auto M = parse_manifold(r.child("manifold"));
  TubeExperiment cfg;
  if (M) cfg.manifold = *M;
  cfg.base_alpha = r.get<double>("alpha_kernel", 2.0);
  cfg.c = r.get<double>("c", 0.2);
  cfg.p = r.get<int>("p", 2);
  cfg.h = r.get<double>("h", 0.02);
  cfg.alpha = r.get<double>("alpha", 0.1);
  cfg.n_trials = r.get<std::size_t>("trials", 2000);
  cfg.spacing_factor = r.get<double>("spacing_factor", 0.05);
  cfg.quad_resolution = r.get<int>("quad_resolution", 256);
  cfg.H = optional_pickands(r);
  cfg.seed = seed;
  auto& v = r.violations();
  check_positive(r, "c", cfg.c);
  check_positive(r, "spacing_factor", cfg.spacing_factor);
  v.check(cfg.base_alpha > 0.0 && cfg.base_alpha <= 2.0, r.where("alpha_kernel") + ": α_i ∈ (0,2] violated");
  v.check(cfg.p >= 1 && cfg.p <= 3, r.where("p") + " must be 1, 2 or 3");
  v.check(cfg.h > 0.0 && cfg.h < 1.0, r.where("h") + " must lie in (0,1)");
  v.check(cfg.alpha > 0.0 && cfg.alpha < 1.0, r.where("alpha") + " must lie in (0,1)");
  v.check(cfg.n_trials >= 1, r.where("trials") + " must be at least 1");
  v.check(cfg.base_alpha == 2.0 || cfg.H.has_value(), r.where("pickands_value") + " is required for alpha_kernel != 2");
  if (M && cfg.h > 0.0 && cfg.c > 0.0 && cfg.spacing_factor > 0.0)
    check_grid(v, "tube grid", M->arc_grid(cfg.spacing_factor * cfg.h / cfg.c).points.size());
  if (!v.empty()) return {};
  json d = coverage_json(tube_coverage_experiment(cfg));
  d["manifold"] = cfg.manifold.describe();
  return {{"tube.json", d, "", false}};
}

inline std::vector<OutputFile> run_region(const Reader& r, std::uint64_t seed) {
  RegionExperiment cfg;
  cfg.base_alpha = r.get<double>("alpha_kernel", 2.0);
  cfg.c = r.get<double>("c", 0.2);
  cfg.h = r.get<double>("h", 0.02);
  cfg.alpha = r.get<double>("alpha", 0.1);
  cfg.n_trials = r.get<std::size_t>("trials", 2000);
  cfg.spacing_factor = r.get<double>("spacing_factor", 0.05);
  cfg.lattice = r.get<int>("lattice", 20);
  cfg.half_width = r.get<double>("half_width", 1.5);
  cfg.quad_resolution = r.get<int>("quad_resolution", 256);
  cfg.H = optional_pickands(r);
  cfg.seed = seed;
  auto& v = r.violations();
  check_positive(r, "c", cfg.c);
  check_positive(r, "spacing_factor", cfg.spacing_factor);
  v.check(cfg.base_alpha > 0.0 && cfg.base_alpha <= 2.0, r.where("alpha_kernel") + ": α_i ∈ (0,2] violated");
  v.check(cfg.h > 0.0 && cfg.h < 1.0, r.where("h") + " must lie in (0,1)");
  v.check(cfg.alpha > 0.0 && cfg.alpha < 1.0, r.where("alpha") + " must lie in (0,1)");
  v.check(cfg.n_trials >= 1, r.where("trials") + " must be at least 1");
  v.check(cfg.lattice >= 2, r.where("lattice") + " must be at least 2");
  v.check(cfg.half_width > 1.0, r.where("half_width") + " must exceed 1");
  v.check(cfg.base_alpha == 2.0 || cfg.H.has_value(), r.where("pickands_value") + " is required for alpha_kernel != 2");
  if (cfg.h > 0.0 && cfg.c > 0.0 && cfg.spacing_factor > 0.0 && cfg.lattice >= 0)
    check_grid(v, "region grid",
               Manifold::circle().arc_grid(cfg.spacing_factor * cfg.h / cfg.c).points.size() +
                   static_cast<std::size_t>(cfg.lattice) * static_cast<std::size_t>(cfg.lattice));
  if (!v.empty()) return {};
  return {{"region.json", coverage_json(region_containment_experiment(cfg)), "", false}};
}

}  // namespace detail

/*!
 * Validates the config for one subcommand and runs it. Every violated
 * precondition is reported in one ValidationError; outputs go to
 * out_dir/<subcommand file> only.
 */
inline RunResult run(const RunRequest& req) {
  const auto t0 = std::chrono::steady_clock::now();
  Violations v;
  const auto& subs = subcommands();
  if (std::find(subs.begin(), subs.end(), req.subcommand) == subs.end())
    throw ValidationError({"unknown subcommand '" + req.subcommand + "'"});
  if (!req.config.is_object()) throw ValidationError({"config must be a JSON object"});
  Reader root(req.config, "", v);
  const int version = root.get<int>("schema_version", kSchemaVersion);
  v.check(version == kSchemaVersion, "schema_version " + std::to_string(version) + " is not supported (expected " +
                                         std::to_string(kSchemaVersion) + ")");
  const std::uint64_t seed = req.seed ? *req.seed : root.get<std::uint64_t>("seed", 1);
  v.check(req.threads >= 0, "--threads must be nonnegative");
  set_max_threads(req.threads);

  std::vector<OutputFile> files;
  const std::string& s = req.subcommand;
  if (s == "net") files = detail::run_net(root, seed);
  else if (s == "voronoi") files = detail::run_voronoi(root, seed);
  else if (s == "grid") files = detail::run_grid(root, seed);
  else if (s == "pickands") files = detail::run_pickands(root, seed);
  else if (s == "excursion") files = detail::run_excursion(root, seed);
  else if (s == "chi-excursion") files = detail::run_chi_excursion(root, seed);
  else if (s == "evd") files = detail::run_evd(root, seed);
  else if (s == "tube") files = detail::run_tube(root, seed);
  else if (s == "region") files = detail::run_region(root, seed);
  if (!v.empty()) throw ValidationError(v.messages());

  RunResult res;
  res.seed = seed;
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::string canonical = req.config.dump();
  json meta{{"schema_version", kSchemaVersion},
            {"artifact_version", MEXT_VERSION},
            {"subcommand", s},
            {"seed", seed},
            {"threads", req.threads},
            {"config_hash", hex64(fnv1a(canonical))},
            {"config", req.config},
            {"wall_clock_seconds", res.wall_seconds},
            {"finished_unix", std::time(nullptr)}};

  std::filesystem::create_directories(req.out_dir);
  for (const auto& f : files) {
    const auto path = std::filesystem::path(req.out_dir) / f.name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    if (f.is_csv) {
      os << "# meta " << meta.dump() << '\n' << f.csv;
    } else {
      json doc{{"meta", meta}, {"data", f.data}};
      os << doc.dump(2) << '\n';
    }
    res.files.push_back(path.string());
  }
  return res;
}

/// The data section of an output file: "data" of a JSON file, non-comment lines of a CSV.
inline std::string data_section(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  const std::string text = ss.str();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json") return json::parse(text).at("data").dump();
  std::istringstream ls(text);
  std::string line, out;
  while (std::getline(ls, line))
    if (line.empty() || line[0] != '#') out += line + '\n';
  return out;
}

}  // namespace mext::cli
