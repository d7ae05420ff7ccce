// Batch front end: JSON experiment configs, family generators and the command
// implementations behind tools/sparsemb. Commands return JSON reports; the
// caller decides where to write them.
#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sparsemb/bessel.hpp"
#include "sparsemb/embedding.hpp"
#include "sparsemb/sparse.hpp"

namespace sparsemb::cli {

using json = nlohmann::json;

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericError = 3 };

struct FamilySpec {
  /// tower | annuli | level | full_tree | cubes | file
  std::string generator = "tower";
  std::optional<int> level_min;
  std::optional<int> level_max;
  std::vector<std::string> cubes;
  std::string path;
};

struct BesselConfig {
  double alpha = 0.5;
  std::vector<double> lambdas{0.25, 0.5, 2.0, 4.0};
  int points = 50;
  int samples = 200;
  std::vector<double> epsilons{0.1, 0.01};
  /// synthetic | empirical
  std::string profile = "empirical";
  double c0 = 1.0;
  int cap = 60;
  int pairs = 200;
  double min_distance = 1e-3;
  double max_distance = 4.0;
};

struct ConditionsConfig {
  std::string weight = "lebesgue";
  double p = 2, q = 2, alpha = 0.5, theta = 2;
  int n = 2;
  double theta1 = 2, theta2 = 2;
  double lambda = 1;
};

struct SeriesConfig {
  std::optional<double> r;
  double rho = -1;
  double threshold = 1e6;
};

struct ExperimentConfig {
  std::string command = "a0";
  int d = 1;
  std::vector<int> shift{0};
  std::vector<double> p{2, 2};
  std::vector<std::string> weights{"lebesgue", "lebesgue"};
  std::string kernel = "riesz:alpha=0.5";
  FamilySpec family;
  int k_min = 0;
  int k_max = 8;
  std::string radius = "1";
  std::optional<int> mesh_level;
  double theta = 2;
  /// plain | theta
  std::string averaging = "plain";
  /// auto | sup | sum
  std::string variant = "auto";
  std::uint64_t seed = 1;
  int trials = 16;
  int iters = 50;
  int restarts = 2;
  double tol = kDefaultQuadTol;
  double ap_p = 2;
  SeriesConfig series;
  BesselConfig bessel;
  ConditionsConfig conditions;
  std::string out_dir = "out";
};

// ---- JSON round trip ------------------------------------------------------------

namespace detail {

template <typename T>
void opt_to(json& j, const char* key, const std::optional<T>& v)
{
  j[key] = v ? json(*v) : json(nullptr);
}

template <typename T>
void opt_from(const json& j, const char* key, std::optional<T>& v)
{
  if (!j.contains(key)) return;
  if (j.at(key).is_null()) v.reset();
  else v = j.at(key).get<T>();
}

template <typename T>
void get_if(const json& j, const char* key, T& v)
{
  if (j.contains(key)) v = j.at(key).get<T>();
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where)
{
  if (!j.is_object()) throw ParseError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* key : keys) ok = ok || k == key;
    if (!ok) throw ParseError("unknown key '" + k + "' in " + where);
  }
}

}  // namespace detail

inline json to_json(const ExperimentConfig& c)
{
  json j;
  j["command"] = c.command;
  json prob;
  prob["d"] = c.d;
  prob["shift"] = c.shift;
  prob["p"] = c.p;
  prob["weights"] = c.weights;
  prob["kernel"] = c.kernel;
  prob["theta"] = c.theta;
  prob["averaging"] = c.averaging;
  prob["variant"] = c.variant;
  prob["tol"] = c.tol;
  j["problem"] = prob;
  json fam;
  fam["generator"] = c.family.generator;
  detail::opt_to(fam, "level_min", c.family.level_min);
  detail::opt_to(fam, "level_max", c.family.level_max);
  fam["cubes"] = c.family.cubes;
  fam["path"] = c.family.path;
  j["family"] = fam;
  json win;
  win["k_min"] = c.k_min;
  win["k_max"] = c.k_max;
  win["radius"] = c.radius;
  detail::opt_to(win, "mesh_level", c.mesh_level);
  j["window"] = win;
  j["run"] = {{"seed", c.seed}, {"trials", c.trials}, {"iters", c.iters}, {"restarts", c.restarts}};
  j["ap"] = {{"p", c.ap_p}};
  json ser;
  detail::opt_to(ser, "r", c.series.r);
  ser["rho"] = c.series.rho;
  ser["threshold"] = c.series.threshold;
  j["series"] = ser;
  const auto& b = c.bessel;
  j["bessel"] = {{"alpha", b.alpha},     {"lambdas", b.lambdas}, {"points", b.points},
                 {"samples", b.samples}, {"epsilons", b.epsilons}, {"profile", b.profile},
                 {"c0", b.c0},           {"cap", b.cap},         {"pairs", b.pairs},
                 {"min_distance", b.min_distance}, {"max_distance", b.max_distance}};
  const auto& k = c.conditions;
  j["conditions"] = {{"weight", k.weight}, {"p", k.p},         {"q", k.q},           {"alpha", k.alpha},
                     {"theta", k.theta},   {"n", k.n},         {"theta1", k.theta1}, {"theta2", k.theta2},
                     {"lambda", k.lambda}};
  j["output"] = {{"dir", c.out_dir}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j)
{
  ExperimentConfig c;
  try {
    detail::reject_unknown(j,
                           {"command", "problem", "family", "window", "run", "ap", "series", "bessel", "conditions",
                            "output"},
                           "config");
    detail::get_if(j, "command", c.command);
    if (j.contains("problem")) {
      const auto& p = j.at("problem");
      detail::reject_unknown(p, {"d", "shift", "p", "weights", "kernel", "theta", "averaging", "variant", "tol"},
                             "problem");
      detail::get_if(p, "d", c.d);
      c.shift.assign(c.d, 0);
      detail::get_if(p, "shift", c.shift);
      detail::get_if(p, "p", c.p);
      detail::get_if(p, "weights", c.weights);
      detail::get_if(p, "kernel", c.kernel);
      detail::get_if(p, "theta", c.theta);
      detail::get_if(p, "averaging", c.averaging);
      detail::get_if(p, "variant", c.variant);
      detail::get_if(p, "tol", c.tol);
    }
    if (j.contains("family")) {
      const auto& f = j.at("family");
      detail::reject_unknown(f, {"generator", "level_min", "level_max", "cubes", "path"}, "family");
      detail::get_if(f, "generator", c.family.generator);
      detail::opt_from(f, "level_min", c.family.level_min);
      detail::opt_from(f, "level_max", c.family.level_max);
      detail::get_if(f, "cubes", c.family.cubes);
      detail::get_if(f, "path", c.family.path);
    }
    if (j.contains("window")) {
      const auto& w = j.at("window");
      detail::reject_unknown(w, {"k_min", "k_max", "radius", "mesh_level"}, "window");
      detail::get_if(w, "k_min", c.k_min);
      detail::get_if(w, "k_max", c.k_max);
      if (w.contains("radius")) {
        const auto& r = w.at("radius");
        c.radius = r.is_string() ? r.get<std::string>() : r.dump();
      }
      detail::opt_from(w, "mesh_level", c.mesh_level);
    }
    if (j.contains("run")) {
      const auto& r = j.at("run");
      detail::reject_unknown(r, {"seed", "trials", "iters", "restarts"}, "run");
      detail::get_if(r, "seed", c.seed);
      detail::get_if(r, "trials", c.trials);
      detail::get_if(r, "iters", c.iters);
      detail::get_if(r, "restarts", c.restarts);
    }
    if (j.contains("ap")) {
      detail::reject_unknown(j.at("ap"), {"p"}, "ap");
      detail::get_if(j.at("ap"), "p", c.ap_p);
    }
    if (j.contains("series")) {
      const auto& s = j.at("series");
      detail::reject_unknown(s, {"r", "rho", "threshold"}, "series");
      detail::opt_from(s, "r", c.series.r);
      detail::get_if(s, "rho", c.series.rho);
      detail::get_if(s, "threshold", c.series.threshold);
    }
    if (j.contains("bessel")) {
      const auto& b = j.at("bessel");
      detail::reject_unknown(b,
                             {"alpha", "lambdas", "points", "samples", "epsilons", "profile", "c0", "cap", "pairs",
                              "min_distance", "max_distance"},
                             "bessel");
      auto& o = c.bessel;
      detail::get_if(b, "alpha", o.alpha);
      detail::get_if(b, "lambdas", o.lambdas);
      detail::get_if(b, "points", o.points);
      detail::get_if(b, "samples", o.samples);
      detail::get_if(b, "epsilons", o.epsilons);
      detail::get_if(b, "profile", o.profile);
      detail::get_if(b, "c0", o.c0);
      detail::get_if(b, "cap", o.cap);
      detail::get_if(b, "pairs", o.pairs);
      detail::get_if(b, "min_distance", o.min_distance);
      detail::get_if(b, "max_distance", o.max_distance);
    }
    if (j.contains("conditions")) {
      const auto& k = j.at("conditions");
      detail::reject_unknown(k, {"weight", "p", "q", "alpha", "theta", "n", "theta1", "theta2", "lambda"},
                             "conditions");
      auto& o = c.conditions;
      detail::get_if(k, "weight", o.weight);
      detail::get_if(k, "p", o.p);
      detail::get_if(k, "q", o.q);
      detail::get_if(k, "alpha", o.alpha);
      detail::get_if(k, "theta", o.theta);
      detail::get_if(k, "n", o.n);
      detail::get_if(k, "theta1", o.theta1);
      detail::get_if(k, "theta2", o.theta2);
      detail::get_if(k, "lambda", o.lambda);
    }
    if (j.contains("output")) {
      detail::reject_unknown(j.at("output"), {"dir"}, "output");
      detail::get_if(j.at("output"), "dir", c.out_dir);
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  return c;
}

inline ExperimentConfig parse_config(const std::string& text)
{
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline std::string emit_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

inline ExperimentConfig load_config(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---- resolution -------------------------------------------------------------------

inline Window window_of(const ExperimentConfig& c)
{
  Window w;
  w.k_min = c.k_min;
  w.k_max = c.k_max;
  try {
    w.radius = Rational(c.radius);
  } catch (const std::exception&) {
    throw ParseError("bad window radius '" + c.radius + "'");
  }
  w.validate();
  return w;
}

inline int mesh_level_of(const ExperimentConfig& c) { return c.mesh_level.value_or(c.k_max); }

/// Cubes of a generator, in family order.
///   tower:     [0, 2^{-k})^d for k = level_min .. level_max
///   annuli:    [2^{-k}, 2^{1-k}) x [0, 2^{-k})^{d-1} for k = level_max down to level_min (outward)
///   level:     all cubes of level level_max meeting the window
///   full_tree: every dyadic subcube of [0,1)^d down to level_max
///   cubes:     explicit cube literals
inline std::vector<DyadicCube> generate_cubes(const ExperimentConfig& c)
{
  const auto& f = c.family;
  const int d = c.d;
  const int lo = f.level_min.value_or(c.k_min);
  const int hi = f.level_max.value_or(c.k_max);
  if (lo > hi) throw ParseError("family level_min exceeds level_max");
  std::vector<DyadicCube> out;
  if (f.generator == "tower") {
    for (int k = lo; k <= hi; ++k) out.push_back(make_cube(k, std::vector<std::int64_t>(d, 0), c.shift, d));
  } else if (f.generator == "annuli") {
    for (int k = hi; k >= lo; --k) {
      std::vector<std::int64_t> m(d, 0);
      m[0] = 1;
      out.push_back(make_cube(k, m, c.shift, d));
    }
  } else if (f.generator == "level") {
    Window w = window_of(c);
    w.k_min = w.k_max = hi;
    out = enumerate_grid(c.shift, w, d);
  } else if (f.generator == "full_tree") {
    std::vector<DyadicCube> layer{make_cube(0, std::vector<std::int64_t>(d, 0), c.shift, d)};
    for (int k = 0; k <= hi; ++k) {
      out.insert(out.end(), layer.begin(), layer.end());
      std::vector<DyadicCube> next;
      if (k < hi)
        for (const auto& q : layer)
          for (auto& ch : children(q)) next.push_back(std::move(ch));
      layer = std::move(next);
    }
  } else if (f.generator == "cubes") {
    for (const auto& lit : f.cubes) out.push_back(parse_cube_literal(lit));
  } else {
    throw ParseError("unknown family generator '" + f.generator + "'");
  }
  return out;
}

inline SparseFamily build_family(const ExperimentConfig& c)
{
  if (c.family.generator == "file") {
    std::ifstream in(c.family.path);
    if (!in) throw ParseError("cannot open family file '" + c.family.path + "'");
    return parse_family(in);
  }
  return assign_esets(generate_cubes(c), mesh_level_of(c));
}

inline std::vector<Weight> weights_of(const ExperimentConfig& c)
{
  std::vector<Weight> out;
  for (const auto& lit : c.weights) out.push_back(parse_weight(lit, c.d));
  return out;
}

inline EmbeddingProblem build_problem(const ExperimentConfig& c, bool with_mesh)
{
  if (static_cast<int>(c.shift.size()) != c.d) throw ParseError("shift length must equal d");
  if (c.p.size() != c.weights.size()) throw ParseError("one weight literal per exponent is required");
  EmbeddingProblem prob{.d = c.d,
                        .p = c.p,
                        .sigma = weights_of(c),
                        .kernel = parse_kernel(c.kernel, static_cast<int>(c.p.size()), c.d),
                        .family = build_family(c),
                        .theta = c.theta,
                        .mesh = std::nullopt,
                        .tol = c.tol};
  if (with_mesh) prob.mesh = Mesh::from_window(c.shift, window_of(c), mesh_level_of(c));
  prob.validate();
  return prob;
}

inline Averaging averaging_of(const ExperimentConfig& c)
{
  if (c.averaging == "plain") return Averaging::Plain;
  if (c.averaging == "theta") return Averaging::Theta;
  throw ParseError("averaging must be 'plain' or 'theta'");
}

// ---- reports ----------------------------------------------------------------------

/// Finite doubles as numbers, the rest as strings ("inf", "-inf", "nan").
inline json num(double v)
{
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline json num_list(const std::vector<double>& v)
{
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::string hex64(std::uint64_t h)
{
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// FNV-1a of the sorted-key dump without the timestamp, the output directory and the hash itself.
inline std::string canonical_hash(const json& report)
{
  json c = report;
  c.erase("timestamp");
  c.erase("report_hash");
  if (c.contains("config") && c["config"].is_object()) c["config"].erase("output");
  return hex64(fnv1a(c.dump()));
}

inline std::string utc_timestamp()
{
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Output {
  json report;
  /// Side files: name -> contents (CSV tables, function dumps).
  std::vector<std::pair<std::string, std::string>> files;
};

inline json window_json(const Window& w)
{
  return {{"k_min", w.k_min}, {"k_max", w.k_max}, {"radius", w.radius.str()}};
}

inline json mesh_json(const Mesh& m)
{
  return {{"level", m.level()}, {"shift", m.shift()}, {"lo", m.lo()}, {"count", m.count()}};
}

inline json a0_json(const A0Result& r, const SparseFamily& fam)
{
  json j;
  j["variant"] = r.variant;
  j["value"] = num(r.value);
  j["infinite"] = r.infinite;
  if (r.argmax && *r.argmax < fam.size()) j["argmax"] = to_literal(fam.cubes[*r.argmax]);
  if (!r.partial_sums.empty()) j["partial_sums"] = num_list(r.partial_sums);
  return j;
}

inline A0Result a0_by_variant(const EmbeddingProblem& prob, const std::string& variant, Averaging avg)
{
  if (variant == "auto") return a0_auto(prob, avg);
  if (variant == "sup") return a0_supremum(prob, avg);
  if (variant == "sum") return a0_sum(prob, avg);
  throw ParseError("variant must be auto, sup or sum");
}

inline std::string csv_series(const std::vector<double>& terms, const std::vector<double>& partial)
{
  std::ostringstream os;
  os << "index,term,partial_sum\n" << std::setprecision(17);
  for (std::size_t i = 0; i < terms.size(); ++i) os << i << "," << terms[i] << "," << partial[i] << "\n";
  return os.str();
}

// ---- commands -----------------------------------------------------------------------

/// A0 with a truncation-stability table over nested depths k_max-8, k_max-4, k_max.
inline Output cmd_a0(const ExperimentConfig& c)
{
  const EmbeddingProblem prob = build_problem(c, false);
  const Averaging avg = averaging_of(c);
  Output out;
  json res = a0_json(a0_by_variant(prob, c.variant, avg), prob.family);
  res["regime"] = to_string(prob.regime());
  res["theta"] = c.theta;
  json table = json::array();
  if (c.family.generator != "file") {
    for (int depth : {c.k_max - 8, c.k_max - 4, c.k_max}) {
      if (depth < c.k_min) continue;
      std::vector<DyadicCube> kept;
      for (const auto& q : prob.family.cubes)
        if (q.level <= depth) kept.push_back(q);
      if (kept.empty()) continue;
      EmbeddingProblem sub = prob;
      sub.family = assign_esets(kept, std::max(depth, kept.front().level));
      const A0Result r = a0_by_variant(sub, c.variant, avg);
      table.push_back({{"depth", depth}, {"cubes", kept.size()}, {"a0", num(r.value)}});
    }
  }
  res["stability"] = table;
  res["truncation_note"] = "sup/sum over the truncated family only; the infinite-family value is not certified";
  out.report["result"] = res;
  out.report["family_hash"] = family_hash(prob.family);
  return out;
}

inline json verification_json(const VerificationReport& r)
{
  json per = json::array();
  for (const auto& d : r.per_dilation)
    per.push_back({{"j", d.j}, {"ratio", num(d.ratio)}, {"indicator", num(d.indicator)}, {"decay", num(d.decay)}});
  return {{"variant", r.variant},
          {"a0", num(r.a0)},
          {"best_ratio", num(r.best_ratio)},
          {"ratio_over_a0", num(r.ratio_over_a0)},
          {"best_candidate", r.best_candidate},
          {"trials", r.trials},
          {"seed", r.seed},
          {"window", mesh_json(r.window)},
          {"eta", num(r.eta)},
          {"chain_bound", num(r.chain_bound)},
          {"per_dilation", per},
          {"dilation_spread", num(r.dilation_spread)},
          {"trial_ratios", num_list(r.trial_ratios)}};
}

inline void dump_functions(Output& out, const std::string& stem, const std::vector<TestFunction>& fs)
{
  for (std::size_t i = 0; i < fs.size(); ++i) {
    std::ostringstream os;
    write_csv(os, fs[i]);
    out.files.emplace_back(stem + "_f" + std::to_string(i + 1) + ".csv", os.str());
  }
}

inline Output cmd_verify(const ExperimentConfig& c)
{
  const EmbeddingProblem prob = build_problem(c, true);
  VerifyOptions opt;
  opt.averaging = averaging_of(c);
  const VerificationReport rep = verify_embedding(prob, c.trials, c.seed, opt);
  Output out;
  json res = verification_json(rep);
  res["ratio_within_cap"] = rep.ratio_over_a0 <= 1e3;
  res["truncation_note"] = "A0 over the truncated family only; the infinite-family value is not certified";
  if (c.iters > 0 && c.restarts > 0) {
    const ExtremizeResult ex = extremize(prob, c.iters, c.restarts, c.seed);
    res["extremizer_ratio"] = num(ex.best_ratio);
    res["extremizer_ratio_over_a0"] = num(ex.best_ratio / rep.a0);
    res["extremizer_dump"] = "verify_extremizer_f*.csv";
    dump_functions(out, "verify_extremizer", ex.best);
  }
  out.report["result"] = res;
  out.report["family_hash"] = family_hash(prob.family);
  return out;
}

inline Output cmd_extremize(const ExperimentConfig& c)
{
  const EmbeddingProblem prob = build_problem(c, true);
  const A0Result a0 = a0_by_variant(prob, c.variant, averaging_of(c));
  const ExtremizeResult ex = extremize(prob, c.iters, c.restarts, c.seed);
  Output out;
  json hist = json::array();
  for (const auto& h : ex.history) hist.push_back(num_list(h));
  out.report["result"] = {{"a0", a0_json(a0, prob.family)},
                          {"best_ratio", num(ex.best_ratio)},
                          {"ratio_over_a0", num(ex.best_ratio / a0.value)},
                          {"history", hist},
                          {"monotone", ex.monotone},
                          {"zero_iterates", ex.zero_restarts},
                          {"dump", "extremizer_f*.csv"}};
  out.report["family_hash"] = family_hash(prob.family);
  dump_functions(out, "extremizer", ex.best);
  return out;
}

inline Output cmd_ap(const ExperimentConfig& c)
{
  const SparseFamily fam = build_family(c);
  Output out;
  json per = json::array();
  for (const auto& lit : c.weights) {
    const Weight w = parse_weight(lit, c.d);
    const ApEstimate ap = ap_constant(w, c.ap_p, fam.cubes, c.tol);
    const ApEstimate ainf = a_infinity_proxy(w, fam.cubes, kAInfinityProxyP, c.tol);
    json e = {{"weight", lit}, {"p", c.ap_p}, {"ap", num(ap.value)}, {"a_infinity_proxy", num(ainf.value)}};
    if (ap.argmax < fam.size()) e["argmax"] = to_literal(fam.cubes[ap.argmax]);
    per.push_back(e);
  }
  out.report["result"] = {{"weights", per}, {"cubes", fam.size()}};
  out.report["family_hash"] = family_hash(fam);
  return out;
}

inline Output cmd_a2check(const ExperimentConfig& c)
{
  const SparseFamily fam = build_family(c);
  if (c.weights.empty()) throw ParseError("a2check needs one weight");
  const Weight w = parse_weight(c.weights.front(), c.d);
  const A2Report r = a2_bound_check(w, c.ap_p, fam, c.tol);
  Output out;
  out.report["result"] = {{"p", r.p},
                          {"sup_tp", num(r.sup_tp)},
                          {"argmax", to_literal(fam.cubes[r.argmax])},
                          {"ap", num(r.ap.value)},
                          {"exponent", r.exponent},
                          {"ratio", num(r.ratio)},
                          {"chain_bound", num(r.chain_bound)},
                          {"eta", num(r.eta)},
                          {"within_chain_bound", r.ratio <= r.chain_bound * (1 + 1e-9)}};
  out.report["family_hash"] = family_hash(fam);
  return out;
}

inline Output cmd_series(const ExperimentConfig& c)
{
  const SparseFamily fam = build_family(c);
  double r = 0;
  if (c.series.r) r = *c.series.r;
  else {
    double inv = 0;
    for (double pi : c.p) inv += 1.0 / pi;
    if (inv >= 1.0) throw ParseError("series.r unset and 1/p_1+...+1/p_n >= 1 leaves r undefined");
    r = 1.0 / (1.0 - inv);
  }
  const SeriesResult s = power_tail_series(fam, r, c.series.rho, c.d, c.series.threshold);
  Output out;
  out.report["result"] = {{"r", r},
                          {"rho", c.series.rho},
                          {"critical_rho", -c.d / r},
                          {"terms", s.terms.size()},
                          {"total", num(s.partial_sums.empty() ? 0.0 : s.partial_sums.back())},
                          {"tail_fraction", num(s.tail_fraction)},
                          {"verdict", to_string(s.verdict)},
                          {"partial_sums_csv", "series_partial_sums.csv"}};
  out.report["family_hash"] = family_hash(fam);
  out.files.emplace_back("series_partial_sums.csv", csv_series(s.terms, s.partial_sums));
  return out;
}

inline Output cmd_bessel(const ExperimentConfig& c, const std::string& sub)
{
  const auto& b = c.bessel;
  Output out;
  BesselSettings st;
  st.alpha = b.alpha;
  st.d = c.d;
  st.validate();
  if (sub == "scaling") {
    std::mt19937_64 rng(stream_seed(c.seed, 0));
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    double worst = 0;
    json rows = json::array();
    for (double lam : b.lambdas) {
      BesselSettings sl = st;
      sl.lambda = lam;
      double lam_worst = 0;
      for (int i = 0; i < b.points; ++i) {
        std::vector<double> x(c.d), lx(c.d);
        for (int j = 0; j < c.d; ++j) {
          x[j] = u(rng);
          lx[j] = lam * x[j];
        }
        const double lhs = bessel_kernel(sl, x);
        const double rhs = std::pow(lam, c.d - b.alpha) * bessel_kernel(st, lx);
        lam_worst = std::max(lam_worst, std::abs(lhs - rhs) / rhs);
      }
      worst = std::max(worst, lam_worst);
      rows.push_back({{"lambda", lam}, {"max_rel_error", lam_worst}});
    }
    std::ostringstream csv;
    csv << "radius,value\n" << std::setprecision(17);
    bool decreasing = true;
    double prev = kInf;
    for (double r : sparsemb::detail::logspace(1e-3, 20.0, 60)) {
      const double g = bessel_kernel_radial(st, r);
      decreasing = decreasing && g < prev;
      prev = g;
      csv << r << "," << g << "\n";
    }
    out.report["result"] = {{"per_lambda", rows},
                            {"max_rel_error", worst},
                            {"pass", worst <= 1e-6},
                            {"table_strictly_decreasing", decreasing},
                            {"kernel_table", "bessel_kernel_table.csv"}};
    out.files.emplace_back("bessel_kernel_table.csv", csv.str());
  } else if (sub == "bounds") {
    const KernelBoundReport r = kernel_bound_check(st, b.samples);
    out.report["result"] = {{"far_constant", r.far_constant}, {"near_constant", r.near_constant},
                            {"calibration", r.calibration},   {"held_out", r.held_out},
                            {"violations", r.violations},     {"near_slope", r.near_slope},
                            {"expected_near_slope", b.alpha - c.d}, {"far_rate", r.far_rate},
                            {"pass", r.pass}};
  } else if (sub == "lambda0") {
    json rows = json::array();
    std::optional<LambdaProfile> lp;
    DecayProfile prof;
    double alpha = b.alpha;
    if (b.profile == "synthetic") {
      prof = DecayProfile::synthetic(b.c0, b.alpha);
    } else if (b.profile == "empirical") {
      const EmbeddingProblem prob = build_problem(c, false);
      lp = lambda_profile(prob);
      alpha = lp->alpha;
      prof = DecayProfile::empirical(*lp);
      out.report["family_hash"] = family_hash(prob.family);
    } else {
      throw ParseError("bessel.profile must be synthetic or empirical");
    }
    for (double eps : b.epsilons) {
      const Lambda0Result r = select_lambda0(prof, alpha, eps, b.cap);
      json row = {{"epsilon", eps},
                  {"n1", r.n1},
                  {"n0", r.n0},
                  {"certified", r.certified},
                  {"cases", num_list(std::vector<double>(r.cases.begin(), r.cases.end()))},
                  {"message", r.message}};
      row["lambda0"] = r.lambda0 ? json(*r.lambda0) : json(nullptr);
      if (r.lambda0 && lp) {
        const A0Lambda a = a0_lambda(*lp, *r.lambda0);
        row["a0_lambda0"] = num(a.value);
        row["small_branch"] = num(a.small_branch);
        row["large_branch"] = num(a.large_branch);
        row["direct_below_epsilon"] = a.value < eps;
      }
      rows.push_back(row);
    }
    out.report["result"] = {{"profile", prof.kind}, {"c0", num(prof.c0)}, {"alpha", alpha}, {"epsilons", rows}};
  } else if (sub == "majorant") {
    const Window w = window_of(c);
    std::mt19937_64 rng(stream_seed(c.seed, 1));
    std::uniform_real_distribution<double> u(-1.0, 1.0), logd(std::log(b.min_distance), std::log(b.max_distance));
    const double R = w.radius.convert_to<double>();
    double min_ratio = kInf;
    int zero = 0;
    for (int i = 0; i < b.pairs; ++i) {
      std::vector<double> x(c.d), dir(c.d), y(c.d);
      double nrm = 0;
      for (int j = 0; j < c.d; ++j) {
        x[j] = 0.5 * R * u(rng);
        dir[j] = u(rng);
        nrm += dir[j] * dir[j];
      }
      nrm = std::sqrt(nrm);
      if (nrm == 0) continue;
      const double dist = std::exp(logd(rng));
      for (int j = 0; j < c.d; ++j) y[j] = x[j] + dist * dir[j] / nrm;
      const MajorantResult m = majorant_sum(st, x, y, w);
      if (m.common_cubes == 0) ++zero;
      else min_ratio = std::min(min_ratio, m.ratio);
    }
    out.report["result"] = {{"pairs", b.pairs}, {"min_ratio", num(min_ratio)}, {"pairs_without_common_cube", zero},
                            {"window", window_json(w)}};
  } else {
    throw ParseError("unknown bessel subcommand '" + sub + "'");
  }
  return out;
}

inline json condition_json(const ConditionReport& r)
{
  json sups = json::array();
  for (const auto& s : r.sups)
    sups.push_back({{"condition", s.name},
                    {"value", num(s.value)},
                    {"inner_value", num(s.inner_value)},
                    {"verdict", to_string(s.verdict)}});
  json sweeps = json::array();
  for (const auto& s : r.sweeps)
    sweeps.push_back({{"condition", s.name + "-vanishing"},
                      {"lambda_sweep", num_list(s.values)},
                      {"slope", num(s.slope)},
                      {"verdict", to_string(s.verdict)}});
  json extras = json::object();
  for (const auto& [k, v] : r.extras) extras[k] = num(v);
  return {{"sups", sups}, {"sweeps", sweeps}, {"flagged", r.flagged}, {"cubes", r.cubes}, {"extras", extras}};
}

/// sub: "p-le-q" (1 < p <= q) or "q-lt-p" (1 < q < p).
inline Output cmd_conditions(const ExperimentConfig& c, const std::string& sub)
{
  const auto& k = c.conditions;
  const Weight v = parse_weight(k.weight, c.d);
  const Window w = window_of(c);
  Output out;
  json res;
  if (sub == "p-le-q") {
    res = condition_json(conditions_p_le_q(v, k.p, k.q, k.alpha, k.theta, w, c.d, k.n, c.tol));
  } else if (sub == "q-lt-p") {
    SubcriticalExponents ex{k.p, k.q, k.alpha, k.theta1, k.theta2, k.theta};
    std::optional<SparseFamily> fam;
    if (c.family.generator != "none") fam = build_family(c);
    res = condition_json(conditions_q_lt_p(v, ex, w, c.d, fam ? &*fam : nullptr, k.lambda, c.tol));
    if (fam) out.report["family_hash"] = family_hash(*fam);
  } else {
    throw ParseError("unknown conditions subcommand '" + sub + "'");
  }
  res["window"] = window_json(w);
  out.report["result"] = res;
  return out;
}

/// Runs a command; fills in the resolved config, timestamp and canonical hash.
inline Output run_command(const ExperimentConfig& c, const std::string& sub = {})
{
  Output out;
  if (c.command == "a0") out = cmd_a0(c);
  else if (c.command == "verify") out = cmd_verify(c);
  else if (c.command == "extremize") out = cmd_extremize(c);
  else if (c.command == "ap") out = cmd_ap(c);
  else if (c.command == "a2check") out = cmd_a2check(c);
  else if (c.command == "series") out = cmd_series(c);
  else if (c.command == "bessel") out = cmd_bessel(c, sub);
  else if (c.command == "conditions") out = cmd_conditions(c, sub);
  else throw ParseError("unknown command '" + c.command + "'");
  out.report["command"] = sub.empty() ? c.command : c.command + " " + sub;
  out.report["config"] = to_json(c);
  if (!out.report.contains("family_hash")) out.report["family_hash"] = nullptr;
  out.report["timestamp"] = utc_timestamp();
  out.report["report_hash"] = canonical_hash(out.report);
  return out;
}

/// Exit code for an exception escaping a command.
inline int exit_code_for(const std::exception& e)
{
  if (dynamic_cast<const QuadratureError*>(&e)) return kNumericError;
  if (dynamic_cast<const Error*>(&e)) return kConfigError;
  return kNumericError;
}

inline void write_output(const Output& out, const std::string& dir, const std::string& stem)
{
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(std::filesystem::path(dir) / (stem + ".json"));
    f << out.report.dump(2) << "\n";
  }
  for (const auto& [name, text] : out.files) {
    std::ofstream f(std::filesystem::path(dir) / name);
    f << text;
  }
}

}  // namespace sparsemb::cli
