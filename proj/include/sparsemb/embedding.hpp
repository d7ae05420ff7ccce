// Sufficient-condition constants for the multilinear embedding
//     sum_S K(S) prod_i int_S f_i dsigma_i <= C prod_i ||f_i||_{L^{p_i}(sigma_i)},
// empirical lower bounds for C, and the power-weight diagnostics built on them.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sparsemb/dyadic.hpp"
#include "sparsemb/mesh.hpp"
#include "sparsemb/sparse.hpp"
#include "sparsemb/weights.hpp"

namespace sparsemb {

enum class Regime { SumGeOne, SumLtOne };

inline const char* to_string(Regime r) { return r == Regime::SumGeOne ? "SUM_GE_ONE" : "SUM_LT_ONE"; }

/// Plain averages sigma(S)/|S| or theta-averages (sigma^theta(S)/|S|)^{1/theta}.
enum class Averaging { Plain, Theta };

struct EmbeddingProblem {
  int d = 1;
  std::vector<double> p;
  std::vector<Weight> sigma;
  KernelMap kernel;
  SparseFamily family;
  double theta = 2.0;
  /// Where test functions live; required by verification and extremization only.
  std::optional<Mesh> mesh;
  double tol = kDefaultQuadTol;

  int n() const noexcept { return static_cast<int>(p.size()); }

  double inverse_sum() const
  {
    double s = 0;
    for (double pi : p) s += 1.0 / pi;
    return s;
  }

  Regime regime() const { return inverse_sum() >= 1.0 ? Regime::SumGeOne : Regime::SumLtOne; }

  /// 1/r = 1 - sum 1/p_i; only defined when that is positive.
  double r() const
  {
    if (regime() != Regime::SumLtOne) throw DomainError("r is only defined when 1/p_1+...+1/p_n < 1");
    return 1.0 / (1.0 - inverse_sum());
  }

  double conj(int i) const { return p.at(i) / (p.at(i) - 1.0); }
  double q_conj(int i) const { return theta * conj(i); }
  double q(int i) const
  {
    const double qc = q_conj(i);
    return qc / (qc - 1.0);
  }

  void validate() const
  {
    if (n() < 2) throw DomainError("the form needs n >= 2 functions");
    if (sigma.size() != p.size()) throw DimensionError("one weight per exponent is required");
    for (double pi : p)
      if (!(pi > 1.0) || !std::isfinite(pi)) throw DomainError("exponents must lie in (1, inf)");
    if (!(theta > 1.0) || !std::isfinite(theta)) throw DomainError("theta must exceed 1");
    if (const auto a = kernel.arity(); a && *a != n()) throw DimensionError("kernel arity differs from n");
    if (family.size() > 0 && family.dim != d) throw DimensionError("family dimension differs from d");
    if (mesh && mesh->dim() != d) throw DimensionError("mesh dimension differs from d");
  }
};

// ---- norms and per-cube averages ---------------------------------------------

inline double lp_norm(const TestFunction& f, const Weight& sigma, double p, double tol = kDefaultQuadTol)
{
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("lp_norm needs 1 < p < inf");
  check_test_function(f);
  const auto mu = cell_measures(sigma, f.mesh, tol);
  long double s = 0;
  for (std::size_t c = 0; c < mu.size(); ++c)
    if (f.values[c] != 0.0) s += std::pow(static_cast<long double>(f.values[c]), p) * mu[c];
  return static_cast<double>(std::pow(s, 1.0L / p));
}

namespace detail {

/// |S|^e computed from the exact side length.
inline double volume_pow(const DyadicCube& s, double e) { return std::exp2(-static_cast<double>(s.level) * s.dim() * e); }

struct AverageProduct {
  std::vector<Weight> weights;  // sigma_i or sigma_i^theta
  std::vector<double> exps;     // 1/p_i' or 1/(theta p_i')

  AverageProduct(const EmbeddingProblem& prob, Averaging a)
  {
    for (int i = 0; i < prob.n(); ++i) {
      if (a == Averaging::Plain) {
        weights.push_back(prob.sigma[i]);
        exps.push_back(1.0 / prob.conj(i));
      } else {
        weights.push_back(prob.sigma[i].power_theta(prob.theta));
        exps.push_back(1.0 / (prob.theta * prob.conj(i)));
      }
    }
  }

  /// prod_i (w_i(S)/|S|)^{e_i}; +inf if some average diverges.
  double operator()(const DyadicCube& s, double tol) const
  {
    const double vol = volume(s);
    double prod = 1.0;
    bool zero = false;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double m = integrate(weights[i], s, tol);
      if (!std::isfinite(m)) return kInf;
      if (m == 0.0) zero = true;
      else prod *= std::pow(m / vol, exps[i]);
    }
    return zero ? 0.0 : prod;
  }
};

inline const char* variant_name(bool sum, Averaging a)
{
  if (sum) return a == Averaging::Plain ? "sum" : "sum-theta";
  return a == Averaging::Plain ? "sup" : "sup-theta";
}

}  // namespace detail

struct A0Result {
  std::string variant;
  double value = 0;
  bool infinite = false;
  /// Attaining family index (sup variants; unset for an empty family).
  std::optional<std::size_t> argmax;
  /// Per-cube terms: the sup candidates, or the summands of A0^r.
  std::vector<double> terms;
  /// Running sums of A0^r in family order (sum variants only).
  std::vector<double> partial_sums;
};

/// sup_S K(S) |S|^{n - sum 1/p_i} prod_i avg_S(sigma_i)^{1/p_i'}, for sum 1/p_i >= 1.
inline A0Result a0_supremum(const EmbeddingProblem& prob, Averaging avg = Averaging::Plain)
{
  prob.validate();
  if (prob.regime() != Regime::SumGeOne)
    throw DomainError("this constant needs the hypothesis 1/p_1+...+1/p_n >= 1");
  const detail::AverageProduct prod(prob, avg);
  const double vexp = prob.n() - prob.inverse_sum();
  A0Result res;
  res.variant = detail::variant_name(false, avg);
  for (std::size_t i = 0; i < prob.family.size(); ++i) {
    const auto& s = prob.family.cubes[i];
    const double a = prod(s, prob.tol);
    const double t = std::isinf(a) ? kInf : kernel_value(prob.kernel, s) * detail::volume_pow(s, vexp) * a;
    res.terms.push_back(t);
    if (!res.argmax || t > res.value) {
      res.value = t;
      res.argmax = i;
    }
  }
  res.infinite = std::isinf(res.value);
  return res;
}

/// [sum_S (K(S) |S|^{n-1} prod_i avg_S(sigma_i)^{1/p_i'})^r |E(S)|]^{1/r}, for sum 1/p_i < 1.
inline A0Result a0_sum(const EmbeddingProblem& prob, Averaging avg = Averaging::Plain)
{
  prob.validate();
  if (prob.regime() != Regime::SumLtOne)
    throw DomainError("this constant needs the hypothesis 1/p_1+...+1/p_n < 1");
  A0Result res;
  res.variant = detail::variant_name(true, avg);
  if (prob.family.size() == 0) return res;
  if (!(prob.family.eta > 0.0)) throw DomainError("E-sets are degenerate (eta = 0)");
  const double r = prob.r();
  const detail::AverageProduct prod(prob, avg);
  long double total = 0;
  for (std::size_t i = 0; i < prob.family.size(); ++i) {
    const auto& s = prob.family.cubes[i];
    const double a = prod(s, prob.tol);
    double t = kInf;
    if (std::isfinite(a)) {
      const double base = kernel_value(prob.kernel, s) * detail::volume_pow(s, prob.n() - 1.0) * a;
      t = std::pow(base, r) * prob.family.eset_volume(i);
    }
    res.terms.push_back(t);
    total += t;
    res.partial_sums.push_back(static_cast<double>(total));
  }
  res.value = std::pow(static_cast<double>(total), 1.0 / r);
  res.infinite = std::isinf(res.value);
  return res;
}

/// Dispatches on the exponent regime.
inline A0Result a0_auto(const EmbeddingProblem& prob, Averaging avg = Averaging::Plain)
{
  return prob.regime() == Regime::SumGeOne ? a0_supremum(prob, avg) : a0_sum(prob, avg);
}

namespace detail {

/// K(S) prod_i sigma_i(S) / sigma_i(E(S))^{1/p_i}.
inline double sparse_term(const EmbeddingProblem& prob, std::size_t idx)
{
  const auto& s = prob.family.cubes[idx];
  double t = kernel_value(prob.kernel, s);
  for (int i = 0; i < prob.n(); ++i) {
    const double whole = integrate(prob.sigma[i], s, prob.tol);
    if (whole == 0.0) return 0.0;
    const double e = prob.family.eset_measure(prob.sigma[i], idx, prob.tol);
    if (!std::isfinite(whole) || e == 0.0) return kInf;
    t *= whole / std::pow(e, 1.0 / prob.p[i]);
  }
  return t;
}

}  // namespace detail

/// sup_S K(S) prod_i sigma_i(S) / sigma_i(E(S))^{1/p_i}; bounds the form for sum 1/p_i >= 1.
inline A0Result sparse_constant_sup(const EmbeddingProblem& prob)
{
  prob.validate();
  A0Result res;
  res.variant = "sparse-sup";
  for (std::size_t i = 0; i < prob.family.size(); ++i) {
    const double t = detail::sparse_term(prob, i);
    res.terms.push_back(t);
    if (!res.argmax || t > res.value) {
      res.value = t;
      res.argmax = i;
    }
  }
  res.infinite = std::isinf(res.value);
  return res;
}

/// [sum_S (K(S) prod_i sigma_i(S) / sigma_i(E(S))^{1/p_i})^r]^{1/r}, for sum 1/p_i < 1.
inline A0Result sparse_constant_sum(const EmbeddingProblem& prob)
{
  prob.validate();
  const double r = prob.r();
  A0Result res;
  res.variant = "sparse-sum";
  long double total = 0;
  for (std::size_t i = 0; i < prob.family.size(); ++i) {
    const double t = std::pow(detail::sparse_term(prob, i), r);
    res.terms.push_back(t);
    total += t;
    res.partial_sums.push_back(static_cast<double>(total));
  }
  res.value = std::pow(static_cast<double>(total), 1.0 / r);
  res.infinite = std::isinf(res.value);
  return res;
}

/// Per-slot ratio of avg_S(f_i sigma_i) to its Hoelder bound with exponents
/// q_i' = theta p_i' and q_i; every entry is <= 1 up to quadrature error.
inline std::vector<double> holder_cube_ratios(const EmbeddingProblem& prob, const std::vector<TestFunction>& f,
                                              const DyadicCube& s)
{
  prob.validate();
  if (static_cast<int>(f.size()) != prob.n()) throw DimensionError("one function per weight is required");
  std::vector<double> out;
  for (int i = 0; i < prob.n(); ++i) {
    check_test_function(f[i]);
    const Mesh& mesh = f[i].mesh;
    if (!mesh.covers(s)) throw DomainError("cube not inside the test function's mesh");
    const double qi = prob.q(i), qci = prob.q_conj(i);
    const Weight inner = prob.sigma[i].pow(qi / prob.p[i]);
    const IndexBox box = cell_box(s, mesh.level());
    long double num = 0, pw = 0;
    for_each_cell(mesh, box, [&](std::size_t c) {
      const double v = f[i].values[c];
      if (v == 0.0) return;
      const DyadicCube cell = mesh.cell(c);
      num += v * integrate(prob.sigma[i], cell, prob.tol);
      pw += std::pow(static_cast<long double>(v), qi) * integrate(inner, cell, prob.tol);
    });
    if (num == 0.0L) {
      out.push_back(0.0);
      continue;
    }
    const double vol = volume(s);
    const double theta_avg = integrate(prob.sigma[i].power_theta(prob.theta), s, prob.tol) / vol;
    const double bound = std::pow(theta_avg, 1.0 / qci) * std::pow(static_cast<double>(pw) / vol, 1.0 / qi);
    out.push_back(static_cast<double>(num) / vol / bound);
  }
  return out;
}

// ---- empirical verification ----------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed of the t-th independent stream under a master seed.
inline std::uint64_t stream_seed(std::uint64_t master, std::uint64_t t) { return splitmix64(master ^ splitmix64(t + 1)); }

struct DilationRatio {
  int j = 0;
  double ratio = 0;
  double indicator = 0;
  double decay = 0;
};

struct VerificationReport {
  std::string variant;
  double a0 = 0;
  double best_ratio = 0;
  double ratio_over_a0 = 0;
  std::string best_candidate;
  int trials = 0;
  std::uint64_t seed = 0;
  Mesh window;
  double eta = 0;
  /// Constant of the sparse proof chain times prod_i p_i' (a rigorous upper bound).
  double chain_bound = 0;
  std::vector<DilationRatio> per_dilation;
  /// max/min of the nonzero per-dilation ratios.
  double dilation_spread = 0;
  std::vector<double> trial_ratios;
};

struct VerifyOptions {
  Averaging averaging = Averaging::Plain;
  int dilation_min = -10;
  int dilation_max = 10;
  std::size_t max_indicators = 64;
};

namespace detail {

/// Family cube of median level, used to anchor dilated candidates.
inline std::size_t anchor_index(const SparseFamily& fam)
{
  std::vector<std::size_t> idx(fam.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return fam.cubes[a].level < fam.cubes[b].level; });
  return idx[idx.size() / 2];
}

class RatioEvaluator {
 public:
  RatioEvaluator(const EmbeddingProblem& prob, const Mesh& mesh)
      : prob_(prob), form_(prob.family, prob.kernel, prob.sigma, mesh, prob.tol)
  {
  }

  const SparseForm& form() const { return form_; }

  /// Lambda / prod ||f_i||; nullopt when some f_i has zero norm.
  std::optional<double> operator()(const std::vector<const std::vector<double>*>& fs) const
  {
    double denom = 1.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const double nrm = form_.norm(i, *fs[i], prob_.p[i]);
      if (!(nrm > 0.0)) return std::nullopt;
      denom *= nrm;
    }
    return form_.form(fs) / denom;
  }

  std::optional<double> same(const std::vector<double>& g) const
  {
    std::vector<const std::vector<double>*> fs(prob_.sigma.size(), &g);
    return (*this)(fs);
  }

 private:
  const EmbeddingProblem& prob_;
  SparseForm form_;
};

}  // namespace detail

/// Lower bounds for the best constant: random functions, family indicators and
/// a dilation sweep of two profiles anchored at a mid-level family cube.
inline VerificationReport verify_embedding(const EmbeddingProblem& prob, int trials, std::uint64_t seed,
                                           const VerifyOptions& opt = {})
{
  prob.validate();
  if (!prob.mesh) throw DomainError("verification needs a mesh");
  if (prob.family.size() == 0) throw DomainError("verification needs a nonempty family");
  const Mesh& mesh = *prob.mesh;
  const A0Result a0 = a0_auto(prob, opt.averaging);
  if (a0.infinite || !(a0.value > 0)) throw DomainError("A0 must be finite and positive to verify against");

  VerificationReport rep;
  rep.variant = a0.variant;
  rep.a0 = a0.value;
  rep.trials = trials;
  rep.seed = seed;
  rep.window = mesh;
  rep.eta = prob.family.eta;
  {
    const A0Result c = prob.regime() == Regime::SumGeOne ? sparse_constant_sup(prob) : sparse_constant_sum(prob);
    double pc = 1.0;
    for (int i = 0; i < prob.n(); ++i) pc *= prob.conj(i);
    rep.chain_bound = c.value * pc;
  }

  const detail::RatioEvaluator eval(prob, mesh);
  auto consider = [&](std::optional<double> r, const std::string& what) {
    if (r && *r > rep.best_ratio) {
      rep.best_ratio = *r;
      rep.best_candidate = what;
    }
  };

  // Random functions: even trials fill the window, odd trials one family cube.
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(t)));
    std::normal_distribution<double> normal;
    std::optional<IndexBox> box;
    if (t % 2 == 1) {
      std::uniform_int_distribution<std::size_t> pick(0, prob.family.size() - 1);
      box = mesh.clip(prob.family.cubes[pick(rng)]);
    }
    std::vector<std::vector<double>> fs(prob.sigma.size(), std::vector<double>(mesh.size(), 0.0));
    for (auto& f : fs) {
      if (box) for_each_cell(mesh, *box, [&](std::size_t c) { f[c] = std::abs(normal(rng)); });
      else for (double& v : f) v = std::abs(normal(rng));
    }
    std::vector<const std::vector<double>*> ptrs;
    for (const auto& f : fs) ptrs.push_back(&f);
    const auto r = eval(ptrs);
    rep.trial_ratios.push_back(r.value_or(0.0));
    consider(r, "random:" + std::to_string(t));
  }

  // Indicators of family cubes, evenly spread through the list.
  {
    const std::size_t m = std::min(opt.max_indicators, prob.family.size());
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = k * prob.family.size() / m;
      std::vector<double> g(mesh.size(), 0.0);
      for_each_cell(mesh, mesh.clip(prob.family.cubes[i]), [&](std::size_t c) { g[c] = 1.0; });
      consider(eval.same(g), "indicator:" + to_literal(prob.family.cubes[i]));
    }
  }

  // Dilation sweep: g(2^j x) for the anchor indicator and a decaying bump around it.
  {
    const DyadicCube& anchor = prob.family.cubes[detail::anchor_index(prob.family)];
    const int d = prob.d;
    std::vector<double> lo(d), hi(d), mid(d);
    for (int a = 0; a < d; ++a) {
      lo[a] = corner_double(anchor, a);
      hi[a] = lo[a] + side_length(anchor);
      mid[a] = 0.5 * (lo[a] + hi[a]);
    }
    const double ell = side_length(anchor);
    std::vector<std::vector<double>> centers(mesh.size());
    for (std::size_t c = 0; c < mesh.size(); ++c) {
      const auto idx = mesh.unflat(c);
      const DyadicCube cell{mesh.level(), idx, mesh.shift()};
      centers[c].resize(d);
      for (int a = 0; a < d; ++a) centers[c][a] = corner_double(cell, a) + 0.5 * side_length(cell);
    }
    double lo_r = kInf, hi_r = 0;
    for (int j = opt.dilation_min; j <= opt.dilation_max; ++j) {
      const double s = std::exp2(j);
      std::vector<double> ind(mesh.size(), 0.0), bump(mesh.size(), 0.0);
      for (std::size_t c = 0; c < mesh.size(); ++c) {
        bool in = true;
        double dist2 = 0;
        for (int a = 0; a < d; ++a) {
          const double y = s * centers[c][a];
          in = in && y >= lo[a] && y < hi[a];
          dist2 += (y - mid[a]) * (y - mid[a]);
        }
        ind[c] = in ? 1.0 : 0.0;
        bump[c] = std::pow(1.0 + std::sqrt(dist2) / ell, -(d + 1.0));
      }
      DilationRatio dr;
      dr.j = j;
      dr.indicator = eval.same(ind).value_or(0.0);
      dr.decay = eval.same(bump).value_or(0.0);
      dr.ratio = std::max(dr.indicator, dr.decay);
      consider(dr.indicator > 0 ? std::optional<double>(dr.indicator) : std::nullopt,
               "dilated-indicator:" + std::to_string(j));
      consider(dr.decay > 0 ? std::optional<double>(dr.decay) : std::nullopt, "dilated-decay:" + std::to_string(j));
      if (dr.ratio > 0) {
        lo_r = std::min(lo_r, dr.ratio);
        hi_r = std::max(hi_r, dr.ratio);
      }
      rep.per_dilation.push_back(dr);
    }
    rep.dilation_spread = hi_r > 0 ? hi_r / lo_r : 0.0;
  }
  rep.ratio_over_a0 = rep.best_ratio / rep.a0;
  return rep;
}

struct ExtremizeResult {
  std::vector<TestFunction> best;
  double best_ratio = 0;
  /// Ratio after initialization and after every full cycle, per restart.
  std::vector<std::vector<double>> history;
  int zero_restarts = 0;
  bool monotone = true;
};

/// Cyclic slot-wise maximization of Lambda / prod ||f_i||.
///
/// With the other slots frozen, f_i = A_i^{1/(p_i-1)} (A_i the operator with slot
/// i left open) is the exact maximizer by Hoelder; an update is kept only when
/// it does not lower the ratio, so each cycle is nondecreasing even in rounding.
inline ExtremizeResult extremize(const EmbeddingProblem& prob, int iters, int restarts, std::uint64_t seed)
{
  prob.validate();
  if (!prob.mesh) throw DomainError("extremization needs a mesh");
  const Mesh& mesh = *prob.mesh;
  const detail::RatioEvaluator eval(prob, mesh);
  const SparseForm& form = eval.form();
  const std::size_t n = prob.sigma.size();

  auto normalize = [&](std::size_t i, std::vector<double>& f) {
    const double nrm = form.norm(i, f, prob.p[i]);
    if (!(nrm > 0.0) || !std::isfinite(nrm)) return false;
    for (double& v : f) v /= nrm;
    return true;
  };

  ExtremizeResult res;
  int attempt = 0;
  for (int rs = 0; rs < restarts; ++rs) {
    std::vector<std::vector<double>> fs;
    std::optional<double> ratio;
    // Draw until every slot has positive norm and the form is nonzero.
    for (int tries = 0; tries < 16 && !ratio; ++tries, ++attempt) {
      std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(attempt)));
      std::normal_distribution<double> normal;
      fs.assign(n, std::vector<double>(mesh.size()));
      bool ok = true;
      for (std::size_t i = 0; i < n; ++i) {
        for (double& v : fs[i]) v = std::abs(normal(rng));
        ok = ok && normalize(i, fs[i]);
      }
      if (!ok) continue;
      std::vector<const std::vector<double>*> ptrs;
      for (const auto& f : fs) ptrs.push_back(&f);
      ratio = eval(ptrs);
      if (ratio && !(*ratio > 0)) ratio.reset();
    }
    if (!ratio) throw DomainError("no admissible starting point (the form vanishes on the mesh)");

    std::vector<double> hist{*ratio};
    for (int it = 0; it < iters; ++it) {
      const double before = *ratio;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<const std::vector<double>*> ptrs;
        for (const auto& f : fs) ptrs.push_back(&f);
        std::vector<double> g = form.apply(i, ptrs);
        const double e = 1.0 / (prob.p[i] - 1.0);
        for (double& v : g) v = v > 0.0 ? std::pow(v, e) : 0.0;
        if (!normalize(i, g)) {
          ++res.zero_restarts;
          continue;
        }
        std::swap(fs[i], g);
        ptrs.clear();
        for (const auto& f : fs) ptrs.push_back(&f);
        const auto r = eval(ptrs);
        if (r && *r >= *ratio) ratio = r;
        else std::swap(fs[i], g);
      }
      hist.push_back(*ratio);
      if (*ratio == before) break;
    }
    for (std::size_t k = 1; k < hist.size(); ++k)
      if (hist[k] < hist[k - 1]) res.monotone = false;
    res.history.push_back(hist);
    if (*ratio > res.best_ratio) {
      res.best_ratio = *ratio;
      res.best.clear();
      for (auto& f : fs) res.best.emplace_back(mesh, f);
    }
  }
  return res;
}

// ---- A_p machinery -------------------------------------------------------------

/// (1/|S|) sigma(S)/sigma(E(S))^{1/p} * w(S)/w(E(S))^{1/p'} with sigma = w^{-1/(p-1)}.
inline double t_p(const Weight& w, double p, const DyadicCube& s, const SparseFamily& fam,
                  double tol = kDefaultQuadTol)
{
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("t_p needs 1 < p < inf");
  const auto it = std::find(fam.cubes.begin(), fam.cubes.end(), s);
  if (it == fam.cubes.end()) throw DomainError("cube is not a family member");
  const std::size_t idx = static_cast<std::size_t>(it - fam.cubes.begin());
  const Weight sigma = w.pow(-1.0 / (p - 1.0));
  const double pc = p / (p - 1.0);
  const double ss = integrate(sigma, s, tol), se = fam.eset_measure(sigma, idx, tol);
  const double ws = integrate(w, s, tol), we = fam.eset_measure(w, idx, tol);
  if (!std::isfinite(ss) || !std::isfinite(ws)) throw DomainError("weight or dual weight diverges on " + to_literal(s));
  if (se == 0.0 || we == 0.0) throw DomainError("E-set is null for the weight on " + to_literal(s));
  return ss / std::pow(se, 1.0 / p) * ws / std::pow(we, 1.0 / pc) / volume(s);
}

struct A2Report {
  double p = 2;
  double sup_tp = 0;
  std::size_t argmax = 0;
  ApEstimate ap;
  double exponent = 1;
  double ratio = 0;
  /// eta^{-max(p/p', p'/p)}: the constant of the sparse chain.
  double chain_bound = 0;
  double eta = 0;
};

inline A2Report a2_bound_check(const Weight& w, double p, const SparseFamily& fam, double tol = kDefaultQuadTol)
{
  if (fam.size() == 0) throw DomainError("a2_bound_check needs a nonempty family");
  A2Report rep;
  rep.p = p;
  rep.eta = fam.eta;
  for (std::size_t i = 0; i < fam.size(); ++i) {
    const double t = t_p(w, p, fam.cubes[i], fam, tol);
    if (t > rep.sup_tp) {
      rep.sup_tp = t;
      rep.argmax = i;
    }
  }
  rep.ap = ap_constant(w, p, fam.cubes, tol);
  const double pc = p / (p - 1.0);
  rep.exponent = std::max(1.0, pc / p);
  rep.ratio = rep.sup_tp / std::pow(rep.ap.value, rep.exponent);
  rep.chain_bound = fam.eta > 0 ? std::pow(fam.eta, -std::max(p / pc, pc / p)) : kInf;
  return rep;
}

// ---- power weights -------------------------------------------------------------

/// alpha + d(1 - sum 1/p_i) + sum beta_i/p_i'; with drop_dim_term the middle term is omitted.
inline double balance_residual(double alpha, int d, const std::vector<double>& p, const std::vector<double>& beta,
                               bool drop_dim_term = false)
{
  if (p.size() != beta.size()) throw DimensionError("p and beta lengths differ");
  double s = alpha, inv = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    inv += 1.0 / p[i];
    s += beta[i] * (p[i] - 1.0) / p[i];
  }
  if (!drop_dim_term) s += d * (1.0 - inv);
  return s;
}

enum class SeriesVerdict { Convergent, DivergentTrend, Inconclusive };

inline const char* to_string(SeriesVerdict v)
{
  switch (v) {
    case SeriesVerdict::Convergent: return "CONVERGENT";
    case SeriesVerdict::DivergentTrend: return "DIVERGENT-TREND";
    default: return "INCONCLUSIVE";
  }
}

struct SeriesResult {
  std::vector<double> terms;
  std::vector<double> partial_sums;
  /// Share of the total contributed by the last tenth of the terms.
  double tail_fraction = 0;
  SeriesVerdict verdict = SeriesVerdict::Inconclusive;
};

/// sum_S |E(S)| max(l_S, |c_S|, 1)^{r rho} in family order.
///
/// CONVERGENT when the last tenth of the terms carries < 1e-3 of the total;
/// DIVERGENT-TREND when the sum passes `threshold`, or the last tenth carries
/// at least half of it without its terms decreasing.
inline SeriesResult power_tail_series(const SparseFamily& fam, double r, double rho, int d,
                                      double threshold = 1e6)
{
  if (fam.size() > 0 && fam.dim != d) throw DimensionError("family dimension differs from d");
  SeriesResult res;
  long double total = 0;
  for (std::size_t i = 0; i < fam.size(); ++i) {
    const auto& s = fam.cubes[i];
    const double scale = std::max({side_length(s), center_norm(s), 1.0});
    const double t = fam.eset_volume(i) * std::pow(scale, r * rho);
    res.terms.push_back(t);
    total += t;
    res.partial_sums.push_back(static_cast<double>(total));
  }
  if (res.terms.empty() || total == 0) return res;
  const std::size_t m = res.terms.size();
  const std::size_t tail = std::max<std::size_t>(1, m / 10);
  long double tail_sum = 0;
  for (std::size_t i = m - tail; i < m; ++i) tail_sum += res.terms[i];
  res.tail_fraction = static_cast<double>(tail_sum / total);
  if (res.tail_fraction < 1e-3) res.verdict = SeriesVerdict::Convergent;
  else if (total > threshold || (res.tail_fraction >= 0.5 && res.terms.back() >= res.terms[m - tail]))
    res.verdict = SeriesVerdict::DivergentTrend;
  return res;
}

}  // namespace sparsemb
