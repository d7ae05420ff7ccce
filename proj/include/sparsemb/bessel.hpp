// Bessel kernel G_{alpha,lambda}, its bounds, the Bessel-type sparse constant
// A0(lambda) with the lambda_0 selection, and the weight condition evaluators.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "sparsemb/dyadic.hpp"
#include "sparsemb/embedding.hpp"
#include "sparsemb/sparse.hpp"
#include "sparsemb/weights.hpp"

namespace sparsemb {

struct BesselSettings {
  double alpha = 0.5;
  int d = 1;
  double lambda = 1.0;
  double tol = 1e-12;

  void validate() const
  {
    if (d < 1) throw DimensionError("dimension must be >= 1");
    if (!(alpha > 0 && alpha < d)) throw DomainError("Bessel kernel needs 0 < alpha < d");
    if (!(lambda > 0) || !std::isfinite(lambda)) throw DomainError("Bessel kernel needs lambda > 0");
    if (!(tol > 0)) throw DomainError("tolerance must be positive");
  }
};

/// G_{alpha,lambda}(r) at radius r > 0, from
///   c(alpha) int_0^inf exp(-pi r^2/t - lambda^2 t/(4 pi)) t^{(alpha-d)/2} dt/t,
/// c(alpha) = (4 pi)^{-alpha/2} / Gamma(alpha/2), integrated in u = ln t.
inline double bessel_kernel_radial(const BesselSettings& st, double r)
{
  st.validate();
  if (!(r > 0) || !std::isfinite(r)) throw DomainError("Bessel kernel is singular at the origin");
  constexpr double pi = std::numbers::pi;
  const double a = 0.5 * (st.alpha - st.d);
  const double lam2 = st.lambda * st.lambda;
  auto logf = [&](double u) { return -pi * r * r * std::exp(-u) - lam2 * std::exp(u) / (4 * pi) + a * u; };
  // Peak of the log-integrand: root of pi r^2/z - lambda^2 z/(4 pi) + a = 0.
  const double z = 2 * pi * r * r / (std::sqrt(a * a + lam2 * r * r) - a);
  const double u0 = std::log(z);
  const double lmax = logf(u0);
  constexpr double kDrop = 60.0;  // e^{-60} relative: far below any tolerance in use

  auto trapezoid = [&](double h) {
    long double s = 1.0L;
    for (int side : {-1, 1}) {
      for (long k = 1;; ++k) {
        const double l = logf(u0 + side * k * h) - lmax;
        s += std::exp(static_cast<long double>(l));
        if (l < -kDrop) break;
        if (k > 50'000'000) throw QuadratureError("Bessel kernel integral did not terminate");
      }
    }
    return static_cast<double>(s) * h;
  };

  double h = 0.5;
  double prev = trapezoid(h);
  for (int it = 0; it < 12; ++it) {
    h *= 0.5;
    const double cur = trapezoid(h);
    if (std::abs(cur - prev) <= st.tol * cur) {
      const double logc = -0.5 * st.alpha * std::log(4 * pi) - std::lgamma(0.5 * st.alpha);
      return std::exp(logc + lmax) * cur;
    }
    prev = cur;
  }
  throw QuadratureError("Bessel kernel quadrature did not converge");
}

inline double bessel_kernel(const BesselSettings& st, const std::vector<double>& x)
{
  if (static_cast<int>(x.size()) != st.d) throw DimensionError("point dimension differs from d");
  double s = 0;
  for (double v : x) s += v * v;
  return bessel_kernel_radial(st, std::sqrt(s));
}

// ---- pointwise bounds ----------------------------------------------------------

struct KernelBoundReport {
  double far_constant = 0;   // C in G <= C e^{-|x|/2}, |x| > 1
  double near_constant = 0;  // c in G <= c |x|^{alpha-d}, |x| <= 1
  int calibration = 0;
  int held_out = 0;
  int violations = 0;
  double near_slope = 0;  // d log G / d log|x| on [1e-3, 1e-2]
  double far_rate = 0;    // -d log G / d|x| on [5, 20]
  bool pass = false;
};

namespace detail {

inline double ls_slope(const std::vector<double>& x, const std::vector<double>& y)
{
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline std::vector<double> logspace(double lo, double hi, int n)
{
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = lo * std::pow(hi / lo, n == 1 ? 0.0 : static_cast<double>(i) / (n - 1));
  return out;
}

}  // namespace detail

/// Fits the near/far bound constants on half of the log-spaced radii in
/// [1e-3, 20] (even positions within each region) and checks the other half.
inline KernelBoundReport kernel_bound_check(const BesselSettings& st, int samples = 200)
{
  st.validate();
  if (st.lambda != 1.0) throw DomainError("the pointwise bounds concern lambda = 1");
  if (samples < 4) throw DomainError("need at least 4 samples");
  KernelBoundReport rep;
  const auto radii = detail::logspace(1e-3, 20.0, samples);
  std::vector<double> near_r, near_g, far_r, far_g;
  for (double r : radii) {
    const double g = bessel_kernel_radial(st, r);
    if (r <= 1.0) {
      near_r.push_back(r);
      near_g.push_back(g);
    } else {
      far_r.push_back(r);
      far_g.push_back(g);
    }
  }
  auto near_scaled = [&](std::size_t i) { return near_g[i] * std::pow(near_r[i], st.d - st.alpha); };
  auto far_scaled = [&](std::size_t i) { return far_g[i] * std::exp(far_r[i] / 2); };
  for (std::size_t i = 0; i < near_r.size(); i += 2, ++rep.calibration)
    rep.near_constant = std::max(rep.near_constant, near_scaled(i));
  for (std::size_t i = 0; i < far_r.size(); i += 2, ++rep.calibration)
    rep.far_constant = std::max(rep.far_constant, far_scaled(i));
  for (std::size_t i = 1; i < near_r.size(); i += 2, ++rep.held_out)
    if (near_scaled(i) > rep.near_constant * (1 + 1e-9)) ++rep.violations;
  for (std::size_t i = 1; i < far_r.size(); i += 2, ++rep.held_out)
    if (far_scaled(i) > rep.far_constant * (1 + 1e-9)) ++rep.violations;

  std::vector<double> lx, ly;
  for (double r : detail::logspace(1e-3, 1e-2, 20)) {
    lx.push_back(std::log(r));
    ly.push_back(std::log(bessel_kernel_radial(st, r)));
  }
  rep.near_slope = detail::ls_slope(lx, ly);
  lx.clear();
  ly.clear();
  for (int i = 0; i <= 30; ++i) {
    const double r = 5.0 + 15.0 * i / 30.0;
    lx.push_back(r);
    ly.push_back(std::log(bessel_kernel_radial(st, r)));
  }
  rep.far_rate = -detail::ls_slope(lx, ly);
  rep.pass = rep.violations == 0;
  return rep;
}

// ---- kernel-level majorant -----------------------------------------------------

struct MajorantResult {
  double h = 0;
  double kernel = 0;
  double ratio = 0;
  int common_cubes = 0;
};

/// H(x,y) = sum over the 3^d shifted grids and window levels of
/// min((lambda l_S)^alpha, 1) / (lambda^alpha |S|) over cubes S containing x and y.
inline MajorantResult majorant_sum(const BesselSettings& st, const std::vector<double>& x,
                                   const std::vector<double>& y, const Window& w)
{
  st.validate();
  w.validate();
  const int d = st.d;
  if (static_cast<int>(x.size()) != d || static_cast<int>(y.size()) != d)
    throw DimensionError("point dimension differs from d");
  if (x == y) throw DomainError("majorant needs x != y");
  std::vector<Rational> xr(d), yr(d);
  for (int j = 0; j < d; ++j) {
    xr[j] = Rational(x[j]);
    yr[j] = Rational(y[j]);
  }
  MajorantResult res;
  long double h = 0;
  std::vector<int> s(d, -1);
  while (true) {
    for (int k = w.k_min; k <= w.k_max; ++k) {
      const int sg = shift_sign(k);
      const Rational scale = 3 * pow2_rational(k);
      std::vector<std::int64_t> m(d);
      bool ok = true;
      for (int j = 0; j < d && ok; ++j) {
        const BigInt mj = floor_of((scale * xr[j] - sg * s[j]) / 3);
        const auto [lo, hi] = detail::axis_range(k, s[j], w.radius);
        ok = mj >= lo && mj <= hi;
        if (ok) m[j] = mj.convert_to<std::int64_t>();
      }
      if (!ok) continue;
      const DyadicCube q{k, m, s};
      if (!contains_point(q, yr)) continue;
      ++res.common_cubes;
      const double ell = side_length(q);
      h += std::min(std::pow(st.lambda * ell, st.alpha), 1.0) / (std::pow(st.lambda, st.alpha) * volume(q));
    }
    int j = d - 1;
    while (j >= 0 && s[j] == 1) s[j--] = -1;
    if (j < 0) break;
    ++s[j];
  }
  res.h = static_cast<double>(h);
  std::vector<double> diff(d);
  for (int j = 0; j < d; ++j) diff[j] = x[j] - y[j];
  res.kernel = bessel_kernel(st, diff);
  res.ratio = res.h / res.kernel;
  return res;
}

// ---- A0(lambda) and lambda_0 ---------------------------------------------------

/// Per-cube data behind A0(lambda): side lengths and theta-average products.
struct LambdaProfile {
  double alpha = 0;
  std::vector<double> ell;
  std::vector<double> prod;
};

inline LambdaProfile lambda_profile(const EmbeddingProblem& prob)
{
  prob.validate();
  const auto* b = std::get_if<kernel_kind::Bessel>(&prob.kernel.rep());
  if (!b) throw DomainError("A0(lambda) needs a Bessel-type kernel");
  LambdaProfile lp;
  lp.alpha = b->alpha;
  const detail::AverageProduct prod(prob, Averaging::Theta);
  for (const auto& s : prob.family.cubes) {
    const double v = prod(s, prob.tol);
    if (!std::isfinite(v)) throw DomainError("theta-average diverges on " + to_literal(s));
    lp.ell.push_back(side_length(s));
    lp.prod.push_back(v);
  }
  return lp;
}

struct A0Lambda {
  double value = 0;
  double small_branch = 0;  // sup over l_S <= 1/lambda of l_S^alpha P(S)
  double large_branch = 0;  // lambda^{-alpha} sup over l_S > 1/lambda of P(S)
};

inline A0Lambda a0_lambda(const LambdaProfile& lp, double lambda)
{
  if (!(lambda > 0)) throw DomainError("lambda must be positive");
  A0Lambda res;
  double large = 0;
  for (std::size_t i = 0; i < lp.ell.size(); ++i) {
    if (lp.ell[i] <= 1.0 / lambda) res.small_branch = std::max(res.small_branch, std::pow(lp.ell[i], lp.alpha) * lp.prod[i]);
    else large = std::max(large, lp.prod[i]);
  }
  res.large_branch = std::pow(lambda, -lp.alpha) * large;
  res.value = std::max(res.small_branch, res.large_branch);
  return res;
}

inline A0Lambda a0_lambda(const EmbeddingProblem& prob, double lambda) { return a0_lambda(lambda_profile(prob), lambda); }

/// t -> sup{l_S^alpha P(S) : l_S <= t} with the global cap C0.
struct DecayProfile {
  std::function<double(double)> phi;
  double c0 = 0;
  /// sup over l_S > 1 of P(S) (the synthetic profile bounds it by C0).
  double large_sup = 0;
  std::string kind;

  /// Phi(t) = c0 min(t, 1)^alpha.
  static DecayProfile synthetic(double c0, double alpha)
  {
    if (!(c0 >= 0) || !(alpha > 0)) throw DomainError("synthetic profile needs c0 >= 0, alpha > 0");
    return DecayProfile{[=](double t) { return c0 * std::pow(std::min(t, 1.0), alpha); }, c0, c0, "synthetic"};
  }

  static DecayProfile empirical(const LambdaProfile& lp)
  {
    auto data = std::make_shared<LambdaProfile>(lp);
    DecayProfile p;
    p.kind = "empirical";
    p.phi = [data](double t) {
      double best = 0;
      for (std::size_t i = 0; i < data->ell.size(); ++i)
        if (data->ell[i] <= t) best = std::max(best, std::pow(data->ell[i], data->alpha) * data->prod[i]);
      return best;
    };
    for (std::size_t i = 0; i < lp.ell.size(); ++i)
      if (lp.ell[i] > 1.0) p.large_sup = std::max(p.large_sup, lp.prod[i]);
    p.c0 = std::max(p.phi(1.0), p.large_sup);
    return p;
  }
};

struct Lambda0Result {
  std::optional<double> lambda0;
  int n1 = 0;
  int n0 = 0;
  /// The four case bounds: l_S <= 1/lambda0; l_S > 1; 1/lambda0 < l_S <= 2^{N1-N0}; 2^{N1-N0} < l_S <= 1.
  std::array<double, 4> cases{};
  bool certified = false;
  std::string message;
};

/// N1 >= 1 least with C0/2^{N1 alpha} < eps, N0 > N1 least with Phi(2^{N1-N0}) < eps,
/// lambda0 = 2^{N0}; no lambda0 if Phi does not drop below eps by N0 = cap.
inline Lambda0Result select_lambda0(const DecayProfile& prof, double alpha, double eps, int cap = 60)
{
  if (!(alpha > 0)) throw DomainError("alpha must be positive");
  if (!(eps > 0)) throw DomainError("epsilon must be positive");
  if (!std::isfinite(prof.c0)) throw DomainError("C0 must be finite");
  Lambda0Result res;
  int n1 = 1;
  while (!(prof.c0 / std::exp2(n1 * alpha) < eps)) {
    if (++n1 > cap) {
      res.message = "no N1 within the cap";
      return res;
    }
  }
  res.n1 = n1;
  int n0 = n1 + 1;
  while (!(prof.phi(std::exp2(n1 - n0)) < eps)) {
    if (++n0 > cap) {
      res.message = "vanishing hypothesis fails within the probe range";
      return res;
    }
  }
  res.n0 = n0;
  const double lambda0 = std::exp2(n0);
  res.cases = {prof.phi(1.0 / lambda0), std::pow(lambda0, -alpha) * prof.large_sup, prof.phi(std::exp2(n1 - n0)),
               prof.phi(1.0) / std::exp2(n1 * alpha)};
  res.certified = std::all_of(res.cases.begin(), res.cases.end(), [&](double c) { return c < eps; });
  if (res.certified) res.lambda0 = lambda0;
  else res.message = "case bounds not all below epsilon";
  return res;
}

// ---- weight conditions ---------------------------------------------------------

enum class SupVerdict { Finite, InfiniteTrend };
enum class LimitVerdict { Vanishes, Persists };

inline const char* to_string(SupVerdict v) { return v == SupVerdict::Finite ? "FINITE" : "INFINITE-TREND"; }
inline const char* to_string(LimitVerdict v) { return v == LimitVerdict::Vanishes ? "VANISHES" : "PERSISTS"; }

struct ConditionValue {
  std::string name;
  double value = 0;
  /// Same sup on the half-depth window.
  double inner_value = 0;
  SupVerdict verdict = SupVerdict::Finite;
};

struct VanishingSweep {
  std::string name;
  /// sup over l_Q <= 2^{-j}, j = 0..min(20, finest window level).
  std::vector<double> values;
  double slope = 0;
  LimitVerdict verdict = LimitVerdict::Persists;
};

struct ConditionReport {
  std::vector<ConditionValue> sups;
  std::vector<VanishingSweep> sweeps;
  std::vector<std::string> flagged;  // cubes with divergent integrals
  std::size_t cubes = 0;
  /// Extra scalars (norms, composite bounds), by name.
  std::vector<std::pair<std::string, double>> extras;
};

inline constexpr int kLambdaSweepMax = 20;

namespace detail {

/// Cubes of the standard grid in the window; levels with more than `cap`
/// cubes keep the ones near the origin, near the window edge, and a stride sample.
inline std::vector<DyadicCube> condition_cubes(const Window& w, int d, std::size_t cap = 4096)
{
  w.validate();
  const std::vector<int> s(d, 0);
  std::vector<DyadicCube> out;
  const std::size_t per_axis = std::max<std::size_t>(8, static_cast<std::size_t>(std::pow(double(cap), 1.0 / d)));
  for (int k = w.k_min; k <= w.k_max; ++k) {
    const auto [lo, hi] = axis_range(k, 0, w.radius);
    if (lo > hi) continue;
    std::vector<std::int64_t> axis;
    const std::uint64_t n = static_cast<std::uint64_t>(hi - lo + 1);
    if (n <= per_axis) {
      for (std::int64_t i = lo; i <= hi; ++i) axis.push_back(i);
    } else {
      std::set<std::int64_t> pick;
      for (std::int64_t i = -2; i <= 1; ++i) pick.insert(std::clamp<std::int64_t>(i, lo, hi));
      for (std::int64_t i = 0; i < 2; ++i) {
        pick.insert(lo + i);
        pick.insert(hi - i);
      }
      const std::uint64_t stride = n / per_axis + 1;
      for (std::uint64_t t = 0; t < n; t += stride) pick.insert(lo + static_cast<std::int64_t>(t));
      axis.assign(pick.begin(), pick.end());
    }
    std::vector<std::size_t> pos(d, 0);
    while (true) {
      std::vector<std::int64_t> m(d);
      for (int j = 0; j < d; ++j) m[j] = axis[pos[j]];
      out.push_back(DyadicCube{k, m, s});
      int j = d - 1;
      while (j >= 0 && pos[j] + 1 == axis.size()) pos[j--] = 0;
      if (j < 0) break;
      ++pos[j];
    }
  }
  return out;
}

/// Whether a weight can be integrated over q (sampled weights only cover their mesh).
inline bool weight_defined_on(const Weight& v, const DyadicCube& q)
{
  if (const auto* s = std::get_if<weight_kind::Sampled>(&v.rep())) {
    const Mesh& m = s->density->mesh;
    return q.level <= m.level() && m.covers(q);
  }
  return true;
}

inline Window inner_window(const Window& w)
{
  Window in = w;
  in.k_min = w.k_min >= 0 ? w.k_min : -((-w.k_min) / 2);
  in.k_max = w.k_max <= 0 ? w.k_max : w.k_max / 2;
  if (in.k_min > in.k_max) in.k_max = in.k_min;
  in.radius = w.radius / 2;
  return in;
}

/// A sup-type condition value on the cubes, with its inner-window counterpart.
struct CubeQuantity {
  std::string name;
  std::function<bool(const DyadicCube&)> domain;
  std::function<double(const DyadicCube&)> value;
};

inline double log2_tail_slope(const std::vector<double>& v)
{
  const std::size_t start = v.size() / 2;
  std::vector<double> x, y;
  for (std::size_t j = start; j < v.size(); ++j) {
    if (!(v[j] > 0)) continue;
    x.push_back(static_cast<double>(j));
    y.push_back(std::log2(v[j]));
  }
  if (x.size() < 2) return 0;
  return ls_slope(x, y);
}

inline VanishingSweep sweep(const std::string& name, const std::vector<DyadicCube>& cubes,
                            const std::vector<double>& vals)
{
  VanishingSweep sw;
  sw.name = name;
  // Levels finer than the window carry no cubes; the sweep stops there.
  int finest = 0;
  for (const auto& c : cubes) finest = std::max(finest, c.level);
  for (int j = 0; j <= std::min(kLambdaSweepMax, finest); ++j) {
    double best = 0;
    for (std::size_t i = 0; i < cubes.size(); ++i)
      if (cubes[i].level >= j && std::isfinite(vals[i])) best = std::max(best, vals[i]);
      else if (cubes[i].level >= j) best = kInf;
    sw.values.push_back(best);
  }
  const std::size_t start = sw.values.size() / 2;
  bool all_zero = true;
  for (std::size_t j = start; j < sw.values.size(); ++j) all_zero = all_zero && sw.values[j] == 0.0;
  bool finite = std::all_of(sw.values.begin() + start, sw.values.end(), [](double v) { return std::isfinite(v); });
  sw.slope = finite ? log2_tail_slope(sw.values) : 0.0;
  sw.verdict = (all_zero || (finite && sw.slope < -0.02)) ? LimitVerdict::Vanishes : LimitVerdict::Persists;
  return sw;
}

inline ConditionValue sup_condition(const CubeQuantity& q, const std::vector<DyadicCube>& cubes,
                                    const std::vector<double>& vals, const Window& inner)
{
  ConditionValue cv;
  cv.name = q.name;
  const auto in_inner = [&](const DyadicCube& c) {
    if (c.level < inner.k_min || c.level > inner.k_max) return false;
    for (int j = 0; j < c.dim(); ++j) {
      const Rational lo = corner(c, j);
      if (!(lo < inner.radius && lo + side_length_exact(c) > -inner.radius)) return false;
    }
    return true;
  };
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    if (!q.domain(cubes[i])) continue;
    cv.value = std::max(cv.value, vals[i]);
    if (in_inner(cubes[i])) cv.inner_value = std::max(cv.inner_value, vals[i]);
  }
  cv.verdict = (std::isfinite(cv.value) && cv.value <= 2.0 * cv.inner_value) || cv.value == 0.0
                   ? SupVerdict::Finite
                   : SupVerdict::InfiniteTrend;
  return cv;
}

/// Evaluates sup-conditions on the window and the vanishing sweep of `small`.
inline void evaluate_conditions(ConditionReport& rep, const Weight& v, const Window& w, int d,
                                const std::vector<CubeQuantity>& sups, const std::vector<std::size_t>& sweep_of)
{
  std::vector<DyadicCube> cubes;
  for (auto& q : condition_cubes(w, d))
    if (weight_defined_on(v, q)) cubes.push_back(std::move(q));
  rep.cubes = cubes.size();
  const Window inner = inner_window(w);
  for (std::size_t k = 0; k < sups.size(); ++k) {
    std::vector<double> vals(cubes.size());
    for (std::size_t i = 0; i < cubes.size(); ++i) {
      vals[i] = sups[k].value(cubes[i]);
      if (!std::isfinite(vals[i])) rep.flagged.push_back(sups[k].name + ":" + to_literal(cubes[i]));
    }
    rep.sups.push_back(sup_condition(sups[k], cubes, vals, inner));
    if (std::find(sweep_of.begin(), sweep_of.end(), k) != sweep_of.end()) {
      std::vector<DyadicCube> small;
      std::vector<double> sv;
      for (std::size_t i = 0; i < cubes.size(); ++i)
        if (cubes[i].level >= 0) {
          small.push_back(cubes[i]);
          sv.push_back(vals[i]);
        }
      rep.sweeps.push_back(sweep(sups[k].name, small, sv));
    }
  }
}

inline bool small_cube(const DyadicCube& q) { return q.level >= 0; }
inline bool large_cube(const DyadicCube& q) { return q.level < 0; }

}  // namespace detail

/// Conditions for the L^p -> L^q(v) relative bound with p <= q: plain and
/// theta-averaged small/large-cube sups and their vanishing sweeps over
/// lambda = 2^0..2^20. `n` is the multilinearity in the |Q|^{alpha/n} factor.
inline ConditionReport conditions_p_le_q(const Weight& v, double p, double q, double alpha, double theta,
                                         const Window& w, int d, int n = 2, double tol = kDefaultQuadTol)
{
  if (!(p > 1 && p <= q && std::isfinite(q))) throw DomainError("needs 1 < p <= q < inf");
  if (!(alpha > 0 && alpha < d)) throw DomainError("needs 0 < alpha < d");
  if (!(theta > 1)) throw DomainError("theta must exceed 1");
  if (n < 1) throw DomainError("n must be positive");
  const Weight vt = v.power_theta(theta);
  auto vol = [](const DyadicCube& c) { return volume(c); };
  auto plain = [=](const DyadicCube& c, double e) {
    return std::pow(vol(c), e) * std::pow(integrate(v, c, tol), 1.0 / q);
  };
  auto thetav = [=](const DyadicCube& c, double e) {
    return std::pow(vol(c), e) * std::pow(integrate(vt, c, tol) / vol(c), 1.0 / (theta * q));
  };
  const double an = alpha / n;
  std::vector<detail::CubeQuantity> qs = {
      {"plain-small-cube", detail::small_cube, [=](const DyadicCube& c) { return plain(c, an - 1 / p); }},
      {"plain-large-cube", detail::large_cube, [=](const DyadicCube& c) { return plain(c, -1 / p); }},
      {"theta-small-cube", detail::small_cube, [=](const DyadicCube& c) { return thetav(c, an + 1 / q - 1 / p); }},
      {"theta-large-cube", detail::large_cube, [=](const DyadicCube& c) { return thetav(c, 1 / q - 1 / p); }},
  };
  ConditionReport rep;
  detail::evaluate_conditions(rep, v, w, d, qs, {0, 2});
  return rep;
}

struct SubcriticalExponents {
  double p = 2, q = 1.5, alpha = 0.5, theta1 = 2, theta2 = 2, theta = 1.5;

  double r() const { return 1.0 / (1.0 / q - 1.0 / p); }

  void validate() const
  {
    if (!(q > 1 && q < p && std::isfinite(p))) throw DomainError("needs 1 < q < p < inf");
    if (!(theta1 > 1 && theta2 > 1)) throw DomainError("needs theta1, theta2 > 1");
    if (!(theta > 1 && theta < theta1)) throw DomainError("needs 1 < theta < theta1");
    if (!(alpha > 0)) throw DomainError("needs alpha > 0");
    const double lhs = 1.0 / q, rhs = 1.0 / (theta2 * p) + theta1 / r();
    if (std::abs(lhs - rhs) > 1e-12) throw DomainError("exponent relation 1/q = 1/(theta2 p) + theta1/r violated");
  }
};

/// Conditions for the relative bound with q < p: ||v||_{L^theta1} over the
/// window, plain and theta-averaged small-cube sups with their sweeps, the
/// large-cube bound, and (given a family) the composite bound next to the direct constant.
inline ConditionReport conditions_q_lt_p(const Weight& v, const SubcriticalExponents& ex, const Window& w, int d,
                                         const SparseFamily* family = nullptr, double lambda = 1.0,
                                         double tol = kDefaultQuadTol)
{
  ex.validate();
  if (!(ex.alpha < d)) throw DomainError("needs 0 < alpha < d");
  const Weight vt = v.power_theta(ex.theta);
  const double e_plain = 1.0 / (ex.theta2 * ex.p), e_theta = 1.0 / (ex.theta * ex.theta2 * ex.p);
  auto small_plain = [=](const DyadicCube& c) {
    return std::pow(side_length(c), ex.alpha) * std::pow(integrate(v, c, tol) / volume(c), e_plain);
  };
  auto small_theta = [=](const DyadicCube& c) {
    return std::pow(side_length(c), ex.alpha) * std::pow(integrate(vt, c, tol) / volume(c), e_theta);
  };
  auto large_plain = [=](const DyadicCube& c) { return std::pow(integrate(v, c, tol) / volume(c), e_plain); };
  std::vector<detail::CubeQuantity> qs = {
      {"plain-small-cube", detail::small_cube, small_plain},
      {"theta-small-cube", detail::small_cube, small_theta},
      {"plain-large-cube", detail::large_cube, large_plain},
  };
  ConditionReport rep;
  detail::evaluate_conditions(rep, v, w, d, qs, {0, 1});

  // ||v||_{L^theta1} over the coarsest window cubes.
  long double norm = 0;
  {
    Window top = w;
    top.k_max = w.k_min;
    const Weight vp = v.power_theta(ex.theta1);
    for (const auto& c : enumerate_grid(std::vector<int>(d, 0), top, d))
      if (detail::weight_defined_on(v, c)) norm += integrate(vp, c, tol);
  }
  const double vnorm = std::pow(static_cast<double>(norm), 1.0 / ex.theta1);
  rep.extras.emplace_back("v_norm_theta1", vnorm);
  rep.extras.emplace_back("v_norm_theta1_pow_theta1_over_r", std::pow(vnorm, ex.theta1 / ex.r()));
  rep.extras.emplace_back("large_cube_bound", std::pow(vnorm, e_plain));

  if (family && family->size() > 0) {
    // [sum (v(S)/|S|)^theta1 |E(S)|]^{1/r} * sup K(S)|S|(v(S)/|S|)^{1/(theta2 p)} against the direct constant.
    const KernelMap k = KernelMap::bessel(ex.alpha, lambda, 2, d);
    long double mass = 0;
    double sup = 0;
    for (std::size_t i = 0; i < family->size(); ++i) {
      const auto& s = family->cubes[i];
      const double avg = integrate(v, s, tol) / volume(s);
      mass += std::pow(avg, ex.theta1) * family->eset_volume(i);
      sup = std::max(sup, kernel_value(k, s) * volume(s) * std::pow(avg, e_plain));
    }
    const double composite = std::pow(static_cast<double>(mass), 1.0 / ex.r()) * sup;
    const double pc = ex.q / (ex.q - 1.0);
    const EmbeddingProblem prob{
        .d = d, .p = {ex.p, pc}, .sigma = {Weight::lebesgue(), v}, .kernel = k, .family = *family, .mesh = std::nullopt, .tol = tol};
    rep.extras.emplace_back("composite_bound", composite);
    rep.extras.emplace_back("direct_a0", a0_sum(prob).value);
  }
  return rep;
}

}  // namespace sparsemb
