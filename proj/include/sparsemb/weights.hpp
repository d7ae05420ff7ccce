// Weights on R^d and their cube measures sigma(Q).
//
// Analytic weights are radial: Lebesgue, |x|^beta, and |x|^beta max(|x|,1)^gamma.
// In d = 1 their cube measures have closed forms. In d >= 2 the cube is cut at
// the origin into orthant boxes; the part of each box that is a cube with a
// corner at the origin is evaluated by self-similarity (for a pure power,
// I([0,m]^d) = m^{beta+d} I([0,1]^d), and I([0,1]^d) is the shell integral over
// [0,1]^d \ [0,1/2]^d divided by 1 - 2^{-(beta+d)}); every remaining box stays
// away from the origin and is integrated by adaptive tensor Gauss-Legendre.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "sparsemb/dyadic.hpp"
#include "sparsemb/mesh.hpp"

namespace sparsemb {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultQuadTol = 1e-9;

namespace weight_kind {

struct Lebesgue {
  friend bool operator==(const Lebesgue&, const Lebesgue&) = default;
};

/// |x|^beta.
struct Power {
  double beta = 0;
  friend bool operator==(const Power&, const Power&) = default;
};

/// |x|^beta max(|x|, 1)^gamma.
struct ModifiedPower {
  double beta = 0;
  double gamma = 0;
  friend bool operator==(const ModifiedPower&, const ModifiedPower&) = default;
};

/// Piecewise-constant density on the cells of a mesh.
struct Sampled {
  std::shared_ptr<const MeshFunction> density;
  std::shared_ptr<const BoxSum> sums;  // of density * cell volume
  std::string source;
  friend bool operator==(const Sampled& a, const Sampled& b) { return *a.density == *b.density; }
};

}  // namespace weight_kind

class Weight {
 public:
  using Rep = std::variant<weight_kind::Lebesgue, weight_kind::Power, weight_kind::ModifiedPower, weight_kind::Sampled>;

  Weight() : rep_(weight_kind::Lebesgue{}) {}

  static Weight lebesgue() { return Weight(weight_kind::Lebesgue{}); }

  static Weight power(double beta, int d)
  {
    if (!(beta > -d)) throw DomainError("power weight needs beta > -d");
    return power_unchecked(beta);
  }

  static Weight modified_power(double beta, double gamma, int d)
  {
    if (!(beta + gamma > -d)) throw DomainError("modified power weight needs beta + gamma > -d");
    // Near the origin the weight is |x|^beta; local integrability needs beta > -d too.
    if (!(beta > -d)) throw DomainError("modified power weight needs beta > -d");
    return modified_power_unchecked(beta, gamma);
  }

  static Weight sampled(MeshFunction density, std::string source = {})
  {
    for (double v : density.values)
      if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("sampled weight values must be finite and >= 0");
    std::vector<double> mass(density.values);
    const double vol = density.mesh.cell_volume();
    for (double& m : mass) m *= vol;
    auto sums = std::make_shared<const BoxSum>(density.mesh, mass);
    return Weight(weight_kind::Sampled{std::make_shared<const MeshFunction>(std::move(density)), std::move(sums),
                                       std::move(source)});
  }

  /// Pointwise power w^theta, theta >= 1. Closed under every family, so the
  /// result is normalized (e.g. Power(beta)^theta is Power(theta beta)).
  /// Non-integrable results are allowed and measure as +inf on cubes at 0.
  Weight power_theta(double theta) const
  {
    if (!(theta >= 1.0)) throw DomainError("theta must be >= 1");
    return pow(theta);
  }

  /// Pointwise power with any real exponent (dual weights use negative ones).
  Weight pow(double e) const
  {
    return std::visit(
        [&](const auto& k) -> Weight {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, weight_kind::Lebesgue>) return lebesgue();
          else if constexpr (std::is_same_v<K, weight_kind::Power>) return power_unchecked(e * k.beta);
          else if constexpr (std::is_same_v<K, weight_kind::ModifiedPower>)
            return modified_power_unchecked(e * k.beta, e * k.gamma);
          else {
            MeshFunction out = *k.density;
            for (double& v : out.values) v = (v == 0.0) ? (e > 0 ? 0.0 : (e == 0 ? 1.0 : kInf)) : std::pow(v, e);
            return sampled_unchecked(std::move(out), k.source);
          }
        },
        rep_);
  }

  const Rep& rep() const noexcept { return rep_; }
  bool is_lebesgue() const noexcept { return std::holds_alternative<weight_kind::Lebesgue>(rep_); }

  /// Pointwise density at x (used by oracles).
  double value(const std::vector<double>& x) const
  {
    double r2 = 0;
    for (double v : x) r2 += v * v;
    const double r = std::sqrt(r2);
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, weight_kind::Lebesgue>) return 1.0;
          else if constexpr (std::is_same_v<K, weight_kind::Power>) return std::pow(r, k.beta);
          else if constexpr (std::is_same_v<K, weight_kind::ModifiedPower>)
            return std::pow(r, k.beta) * std::pow(std::max(r, 1.0), k.gamma);
          else throw DomainError("pointwise value of a sampled weight is not defined");
        },
        rep_);
  }

  friend bool operator==(const Weight&, const Weight&) = default;

 private:
  explicit Weight(Rep r) : rep_(std::move(r)) {}

  static Weight power_unchecked(double beta)
  {
    if (beta == 0.0) return lebesgue();
    return Weight(weight_kind::Power{beta});
  }

  static Weight modified_power_unchecked(double beta, double gamma)
  {
    if (gamma == 0.0) return power_unchecked(beta);
    return Weight(weight_kind::ModifiedPower{beta, gamma});
  }

  static Weight sampled_unchecked(MeshFunction density, std::string source)
  {
    std::vector<double> mass(density.values);
    const double vol = density.mesh.cell_volume();
    for (double& m : mass) m *= vol;
    auto sums = std::make_shared<const BoxSum>(density.mesh, mass);
    return Weight(weight_kind::Sampled{std::make_shared<const MeshFunction>(std::move(density)), std::move(sums),
                                       std::move(source)});
  }

  Rep rep_;
};

namespace quad {

/// Radial density r^beta max(r,1)^gamma (gamma = 0 for a pure power).
struct Radial {
  double beta = 0;
  double gamma = 0;
  double operator()(double r2) const
  {
    const double r = std::sqrt(r2);
    double v = std::pow(r, beta);
    if (gamma != 0.0 && r > 1.0) v *= std::pow(r, gamma);
    return v;
  }
};

// ---- d = 1 closed forms ----------------------------------------------------

/// int_a^b x^beta dx for 0 <= a < b.
inline double power_segment_positive(double beta, double a, double b)
{
  const double c = beta + 1.0;
  if (a == 0.0) {
    if (c <= 0.0) return kInf;
    return std::pow(b, c) / c;
  }
  const double t = std::log1p((b - a) / a);
  if (c == 0.0) return t;
  return std::pow(a, c) * std::expm1(c * t) / c;
}

/// int_a^b |x|^beta max(|x|,1)^gamma dx over 0 <= a < b.
inline double radial_segment_positive(const Radial& w, double a, double b)
{
  if (w.gamma == 0.0 || b <= 1.0) return power_segment_positive(w.beta, a, b);
  if (a >= 1.0) return power_segment_positive(w.beta + w.gamma, a, b);
  return power_segment_positive(w.beta, a, 1.0) + power_segment_positive(w.beta + w.gamma, 1.0, b);
}

inline double radial_segment(const Radial& w, double a, double b)
{
  if (b <= a) return 0.0;
  if (a >= 0.0) return radial_segment_positive(w, a, b);
  if (b <= 0.0) return radial_segment_positive(w, -b, -a);
  return radial_segment_positive(w, 0.0, -a) + radial_segment_positive(w, 0.0, b);
}

// ---- d >= 2 ----------------------------------------------------------------

using Box = std::vector<std::array<double, 2>>;

inline constexpr int kGaussPoints = 8;
inline constexpr int kMaxDepth = 48;

class RadialBoxIntegrator {
 public:
  RadialBoxIntegrator(Radial w, int d, double tol) : w_(w), d_(d), tol_(tol)
  {
    using G = boost::math::quadrature::gauss<double, kGaussPoints>;
    // Expand the symmetric half-rule into full nodes on [-1, 1].
    const auto& x = G::abscissa();
    const auto& wt = G::weights();
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] == 0.0) {
        nodes_.push_back(0.0);
        weights_.push_back(wt[i]);
      } else {
        nodes_.push_back(x[i]);
        weights_.push_back(wt[i]);
        nodes_.push_back(-x[i]);
        weights_.push_back(wt[i]);
      }
    }
  }

  double integrate(const Box& box) const
  {
    for (int j = 0; j < d_; ++j)
      if (box[j][1] <= box[j][0]) return 0.0;
    bool touches = true;
    for (int j = 0; j < d_; ++j)
      if (!(box[j][0] <= 0.0 && box[j][1] >= 0.0)) touches = false;
    if (!touches) return regular(box);

    // Every axis straddles or touches 0: split into orthant boxes and reflect
    // each into the positive orthant.
    std::vector<std::vector<double>> legs(d_);
    for (int j = 0; j < d_; ++j) {
      if (box[j][0] < 0.0) legs[j].push_back(-box[j][0]);
      if (box[j][1] > 0.0) legs[j].push_back(box[j][1]);
    }
    double total = 0.0;
    std::vector<std::size_t> pick(d_, 0);
    while (true) {
      std::vector<double> a(d_);
      for (int j = 0; j < d_; ++j) a[j] = legs[j][pick[j]];
      total += origin_corner_box(a);
      int j = d_ - 1;
      while (j >= 0 && ++pick[j] == legs[j].size()) {
        pick[j] = 0;
        --j;
      }
      if (j < 0) break;
    }
    return total;
  }

 private:
  /// int over [0,a_1] x ... x [0,a_d].
  double origin_corner_box(const std::vector<double>& a) const
  {
    const double m = *std::min_element(a.begin(), a.end());
    double total = origin_cube(m);
    if (!std::isfinite(total)) return total;
    // Remainder: x_j in [m, a_j], x_i in [0, m] for i < j, x_i in [0, a_i] for i > j.
    for (int j = 0; j < d_; ++j) {
      if (a[j] <= m) continue;
      Box b(d_);
      for (int i = 0; i < d_; ++i) {
        if (i < j) b[i] = {0.0, m};
        else if (i == j) b[i] = {m, a[j]};
        else b[i] = {0.0, a[i]};
      }
      total += regular(b);
    }
    return total;
  }

  /// int over [0,m]^d.
  double origin_cube(double m) const
  {
    const double e = w_.beta + d_;
    if (e <= 0.0) return kInf;
    if (w_.gamma == 0.0 || m * std::sqrt(static_cast<double>(d_)) <= 1.0)
      return std::pow(m, e) * unit_cube(w_.beta);
    return origin_cube(0.5 * m) + shell(0.5 * m, m);
  }

  /// int over [0,2h]^d \ [0,h]^d.
  double shell(double h, double two_h) const
  {
    double total = 0.0;
    for (unsigned code = 1; code < (1u << d_); ++code) {
      Box b(d_);
      for (int j = 0; j < d_; ++j) b[j] = ((code >> j) & 1u) ? std::array<double, 2>{h, two_h} : std::array<double, 2>{0.0, h};
      total += regular(b);
    }
    return total;
  }

  /// int_{[0,1]^d} |x|^beta dx for a pure power.
  double unit_cube(double beta) const
  {
    static std::mutex mu;
    static std::map<std::pair<int, double>, double> cache;
    {
      std::lock_guard<std::mutex> lock(mu);
      if (auto it = cache.find({d_, beta}); it != cache.end()) return it->second;
    }
    const RadialBoxIntegrator pure(Radial{beta, 0.0}, d_, std::min(tol_, 1e-12));
    const double v = pure.shell(0.5, 1.0) / (1.0 - std::exp2(-(beta + d_)));
    std::lock_guard<std::mutex> lock(mu);
    cache[{d_, beta}] = v;
    return v;
  }

  double gauss(const Box& b) const
  {
    const int n = static_cast<int>(nodes_.size());
    std::vector<int> idx(d_, 0);
    std::vector<double> half(d_), mid(d_);
    double jac = 1.0;
    for (int j = 0; j < d_; ++j) {
      half[j] = 0.5 * (b[j][1] - b[j][0]);
      mid[j] = 0.5 * (b[j][1] + b[j][0]);
      jac *= half[j];
    }
    double total = 0.0;
    while (true) {
      double r2 = 0.0, wprod = 1.0;
      for (int j = 0; j < d_; ++j) {
        const double x = mid[j] + half[j] * nodes_[idx[j]];
        r2 += x * x;
        wprod *= weights_[idx[j]];
      }
      total += wprod * w_(r2);
      int j = d_ - 1;
      while (j >= 0 && ++idx[j] == n) {
        idx[j] = 0;
        --j;
      }
      if (j < 0) break;
    }
    return total * jac;
  }

  std::vector<Box> halves(const Box& b) const
  {
    std::vector<Box> out;
    for (unsigned code = 0; code < (1u << d_); ++code) {
      Box c(d_);
      for (int j = 0; j < d_; ++j) {
        const double mid = 0.5 * (b[j][0] + b[j][1]);
        c[j] = ((code >> j) & 1u) ? std::array<double, 2>{mid, b[j][1]} : std::array<double, 2>{b[j][0], mid};
      }
      out.push_back(std::move(c));
    }
    return out;
  }

  /// Box whose closure avoids the origin.
  double regular(const Box& b) const
  {
    const double whole = gauss(b);
    return adapt(b, whole, tol_ * std::abs(whole), 0);
  }

  double adapt(const Box& b, double whole, double abs_tol, int depth) const
  {
    const auto parts = halves(b);
    std::vector<double> est(parts.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) sum += (est[i] = gauss(parts[i]));
    const double err = std::abs(sum - whole);
    if (err <= abs_tol || err <= 1e-15 * std::abs(sum)) return sum;
    if (depth >= kMaxDepth) throw QuadratureError("cube quadrature did not reach the requested tolerance");
    const double child_tol = abs_tol / static_cast<double>(parts.size());
    double total = 0.0;
    for (std::size_t i = 0; i < parts.size(); ++i) total += adapt(parts[i], est[i], child_tol, depth + 1);
    return total;
  }

  Radial w_;
  int d_;
  double tol_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

inline double radial_cube(const Radial& w, const DyadicCube& q, double tol)
{
  const int d = q.dim();
  const double h = side_length(q);
  if (d == 1) {
    const double a = corner_double(q, 0);
    return radial_segment(w, a, a + h);
  }
  Box b(d);
  for (int j = 0; j < d; ++j) {
    const double a = corner_double(q, j);
    b[j] = {a, a + h};
  }
  return RadialBoxIntegrator(w, d, tol).integrate(b);
}

}  // namespace quad

/// sigma(Q). May be +inf for non-integrable pointwise powers at the origin.
inline double integrate(const Weight& w, const DyadicCube& q, double tol = kDefaultQuadTol)
{
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, weight_kind::Lebesgue>) return volume(q);
        else if constexpr (std::is_same_v<K, weight_kind::Power>) return quad::radial_cube({k.beta, 0.0}, q, tol);
        else if constexpr (std::is_same_v<K, weight_kind::ModifiedPower>)
          return quad::radial_cube({k.beta, k.gamma}, q, tol);
        else {
          const Mesh& m = k.density->mesh;
          if (q.level > m.level()) throw DomainError("cube finer than the sampled weight's mesh");
          if (!m.covers(q)) throw DomainError("cube outside the sampled weight's window");
          const IndexBox b = cell_box(q, m.level());
          const double v = static_cast<double>(k.sums->sum(b));
          if (!std::isnan(v)) return v;
          long double direct = 0;  // inf cells break inclusion-exclusion
          for_each_cell(m, b, [&](std::size_t c) { direct += k.density->values[c] * m.cell_volume(); });
          return static_cast<double>(direct);
        }
      },
      w.rep());
}

/// sigma(cell) for every cell of a mesh.
inline std::vector<double> cell_measures(const Weight& w, const Mesh& mesh, double tol = kDefaultQuadTol)
{
  std::vector<double> out(mesh.size());
  if (w.is_lebesgue()) {
    std::fill(out.begin(), out.end(), mesh.cell_volume());
    return out;
  }
  if (const auto* s = std::get_if<weight_kind::Sampled>(&w.rep()); s && s->density->mesh == mesh) {
    const double vol = mesh.cell_volume();
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = s->density->values[c] * vol;
    return out;
  }
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = integrate(w, mesh.cell(c), tol);
  return out;
}

// ---- literals ----------------------------------------------------------------

namespace detail {

inline double parse_double(const std::string& s)
{
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "'");
  }
  if (used != s.size()) throw ParseError("bad number '" + s + "'");
  return v;
}

inline std::map<std::string, std::string> parse_kv(const std::string& body)
{
  std::map<std::string, std::string> kv;
  std::istringstream is(body);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  return kv;
}

inline std::string format_double(double v)
{
  std::ostringstream os;
  os << std::setprecision(17) << v;
  double back = 0;
  // Prefer the shortest representation that round-trips.
  for (int prec = 1; prec <= 17; ++prec) {
    std::ostringstream t;
    t << std::setprecision(prec) << v;
    back = std::stod(t.str());
    if (back == v) return t.str();
  }
  return os.str();
}

}  // namespace detail

/// "lebesgue", "power:beta=B", "modpower:beta=B,gamma=G", "theta:<inner>,theta=T",
/// "sampled:<csv path>".
inline Weight parse_weight(const std::string& text, int d)
{
  if (text == "lebesgue") return Weight::lebesgue();
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParseError("unknown weight literal '" + text + "'");
  const std::string head = text.substr(0, colon), body = text.substr(colon + 1);
  if (head == "power") {
    auto kv = detail::parse_kv(body);
    if (kv.size() != 1 || !kv.count("beta")) throw ParseError("power weight needs exactly beta=");
    return Weight::power(detail::parse_double(kv["beta"]), d);
  }
  if (head == "modpower") {
    auto kv = detail::parse_kv(body);
    if (kv.size() != 2 || !kv.count("beta") || !kv.count("gamma")) throw ParseError("modpower needs beta= and gamma=");
    return Weight::modified_power(detail::parse_double(kv["beta"]), detail::parse_double(kv["gamma"]), d);
  }
  if (head == "theta") {
    const auto at = body.rfind(",theta=");
    if (at == std::string::npos) throw ParseError("theta weight needs a trailing ,theta=");
    const double theta = detail::parse_double(body.substr(at + 7));
    return parse_weight(body.substr(0, at), d).power_theta(theta);
  }
  if (head == "sampled") {
    MeshFunction f = read_csv_file(body);
    if (f.mesh.dim() != d) throw DimensionError("sampled weight dimension mismatch");
    return Weight::sampled(std::move(f), body);
  }
  throw ParseError("unknown weight literal '" + text + "'");
}

inline std::string to_literal(const Weight& w)
{
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, weight_kind::Lebesgue>) return "lebesgue";
        else if constexpr (std::is_same_v<K, weight_kind::Power>) return "power:beta=" + detail::format_double(k.beta);
        else if constexpr (std::is_same_v<K, weight_kind::ModifiedPower>)
          return "modpower:beta=" + detail::format_double(k.beta) + ",gamma=" + detail::format_double(k.gamma);
        else return "sampled:" + k.source;
      },
      w.rep());
}

// ---- diagnostics -------------------------------------------------------------

/// int_Q |x|^beta dx / (max(l_Q, |c_Q|)^beta |Q|).
inline double power_average_ratio(double beta, const DyadicCube& q, double tol = kDefaultQuadTol)
{
  if (!(beta > -q.dim())) throw DomainError("power_average_ratio needs beta > -d");
  const double num = integrate(Weight::power(beta, q.dim()), q, tol);
  const double scale = std::max(side_length(q), center_norm(q));
  return num / (std::pow(scale, beta) * volume(q));
}

struct ApEstimate {
  double p = 2;
  double value = 1;
  std::size_t family_size = 0;
  /// Index of the attaining cube in the input list (family_size if empty).
  std::size_t argmax = 0;
};

/// Per-cube Muckenhoupt quantity (avg w)(avg w^{-1/(p-1)})^{p-1}.
inline double ap_quantity(const Weight& w, const Weight& dual, double p, const DyadicCube& q, double tol)
{
  const double vol = volume(q);
  const double a = integrate(w, q, tol) / vol;
  const double b = integrate(dual, q, tol) / vol;
  if (!std::isfinite(a) || !std::isfinite(b)) return kInf;
  return a * std::pow(b, p - 1.0);
}

/// Lower bound for [w]_{A_p}: the sup over the given cubes.
inline ApEstimate ap_constant(const Weight& w, double p, const std::vector<DyadicCube>& cubes,
                              double tol = kDefaultQuadTol)
{
  if (!(p > 1.0) || !std::isfinite(p)) throw DomainError("A_p needs 1 < p < inf");
  const Weight dual = w.pow(-1.0 / (p - 1.0));
  ApEstimate est{p, 1.0, cubes.size(), cubes.size()};
  double best = -1.0;
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const double v = ap_quantity(w, dual, p, cubes[i], tol);
    if (v > best) {
      best = v;
      est.argmax = i;
    }
  }
  if (!cubes.empty()) est.value = best;
  return est;
}

inline constexpr double kAInfinityProxyP = 64.0;

/// Finite surrogate for [w]_{A_inf}: [w]_{A_p} at a large p.
inline ApEstimate a_infinity_proxy(const Weight& w, const std::vector<DyadicCube>& cubes,
                                   double p = kAInfinityProxyP, double tol = kDefaultQuadTol)
{
  return ap_constant(w, p, cubes, tol);
}

}  // namespace sparsemb
