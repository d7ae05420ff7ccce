// Sparse families, kernel maps, the multilinear form
//     sum_S K(S) prod_i int_S f_i dsigma_i,
// its dual operator, and the weighted dyadic maximal operator.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "sparsemb/dyadic.hpp"
#include "sparsemb/mesh.hpp"
#include "sparsemb/weights.hpp"

namespace sparsemb {

/// A finite cube family of one grid with exceptional sets E(S) subset S.
///
/// Each E(S) is an explicit union of pairwise-disjoint dyadic cubes of the same
/// grid, none finer than `mesh_level`; this is the finest-cell union stored in
/// compressed form.
struct SparseFamily {
  int dim = 1;
  std::vector<int> shift;
  int mesh_level = 0;
  std::vector<DyadicCube> cubes;
  std::vector<std::vector<DyadicCube>> esets;
  double eta = 0;

  std::size_t size() const noexcept { return cubes.size(); }

  double eset_volume(std::size_t i) const
  {
    long double v = 0;
    for (const auto& piece : esets[i]) v += volume(piece);
    return static_cast<double>(v);
  }

  double eset_measure(const Weight& w, std::size_t i, double tol = kDefaultQuadTol) const
  {
    double v = 0;
    for (const auto& piece : esets[i]) v += integrate(w, piece, tol);
    return v;
  }
};

namespace detail {

struct CubeHash {
  std::size_t operator()(const DyadicCube& q) const noexcept
  {
    std::size_t h = std::hash<int>()(q.level);
    for (auto v : q.index) h = h * 1000003u ^ std::hash<std::int64_t>()(v);
    return h;
  }
};

/// q minus the union of the given strict subcubes, as disjoint dyadic pieces.
inline void subtract(const DyadicCube& q, const std::vector<DyadicCube>& holes, std::vector<DyadicCube>& out)
{
  if (holes.empty()) {
    out.push_back(q);
    return;
  }
  for (const auto& h : holes)
    if (h == q) return;
  for (auto& child : children(q)) {
    std::vector<DyadicCube> inside;
    for (const auto& h : holes)
      if (ancestor(h, child.level) == child) inside.push_back(h);
    subtract(child, inside, out);
  }
}

}  // namespace detail

/// E(S) := S minus every strictly smaller family member, eta := min |E(S)|/|S|.
/// Duplicate cubes are dropped; the first-occurrence order is kept.
inline SparseFamily assign_esets(const std::vector<DyadicCube>& cubes, int mesh_level)
{
  if (cubes.empty()) throw DomainError("cannot build a sparse family from no cubes");
  SparseFamily fam;
  fam.dim = cubes.front().dim();
  fam.shift = cubes.front().shift;
  fam.mesh_level = mesh_level;
  std::set<DyadicCube> seen;
  for (const auto& q : cubes) {
    if (q.dim() != fam.dim) throw DimensionError("family cubes of different dimension");
    if (q.shift != fam.shift) throw GridMismatchError("family cubes from different shifted grids");
    if (q.level > mesh_level) throw DomainError("mesh coarser than a family cube");
    if (seen.insert(q).second) fam.cubes.push_back(q);
  }
  const int min_level = seen.begin()->level;

  // Nearest strict ancestor inside the family, for every member.
  std::map<DyadicCube, std::vector<DyadicCube>> holes;
  for (const auto& q : fam.cubes) {
    DyadicCube a = q;
    while (a.level > min_level) {
      a = parent(a);
      if (seen.count(a)) {
        holes[a].push_back(q);
        break;
      }
    }
  }

  fam.esets.resize(fam.cubes.size());
  fam.eta = 1.0;
  for (std::size_t i = 0; i < fam.cubes.size(); ++i) {
    const auto it = holes.find(fam.cubes[i]);
    if (it == holes.end()) fam.esets[i] = {fam.cubes[i]};
    else detail::subtract(fam.cubes[i], it->second, fam.esets[i]);
    fam.eta = std::min(fam.eta, fam.eset_volume(i) / volume(fam.cubes[i]));
  }
  return fam;
}

struct SparseCheck {
  bool ok = true;
  double eta_measured = 1.0;
  std::string reason;
  /// Offending cube (E not inside S, or |E| < claim |S|).
  std::optional<std::size_t> cube;
  /// Two cubes whose E-sets overlap (equal indices: overlapping pieces of one E).
  std::optional<std::pair<std::size_t, std::size_t>> overlap;
};

/// Checks E(S) subset S, pairwise disjointness, and |E(S)| >= eta_claim |S|.
inline SparseCheck verify_sparse(const SparseFamily& fam, double eta_claim)
{
  SparseCheck res;
  if (fam.esets.size() != fam.cubes.size()) {
    res.ok = false;
    res.reason = "E-set list does not match the cube list";
    return res;
  }
  // Containment and measure.
  for (std::size_t i = 0; i < fam.cubes.size(); ++i) {
    for (const auto& piece : fam.esets[i]) {
      if (piece.shift != fam.cubes[i].shift || !contains_cube(fam.cubes[i], piece)) {
        res.ok = false;
        res.reason = "E-set not contained in its cube";
        res.cube = i;
        return res;
      }
    }
    res.eta_measured = std::min(res.eta_measured, fam.eset_volume(i) / volume(fam.cubes[i]));
  }
  // Disjointness: walk ancestors of each piece against the pieces seen so far.
  std::vector<std::pair<DyadicCube, std::size_t>> pieces;
  for (std::size_t i = 0; i < fam.esets.size(); ++i)
    for (const auto& piece : fam.esets[i]) pieces.emplace_back(piece, i);
  std::sort(pieces.begin(), pieces.end(),
            [](const auto& a, const auto& b) { return a.first.level < b.first.level; });
  std::unordered_map<DyadicCube, std::size_t, detail::CubeHash> owner;
  const int min_level = pieces.empty() ? 0 : pieces.front().first.level;
  for (const auto& [piece, i] : pieces) {
    DyadicCube a = piece;
    while (true) {
      if (auto it = owner.find(a); it != owner.end()) {
        res.ok = false;
        res.reason = "E-sets overlap";
        res.overlap = std::make_pair(std::min(it->second, i), std::max(it->second, i));
        return res;
      }
      if (a.level <= min_level) break;
      a = parent(a);
    }
    owner.emplace(piece, i);
  }
  if (res.eta_measured < eta_claim) {
    res.ok = false;
    res.reason = "sparseness below the claimed eta";
    for (std::size_t i = 0; i < fam.cubes.size(); ++i)
      if (fam.eset_volume(i) < eta_claim * volume(fam.cubes[i])) {
        res.cube = i;
        break;
      }
  }
  return res;
}

// ---- kernel maps -------------------------------------------------------------

namespace kernel_kind {

/// K(S) = l_S^{alpha - (n-1) d}.
struct Riesz {
  double alpha = 0;
  int n = 2;
  int d = 1;
  friend bool operator==(const Riesz&, const Riesz&) = default;
};

/// K(S) = min((lambda l_S)^alpha, 1) / (lambda^alpha |S|^{n-1}).
struct Bessel {
  double alpha = 0;
  double lambda = 1;
  int n = 2;
  int d = 1;
  friend bool operator==(const Bessel&, const Bessel&) = default;
};

struct Tabulated {
  std::map<DyadicCube, double> values;
  std::string source;
  friend bool operator==(const Tabulated& a, const Tabulated& b) { return a.values == b.values; }
};

}  // namespace kernel_kind

class KernelMap {
 public:
  using Rep = std::variant<kernel_kind::Riesz, kernel_kind::Bessel, kernel_kind::Tabulated>;

  static KernelMap riesz(double alpha, int n, int d)
  {
    if (n < 2) throw DomainError("kernel needs n >= 2");
    if (!(alpha > 0 && alpha < (n - 1) * d)) throw DomainError("Riesz-type kernel needs 0 < alpha < (n-1)d");
    return KernelMap(kernel_kind::Riesz{alpha, n, d});
  }

  static KernelMap bessel(double alpha, double lambda, int n, int d)
  {
    if (n < 2) throw DomainError("kernel needs n >= 2");
    if (!(alpha > 0 && alpha < d)) throw DomainError("Bessel-type kernel needs 0 < alpha < d");
    if (!(lambda > 0) || !std::isfinite(lambda)) throw DomainError("Bessel-type kernel needs lambda > 0");
    return KernelMap(kernel_kind::Bessel{alpha, lambda, n, d});
  }

  static KernelMap tabulated(std::map<DyadicCube, double> values, std::string source = {})
  {
    for (const auto& [q, v] : values)
      if (!(v >= 0) || !std::isfinite(v)) throw DomainError("tabulated kernel values must be finite and >= 0");
    return KernelMap(kernel_kind::Tabulated{std::move(values), std::move(source)});
  }

  const Rep& rep() const noexcept { return rep_; }

  /// Multilinearity the kernel was built for, if it carries one.
  std::optional<int> arity() const
  {
    if (auto* r = std::get_if<kernel_kind::Riesz>(&rep_)) return r->n;
    if (auto* b = std::get_if<kernel_kind::Bessel>(&rep_)) return b->n;
    return std::nullopt;
  }

  /// Same kernel with another lambda (Bessel-type only).
  KernelMap with_lambda(double lambda) const
  {
    const auto* b = std::get_if<kernel_kind::Bessel>(&rep_);
    if (!b) throw DomainError("with_lambda needs a Bessel-type kernel");
    return bessel(b->alpha, lambda, b->n, b->d);
  }

  friend bool operator==(const KernelMap&, const KernelMap&) = default;

 private:
  explicit KernelMap(Rep r) : rep_(std::move(r)) {}
  Rep rep_;
};

inline double kernel_value(const KernelMap& k, const DyadicCube& s)
{
  return std::visit(
      [&](const auto& kk) -> double {
        using K = std::decay_t<decltype(kk)>;
        if constexpr (std::is_same_v<K, kernel_kind::Riesz>) {
          // l_S = 2^{-k} exactly; only the power is floating point.
          return std::exp2(-static_cast<double>(s.level) * (kk.alpha - (kk.n - 1) * kk.d));
        } else if constexpr (std::is_same_v<K, kernel_kind::Bessel>) {
          const double ell = side_length(s);
          const double head = std::min(std::pow(kk.lambda * ell, kk.alpha), 1.0);
          return head / (std::pow(kk.lambda, kk.alpha) * std::exp2(-static_cast<double>(s.level) * s.dim() * (kk.n - 1)));
        } else {
          auto it = kk.values.find(s);
          if (it == kk.values.end()) throw DomainError("tabulated kernel has no value for " + to_literal(s));
          return it->second;
        }
      },
      k.rep());
}

inline KernelMap parse_kernel(const std::string& text, int n, int d)
{
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ParseError("unknown kernel literal '" + text + "'");
  const std::string head = text.substr(0, colon), body = text.substr(colon + 1);
  if (head == "riesz" || head == "bessel") {
    auto kv = detail::parse_kv(body);
    if (!kv.count("alpha")) throw ParseError("kernel needs alpha=");
    const double alpha = detail::parse_double(kv["alpha"]);
    if (head == "riesz") {
      if (kv.size() != 1) throw ParseError("riesz kernel takes only alpha=");
      return KernelMap::riesz(alpha, n, d);
    }
    if (!kv.count("lambda") || kv.size() != 2) throw ParseError("bessel kernel needs alpha= and lambda=");
    return KernelMap::bessel(alpha, detail::parse_double(kv["lambda"]), n, d);
  }
  if (head == "tabulated") {
    std::ifstream in(body);
    if (!in) throw ParseError("cannot open '" + body + "'");
    std::map<DyadicCube, double> values;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      std::string lit, val;
      if (!(ls >> lit >> val)) throw ParseError("bad tabulated kernel row '" + line + "'");
      values[parse_cube_literal(lit)] = detail::parse_double(val);
    }
    return KernelMap::tabulated(std::move(values), body);
  }
  throw ParseError("unknown kernel literal '" + text + "'");
}

inline std::string to_literal(const KernelMap& k)
{
  return std::visit(
      [](const auto& kk) -> std::string {
        using K = std::decay_t<decltype(kk)>;
        if constexpr (std::is_same_v<K, kernel_kind::Riesz>) return "riesz:alpha=" + detail::format_double(kk.alpha);
        else if constexpr (std::is_same_v<K, kernel_kind::Bessel>)
          return "bessel:alpha=" + detail::format_double(kk.alpha) + ",lambda=" + detail::format_double(kk.lambda);
        else return "tabulated:" + kk.source;
      },
      k.rep());
}

// ---- test functions and the form ---------------------------------------------

/// Nonnegative, finitely supported cell values on a mesh.
using TestFunction = MeshFunction;

inline void check_test_function(const TestFunction& f)
{
  for (double v : f.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw DomainError("test functions must be finite and nonnegative");
}

/// Precomputed evaluation context for one family, kernel, weight list and mesh.
class SparseForm {
 public:
  SparseForm(const SparseFamily& fam, const KernelMap& kernel, std::vector<Weight> sigmas, Mesh mesh,
             double tol = kDefaultQuadTol)
      : mesh_(std::move(mesh)), sigmas_(std::move(sigmas))
  {
    if (const auto n = kernel.arity(); n && *n != static_cast<int>(sigmas_.size()) &&
                                       *n != static_cast<int>(sigmas_.size()) + 1)
      throw DimensionError("kernel arity does not match the number of weights");
    if (fam.dim != mesh_.dim()) throw DimensionError("family and mesh dimensions differ");
    if (fam.shift != mesh_.shift()) throw GridMismatchError("family and mesh belong to different shifted grids");
    for (const auto& s : fam.cubes) {
      blocks_.push_back(mesh_.clip(s));
      kernel_.push_back(kernel_value(kernel, s));
    }
    for (const auto& w : sigmas_) measures_.push_back(cell_measures(w, mesh_, tol));
  }

  const Mesh& mesh() const noexcept { return mesh_; }
  std::size_t slots() const noexcept { return sigmas_.size(); }
  std::size_t family_size() const noexcept { return blocks_.size(); }
  const std::vector<double>& measures(std::size_t slot) const { return measures_.at(slot); }
  const std::vector<double>& kernel_values() const noexcept { return kernel_; }
  const IndexBox& block(std::size_t s) const { return blocks_.at(s); }

  /// int_S f dsigma_slot for every family cube S.
  std::vector<double> cube_integrals(std::size_t slot, const std::vector<double>& f) const
  {
    check_values(f);
    const auto& mu = measures_.at(slot);
    std::vector<double> prod(f.size());
    for (std::size_t c = 0; c < f.size(); ++c) prod[c] = f[c] == 0.0 ? 0.0 : f[c] * mu[c];
    const BoxSum sums(mesh_, prod);
    std::vector<double> out(blocks_.size());
    for (std::size_t s = 0; s < blocks_.size(); ++s)
      out[s] = std::max(0.0, static_cast<double>(sums.sum(blocks_[s])));
    return out;
  }

  /// sum_S K(S) prod_i int_S f_i dsigma_i.
  double form(const std::vector<const std::vector<double>*>& fs) const
  {
    if (fs.size() != slots()) throw DimensionError("one function per weight is required");
    std::vector<std::vector<double>> ints;
    for (std::size_t i = 0; i < fs.size(); ++i) ints.push_back(cube_integrals(i, *fs[i]));
    long double total = 0;
    for (std::size_t s = 0; s < blocks_.size(); ++s) {
      long double term = kernel_[s];
      for (const auto& v : ints) term *= v[s];
      total += term;
    }
    return static_cast<double>(total);
  }

  /// Cell values of sum_S K(S) prod_{j != skip} int_S f_j dsigma_j 1_S.
  std::vector<double> apply(std::size_t skip, const std::vector<const std::vector<double>*>& fs) const
  {
    if (fs.size() != slots()) throw DimensionError("one function per weight is required");
    std::vector<double> coef(kernel_);
    for (std::size_t j = 0; j < fs.size(); ++j) {
      if (j == skip || fs[j] == nullptr) continue;
      const auto v = cube_integrals(j, *fs[j]);
      for (std::size_t s = 0; s < coef.size(); ++s) coef[s] *= v[s];
    }
    std::vector<long double> acc(mesh_.size(), 0.0L);
    for (std::size_t s = 0; s < blocks_.size(); ++s) {
      if (coef[s] == 0.0) continue;
      const long double c = coef[s];
      for_each_cell(mesh_, blocks_[s], [&](std::size_t cell) { acc[cell] += c; });
    }
    return std::vector<double>(acc.begin(), acc.end());
  }

  /// (sum_cells f^p sigma(cell))^{1/p}.
  double norm(std::size_t slot, const std::vector<double>& f, double p) const
  {
    check_values(f);
    const auto& mu = measures_.at(slot);
    long double s = 0;
    for (std::size_t c = 0; c < f.size(); ++c)
      if (f[c] != 0.0) s += std::pow(static_cast<long double>(f[c]), p) * mu[c];
    return static_cast<double>(std::pow(s, 1.0L / p));
  }

 private:
  void check_values(const std::vector<double>& f) const
  {
    if (f.size() != mesh_.size()) throw DimensionError("function does not live on the form's mesh");
  }

  Mesh mesh_;
  std::vector<Weight> sigmas_;
  std::vector<IndexBox> blocks_;
  std::vector<double> kernel_;
  std::vector<std::vector<double>> measures_;
};

namespace detail {

inline const Mesh& common_mesh(const std::vector<TestFunction>& f)
{
  if (f.empty()) throw DimensionError("at least one test function is required");
  for (const auto& g : f) {
    if (!(g.mesh == f.front().mesh)) throw DomainError("test functions live on different windows");
    check_test_function(g);
  }
  return f.front().mesh;
}

}  // namespace detail

inline double multilinear_form(const SparseFamily& fam, const KernelMap& k, const std::vector<Weight>& sigmas,
                               const std::vector<TestFunction>& f)
{
  if (sigmas.size() != f.size()) throw DimensionError("one weight per test function is required");
  const SparseForm form(fam, k, sigmas, detail::common_mesh(f));
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& g : f) ptrs.push_back(&g.values);
  return form.form(ptrs);
}

/// The (n-1)-linear operator A_{S,K}[f_1 sigma_1, ..., f_{n-1} sigma_{n-1}] on f's mesh.
inline TestFunction sparse_operator_apply(const SparseFamily& fam, const KernelMap& k,
                                          const std::vector<Weight>& sigmas, const std::vector<TestFunction>& f)
{
  if (sigmas.size() != f.size()) throw DimensionError("one weight per test function is required");
  const Mesh& mesh = detail::common_mesh(f);
  // A dummy last slot (Lebesgue) carries the output; it is skipped.
  std::vector<Weight> all(sigmas);
  all.push_back(Weight::lebesgue());
  const SparseForm form(fam, k, all, mesh);
  std::vector<const std::vector<double>*> ptrs;
  for (const auto& g : f) ptrs.push_back(&g.values);
  ptrs.push_back(nullptr);
  return TestFunction(mesh, form.apply(all.size() - 1, ptrs));
}

/// M_sigma f(x) = max over dyadic Q containing x, k_min <= level(Q) <= mesh
/// level, Q entirely inside the mesh, of sigma(Q)^{-1} int_Q f dsigma.
inline TestFunction weighted_maximal(const Weight& sigma, const TestFunction& f, int k_min,
                                     double tol = kDefaultQuadTol)
{
  check_test_function(f);
  const Mesh& mesh = f.mesh;
  const int d = mesh.dim();
  const auto mu = cell_measures(sigma, mesh, tol);
  std::vector<double> fm(mesh.size());
  for (std::size_t c = 0; c < fm.size(); ++c) fm[c] = f.values[c] * mu[c];
  const BoxSum num(mesh, fm), den(mesh, mu);
  TestFunction out(mesh, 0.0);
  for (int k = mesh.level(); k >= k_min; --k) {
    std::vector<std::int64_t> lo(d), hi(d);
    for (int j = 0; j < d; ++j) {
      lo[j] = ancestor_index(mesh.lo()[j], mesh.level(), mesh.shift()[j], k);
      hi[j] = ancestor_index(mesh.lo()[j] + mesh.count()[j] - 1, mesh.level(), mesh.shift()[j], k);
    }
    std::vector<std::int64_t> idx = lo;
    bool any = false;
    while (true) {
      const DyadicCube q{k, idx, mesh.shift()};
      if (mesh.covers(q)) {
        any = true;
        const IndexBox b = cell_box(q, mesh.level());
        const long double mass = den.sum(b);
        if (mass > 0) {
          const double avg = static_cast<double>(num.sum(b) / mass);
          for_each_cell(mesh, b, [&](std::size_t c) { out.values[c] = std::max(out.values[c], avg); });
        }
      }
      int j = d - 1;
      while (j >= 0 && idx[j] == hi[j]) {
        idx[j] = lo[j];
        --j;
      }
      if (j < 0) break;
      ++idx[j];
    }
    if (!any) break;  // coarser cubes cannot fit either
  }
  return out;
}

/// sup_S sigma(S) / sigma(E(S)); +inf when some E(S) is sigma-null but S is not.
inline double eset_measure_ratio(const Weight& sigma, const SparseFamily& fam, double tol = kDefaultQuadTol)
{
  double best = 1.0;
  for (std::size_t i = 0; i < fam.size(); ++i) {
    const double whole = integrate(sigma, fam.cubes[i], tol);
    if (whole == 0.0) continue;
    const double e = fam.eset_measure(sigma, i, tol);
    if (e == 0.0) return kInf;
    best = std::max(best, whole / e);
  }
  return best;
}

// ---- family file -------------------------------------------------------------
//
//   eta=<eta>; tau=<s1,...,sd>; mesh=<level>
//   <cube literal> E=[a1:b1,...,ad:bd] [..] ...
//
// Each bracket is one E-set piece as half-open cell index ranges at the mesh level.

inline std::string serialize_family(const SparseFamily& fam)
{
  std::ostringstream os;
  os << "eta=" << detail::format_double(fam.eta) << "; tau=" << detail::join(fam.shift) << "; mesh=" << fam.mesh_level
     << "\n";
  for (std::size_t i = 0; i < fam.size(); ++i) {
    os << to_literal(fam.cubes[i]) << " E=";
    for (std::size_t p = 0; p < fam.esets[i].size(); ++p) {
      const IndexBox b = cell_box(fam.esets[i][p], fam.mesh_level);
      os << (p ? " " : "") << "[";
      for (int j = 0; j < fam.dim; ++j) os << (j ? "," : "") << b.lo[j] << ":" << b.hi[j];
      os << "]";
    }
    os << "\n";
  }
  return os.str();
}

namespace detail {

inline DyadicCube cube_from_cell_box(const IndexBox& b, int mesh_level, const std::vector<int>& shift)
{
  const int d = static_cast<int>(shift.size());
  const std::int64_t n = b.hi[0] - b.lo[0];
  if (n <= 0 || (n & (n - 1)) != 0) throw ParseError("E-set piece side is not a power of two");
  int gap = 0;
  while ((std::int64_t{1} << gap) < n) ++gap;
  const int k = mesh_level - gap;
  std::vector<std::int64_t> m(d);
  for (int j = 0; j < d; ++j) {
    if (b.hi[j] - b.lo[j] != n) throw ParseError("E-set piece is not a cube");
    // lo = (2^gap (3m + sg_k s) - sg_L s) / 3
    const __int128 num = 3 * static_cast<__int128>(b.lo[j]) + shift_sign(mesh_level) * shift[j];
    if (num % (static_cast<__int128>(1) << gap) != 0) throw ParseError("E-set piece is not grid aligned");
    const __int128 t = num / (static_cast<__int128>(1) << gap) - shift_sign(k) * shift[j];
    if (t % 3 != 0) throw ParseError("E-set piece is not grid aligned");
    m[j] = static_cast<std::int64_t>(t / 3);
  }
  return make_cube(k, m, shift, d);
}

}  // namespace detail

inline SparseFamily parse_family(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line)) throw ParseError("empty family file");
  SparseFamily fam;
  bool have_eta = false, have_tau = false, have_mesh = false;
  {
    std::istringstream hs(line);
    std::string field;
    while (std::getline(hs, field, ';')) {
      const auto b = field.find_first_not_of(' ');
      if (b == std::string::npos) continue;
      field = field.substr(b);
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ParseError("bad family header field '" + field + "'");
      const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      if (key == "eta") { fam.eta = detail::parse_double(val); have_eta = true; }
      else if (key == "tau") {
        const auto s = detail::parse_int_list(val);
        fam.shift.assign(s.begin(), s.end());
        have_tau = true;
      } else if (key == "mesh") { fam.mesh_level = static_cast<int>(detail::parse_int_list(val).at(0)); have_mesh = true; }
      else throw ParseError("unknown family header field '" + key + "'");
    }
  }
  if (!have_eta || !have_tau || !have_mesh) throw ParseError("family header needs eta, tau and mesh");
  fam.dim = static_cast<int>(fam.shift.size());
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto e = line.find(" E=");
    if (e == std::string::npos) throw ParseError("family line without E-set: '" + line + "'");
    DyadicCube q = parse_cube_literal(line.substr(0, e));
    if (q.shift != fam.shift) throw GridMismatchError("family cube from another grid");
    std::vector<DyadicCube> pieces;
    std::string rest = line.substr(e + 3);
    std::size_t pos = 0;
    while ((pos = rest.find('[', pos)) != std::string::npos) {
      const auto close = rest.find(']', pos);
      if (close == std::string::npos) throw ParseError("unterminated E-set piece");
      std::istringstream ps(rest.substr(pos + 1, close - pos - 1));
      std::string axis;
      IndexBox b;
      while (std::getline(ps, axis, ',')) {
        const auto colon = axis.find(':');
        if (colon == std::string::npos) throw ParseError("bad E-set range '" + axis + "'");
        b.lo.push_back(std::stoll(axis.substr(0, colon)));
        b.hi.push_back(std::stoll(axis.substr(colon + 1)));
      }
      if (static_cast<int>(b.lo.size()) != fam.dim) throw ParseError("E-set piece dimension mismatch");
      pieces.push_back(detail::cube_from_cell_box(b, fam.mesh_level, fam.shift));
      pos = close + 1;
    }
    fam.cubes.push_back(std::move(q));
    fam.esets.push_back(std::move(pieces));
  }
  return fam;
}

inline SparseFamily parse_family(const std::string& text)
{
  std::istringstream is(text);
  return parse_family(is);
}

/// FNV-1a over the serialized family.
inline std::uint64_t fnv1a(std::string_view text)
{
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string family_hash(const SparseFamily& fam)
{
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(serialize_family(fam));
  return os.str();
}

}  // namespace sparsemb
