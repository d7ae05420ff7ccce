// Exact geometry of cubes in the shifted dyadic grids D^tau, tau in {0, +-1/3}^d.
//
// A cube of grid tau = s/3 at level k with integer index m is
//     2^{-k} (m + (-1)^k tau + [0,1)^d),
// so every corner coordinate is the rational (3 m_j + (-1)^k s_j) / (3 * 2^k).
// The alternating sign keeps each shifted grid nested across levels (at even
// levels it is the plain translate m + tau). No floating point is involved in
// any membership or nesting decision.
#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "sparsemb/error.hpp"

namespace sparsemb {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline constexpr int kMaxLevel = 62;

/// Sign applied to the grid shift at level k.
constexpr int shift_sign(int level) noexcept { return (level % 2 == 0) ? 1 : -1; }

inline BigInt floor_div(const BigInt& num, const BigInt& den)
{
  BigInt q = num / den;
  if ((num % den != 0) && ((num < 0) != (den < 0))) --q;
  return q;
}

inline BigInt floor_of(const Rational& x)
{
  return floor_div(boost::multiprecision::numerator(x), boost::multiprecision::denominator(x));
}

inline BigInt pow2(int e)
{
  BigInt r = 1;
  r <<= e;
  return r;
}

/// 2^k as an exact rational, k of either sign.
inline Rational pow2_rational(int k)
{
  return k >= 0 ? Rational(pow2(k)) : Rational(BigInt(1), pow2(-k));
}

struct DyadicCube {
  int level = 0;
  std::vector<std::int64_t> index;
  std::vector<int> shift;

  int dim() const noexcept { return static_cast<int>(index.size()); }

  friend bool operator==(const DyadicCube&, const DyadicCube&) = default;
  /// Level-major, then lexicographic index; shift breaks remaining ties.
  friend std::strong_ordering operator<=>(const DyadicCube& a, const DyadicCube& b)
  {
    if (auto c = a.level <=> b.level; c != 0) return c;
    if (auto c = a.index <=> b.index; c != 0) return c;
    return a.shift <=> b.shift;
  }
};

namespace detail {

inline void check_level(int k)
{
  if (k > kMaxLevel || k < -kMaxLevel)
    throw DomainError("dyadic level " + std::to_string(k) + " outside [-62, 62]");
}

inline void check_shift(const std::vector<int>& s)
{
  for (int v : s)
    if (v < -1 || v > 1) throw DomainError("grid shift entries must be -1, 0 or +1");
}

inline void check_same_grid(const DyadicCube& a, const DyadicCube& b)
{
  if (a.dim() != b.dim()) throw DimensionError("cubes of different dimension");
  if (a.shift != b.shift) throw GridMismatchError("cubes belong to different shifted grids");
}

}  // namespace detail

inline DyadicCube make_cube(int k, std::vector<std::int64_t> m, std::vector<int> s, int d)
{
  if (d <= 0) throw DimensionError("dimension must be positive");
  if (static_cast<int>(m.size()) != d || static_cast<int>(s.size()) != d)
    throw DimensionError("index and shift vectors must have length d");
  detail::check_level(k);
  detail::check_shift(s);
  return DyadicCube{k, std::move(m), std::move(s)};
}

/// Cube of the unshifted grid.
inline DyadicCube make_cube(int k, std::vector<std::int64_t> m)
{
  const int d = static_cast<int>(m.size());
  return make_cube(k, std::move(m), std::vector<int>(d, 0), d);
}

/// Numerator of the lower corner over the denominator 3 * 2^k.
inline std::int64_t corner_numerator(const DyadicCube& q, int j)
{
  return 3 * q.index[j] + shift_sign(q.level) * q.shift[j];
}

inline Rational side_length_exact(const DyadicCube& q) { return pow2_rational(-q.level); }

inline double side_length(const DyadicCube& q) { return std::ldexp(1.0, -q.level); }

inline double volume(const DyadicCube& q) { return std::ldexp(1.0, -q.level * q.dim()); }

inline Rational corner(const DyadicCube& q, int j)
{
  return Rational(corner_numerator(q, j)) * pow2_rational(-q.level) / 3;
}

inline std::vector<Rational> corner(const DyadicCube& q)
{
  std::vector<Rational> c;
  c.reserve(q.dim());
  for (int j = 0; j < q.dim(); ++j) c.push_back(corner(q, j));
  return c;
}

inline std::vector<Rational> center(const DyadicCube& q)
{
  std::vector<Rational> c = corner(q);
  const Rational half = pow2_rational(-q.level - 1);
  for (auto& v : c) v += half;
  return c;
}

/// Lower corner in floating point (for quadrature only).
inline double corner_double(const DyadicCube& q, int j)
{
  return std::ldexp(static_cast<double>(static_cast<long double>(corner_numerator(q, j)) / 3.0L), -q.level);
}

inline double center_norm(const DyadicCube& q)
{
  const double h = 0.5 * side_length(q);
  long double s = 0;
  for (int j = 0; j < q.dim(); ++j) {
    const long double c = corner_double(q, j) + h;
    s += c * c;
  }
  return static_cast<double>(std::sqrt(s));
}

inline bool contains_point(const DyadicCube& q, const std::vector<Rational>& x)
{
  if (static_cast<int>(x.size()) != q.dim()) throw DimensionError("point dimension mismatch");
  const Rational side = side_length_exact(q);
  for (int j = 0; j < q.dim(); ++j) {
    const Rational c = corner(q, j);
    if (x[j] < c || x[j] >= c + side) return false;
  }
  return true;
}

inline DyadicCube parent(const DyadicCube& q)
{
  detail::check_level(q.level - 1);
  DyadicCube p{q.level - 1, q.index, q.shift};
  const int sg = shift_sign(q.level - 1);
  for (int j = 0; j < q.dim(); ++j) {
    const std::int64_t t = q.index[j] - sg * q.shift[j];
    p.index[j] = (t >= 0) ? t / 2 : -((-t + 1) / 2);
  }
  return p;
}

/// Index along one axis of the level-`to` ancestor of a level-`from` index.
inline std::int64_t ancestor_index(std::int64_t i, int from, int s, int to)
{
  for (int k = from; k > to; --k) {
    const std::int64_t t = i - shift_sign(k - 1) * s;
    i = (t >= 0) ? t / 2 : -((-t + 1) / 2);
  }
  return i;
}

inline DyadicCube ancestor(const DyadicCube& q, int k)
{
  if (k > q.level) throw DomainError("ancestor level finer than the cube");
  DyadicCube a = q;
  while (a.level > k) a = parent(a);
  return a;
}

/// The 2^d level-(k+1) cubes partitioning q, ordered by binary child code
/// (bit j set means the upper half along axis j).
inline std::vector<DyadicCube> children(const DyadicCube& q)
{
  detail::check_level(q.level + 1);
  const int d = q.dim();
  const int sg = shift_sign(q.level);
  std::vector<DyadicCube> out;
  out.reserve(std::size_t{1} << d);
  for (unsigned code = 0; code < (1u << d); ++code) {
    DyadicCube c{q.level + 1, q.index, q.shift};
    for (int j = 0; j < d; ++j)
      c.index[j] = 2 * q.index[j] + sg * q.shift[j] + ((code >> j) & 1u);
    out.push_back(std::move(c));
  }
  return out;
}

/// B subset of A. Cubes from different shifted grids are incomparable.
inline bool contains_cube(const DyadicCube& a, const DyadicCube& b)
{
  detail::check_same_grid(a, b);
  if (b.level < a.level) return false;
  return ancestor(b, a.level).index == a.index;
}

/// Dyadic cubes of one grid are nested or disjoint.
inline bool intersects(const DyadicCube& a, const DyadicCube& b)
{
  return contains_cube(a, b) || contains_cube(b, a);
}

struct Window {
  int k_min = 0;
  int k_max = 0;
  Rational radius = 1;

  void validate() const
  {
    if (k_min > k_max) throw DomainError("empty window: k_min > k_max");
    if (radius <= 0) throw DomainError("empty window: radius must be positive");
    detail::check_level(k_min);
    detail::check_level(k_max);
  }

  friend bool operator==(const Window&, const Window&) = default;
};

namespace detail {

/// Index range [lo, hi] of level-k cubes along one axis meeting (-R, R).
inline std::pair<std::int64_t, std::int64_t> axis_range(int k, int s, const Rational& radius)
{
  const int sg = shift_sign(k);
  const Rational scaled = 3 * radius * pow2_rational(k);
  // corner < R  <=>  3i + sg s < 3 R 2^k
  const BigInt hi_excl = -floor_of(-(scaled - sg * s) / 3);  // ceil
  // corner + side > -R  <=>  3i + sg s + 3 > -3 R 2^k
  const BigInt lo = floor_of((-scaled - 3 - sg * s) / 3) + 1;
  const BigInt hi = hi_excl - 1;
  if (hi - lo > BigInt(1) << 40) throw DomainError("window too large to enumerate");
  return {lo.convert_to<std::int64_t>(), hi.convert_to<std::int64_t>()};
}

}  // namespace detail

/// All cubes of D^{s/3} with level in [k_min, k_max] meeting [-R, R]^d, ordered
/// by level then lexicographic index.
inline std::vector<DyadicCube> enumerate_grid(const std::vector<int>& s, const Window& w, int d)
{
  if (static_cast<int>(s.size()) != d) throw DimensionError("shift vector length must equal d");
  detail::check_shift(s);
  w.validate();
  std::vector<DyadicCube> out;
  for (int k = w.k_min; k <= w.k_max; ++k) {
    std::vector<std::pair<std::int64_t, std::int64_t>> ranges;
    for (int j = 0; j < d; ++j) ranges.push_back(detail::axis_range(k, s[j], w.radius));
    std::vector<std::int64_t> idx(d);
    for (int j = 0; j < d; ++j) idx[j] = ranges[j].first;
    if (std::any_of(ranges.begin(), ranges.end(), [](auto r) { return r.first > r.second; })) continue;
    while (true) {
      out.push_back(DyadicCube{k, idx, s});
      int j = d - 1;
      while (j >= 0 && idx[j] == ranges[j].second) {
        idx[j] = ranges[j].first;
        --j;
      }
      if (j < 0) break;
      ++idx[j];
    }
  }
  return out;
}

// Literal text form: "tau=<s1,...,sd>;k=<k>;m=<m1,...,md>".

inline std::string to_literal(const DyadicCube& q)
{
  std::ostringstream os;
  os << "tau=";
  for (int j = 0; j < q.dim(); ++j) os << (j ? "," : "") << q.shift[j];
  os << ";k=" << q.level << ";m=";
  for (int j = 0; j < q.dim(); ++j) os << (j ? "," : "") << q.index[j];
  return os.str();
}

namespace detail {

inline std::vector<std::int64_t> parse_int_list(std::string_view text)
{
  std::vector<std::int64_t> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = text.find(',', pos);
    const std::string item(text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      throw ParseError("bad integer '" + item + "'");
    }
    if (used != item.size()) throw ParseError("bad integer '" + item + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace detail

inline DyadicCube parse_cube_literal(std::string_view text)
{
  std::string_view tau, k, m;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t semi = text.find(';', pos);
    if (semi == std::string_view::npos) semi = text.size();
    const std::string_view field = text.substr(pos, semi - pos);
    const std::size_t eq = field.find('=');
    if (eq == std::string_view::npos) throw ParseError("cube literal field without '='");
    const std::string_view key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "tau") tau = val;
    else if (key == "k") k = val;
    else if (key == "m") m = val;
    else throw ParseError("unknown cube literal field '" + std::string(key) + "'");
    pos = semi + 1;
  }
  if (tau.empty() || k.empty() || m.empty()) throw ParseError("cube literal needs tau, k and m");
  const auto s64 = detail::parse_int_list(tau);
  const auto ks = detail::parse_int_list(k);
  if (ks.size() != 1) throw ParseError("cube literal level must be a single integer");
  auto idx = detail::parse_int_list(m);
  std::vector<int> s(s64.begin(), s64.end());
  const int d = static_cast<int>(idx.size());
  return make_cube(static_cast<int>(ks[0]), std::move(idx), std::move(s), d);
}

}  // namespace sparsemb
