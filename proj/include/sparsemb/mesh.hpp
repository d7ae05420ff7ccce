// Finest-level cell meshes over a window, and d-dimensional box sums on them.
#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "sparsemb/dyadic.hpp"

namespace sparsemb {

/// Half-open index box [lo, hi) per axis.
struct IndexBox {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;

  bool empty() const
  {
    for (std::size_t j = 0; j < lo.size(); ++j)
      if (lo[j] >= hi[j]) return true;
    return false;
  }

  std::int64_t size() const
  {
    if (empty()) return 0;
    std::int64_t n = 1;
    for (std::size_t j = 0; j < lo.size(); ++j) n *= hi[j] - lo[j];
    return n;
  }
};

/// Index range along each axis of the level-L cells making up cube q.
inline IndexBox cell_box(const DyadicCube& q, int cell_level)
{
  const int gap = cell_level - q.level;
  if (gap < 0) throw DomainError("cell level coarser than the cube");
  if (gap > 60) throw DomainError("cell level too far below the cube");
  IndexBox box{std::vector<std::int64_t>(q.dim()), std::vector<std::int64_t>(q.dim())};
  const __int128 scale = static_cast<__int128>(1) << gap;
  for (int j = 0; j < q.dim(); ++j) {
    const __int128 num = scale * corner_numerator(q, j) - shift_sign(cell_level) * q.shift[j];
    box.lo[j] = static_cast<std::int64_t>(num / 3);
    box.hi[j] = box.lo[j] + static_cast<std::int64_t>(scale);
  }
  return box;
}

/// A rectangular block of cells of one level of one shifted grid.
class Mesh {
 public:
  Mesh() = default;

  Mesh(int level, std::vector<int> shift, std::vector<std::int64_t> lo, std::vector<std::int64_t> count)
      : level_(level), shift_(std::move(shift)), lo_(std::move(lo)), count_(std::move(count))
  {
    if (shift_.size() != lo_.size() || lo_.size() != count_.size() || lo_.empty())
      throw DimensionError("mesh vectors must share one positive length");
    detail::check_level(level_);
    detail::check_shift(shift_);
    std::size_t n = 1;
    for (auto c : count_) {
      if (c <= 0) throw DomainError("mesh must have at least one cell per axis");
      n *= static_cast<std::size_t>(c);
    }
    if (n > (std::size_t{1} << 27)) throw DomainError("mesh has too many cells");
    size_ = n;
  }

  /// Level-L cells of grid s meeting [-R, R]^d.
  static Mesh from_window(const std::vector<int>& s, const Window& w, int level)
  {
    w.validate();
    if (level < w.k_max) throw DomainError("mesh level coarser than the window's finest level");
    std::vector<std::int64_t> lo, count;
    for (int v : s) {
      const auto [a, b] = detail::axis_range(level, v, w.radius);
      lo.push_back(a);
      count.push_back(b - a + 1);
    }
    return Mesh(level, s, lo, count);
  }

  /// Level-L cells partitioning cube q.
  static Mesh from_cube(const DyadicCube& q, int level)
  {
    const IndexBox b = cell_box(q, level);
    std::vector<std::int64_t> count(q.dim());
    for (int j = 0; j < q.dim(); ++j) count[j] = b.hi[j] - b.lo[j];
    return Mesh(level, q.shift, b.lo, count);
  }

  int dim() const noexcept { return static_cast<int>(lo_.size()); }
  int level() const noexcept { return level_; }
  const std::vector<int>& shift() const noexcept { return shift_; }
  const std::vector<std::int64_t>& lo() const noexcept { return lo_; }
  const std::vector<std::int64_t>& count() const noexcept { return count_; }
  std::size_t size() const noexcept { return size_; }
  double cell_volume() const { return std::ldexp(1.0, -level_ * dim()); }

  IndexBox bounds() const
  {
    IndexBox b{lo_, lo_};
    for (int j = 0; j < dim(); ++j) b.hi[j] += count_[j];
    return b;
  }

  /// Flat index of a cell given its grid index vector (dimension 0 slowest).
  std::size_t flat(const std::vector<std::int64_t>& idx) const
  {
    std::size_t f = 0;
    for (int j = 0; j < dim(); ++j) f = f * count_[j] + static_cast<std::size_t>(idx[j] - lo_[j]);
    return f;
  }

  std::vector<std::int64_t> unflat(std::size_t f) const
  {
    std::vector<std::int64_t> idx(dim());
    for (int j = dim() - 1; j >= 0; --j) {
      idx[j] = lo_[j] + static_cast<std::int64_t>(f % count_[j]);
      f /= count_[j];
    }
    return idx;
  }

  DyadicCube cell(std::size_t f) const { return DyadicCube{level_, unflat(f), shift_}; }

  bool contains_index(const std::vector<std::int64_t>& idx) const
  {
    for (int j = 0; j < dim(); ++j)
      if (idx[j] < lo_[j] || idx[j] >= lo_[j] + count_[j]) return false;
    return true;
  }

  void check_cube(const DyadicCube& q) const
  {
    if (q.dim() != dim()) throw DimensionError("cube and mesh dimensions differ");
    if (q.shift != shift_) throw GridMismatchError("cube and mesh belong to different shifted grids");
    if (q.level > level_) throw DomainError("cube finer than the mesh");
  }

  /// Cells of q that lie in the mesh.
  IndexBox clip(const DyadicCube& q) const
  {
    check_cube(q);
    IndexBox b = cell_box(q, level_);
    for (int j = 0; j < dim(); ++j) {
      b.lo[j] = std::max(b.lo[j], lo_[j]);
      b.hi[j] = std::min(b.hi[j], lo_[j] + count_[j]);
    }
    return b;
  }

  /// Whether every cell of q lies in the mesh.
  bool covers(const DyadicCube& q) const
  {
    check_cube(q);
    const IndexBox b = cell_box(q, level_);
    for (int j = 0; j < dim(); ++j)
      if (b.lo[j] < lo_[j] || b.hi[j] > lo_[j] + count_[j]) return false;
    return true;
  }

  friend bool operator==(const Mesh&, const Mesh&) = default;

 private:
  int level_ = 0;
  std::vector<int> shift_;
  std::vector<std::int64_t> lo_;
  std::vector<std::int64_t> count_;
  std::size_t size_ = 0;
};

/// Visit every flat index of an index box within the mesh, row-major.
template <typename Fn>
void for_each_cell(const Mesh& mesh, const IndexBox& box, Fn&& fn)
{
  if (box.empty()) return;
  const int d = mesh.dim();
  std::vector<std::int64_t> idx = box.lo;
  const std::int64_t inner = box.hi[d - 1] - box.lo[d - 1];
  while (true) {
    std::size_t base = mesh.flat(idx);
    for (std::int64_t t = 0; t < inner; ++t) fn(base + static_cast<std::size_t>(t));
    int j = d - 2;
    while (j >= 0 && ++idx[j] == box.hi[j]) {
      idx[j] = box.lo[j];
      --j;
    }
    if (j < 0) break;
  }
}

/// Summed-volume table: sums of cell values over any index box in O(2^d).
class BoxSum {
 public:
  BoxSum(const Mesh& mesh, const std::vector<double>& values) : lo_(mesh.lo())
  {
    if (values.size() != mesh.size()) throw DimensionError("values do not match the mesh");
    const int d = mesh.dim();
    ext_.resize(d);
    stride_.resize(d);
    std::size_t n = 1;
    for (int j = d - 1; j >= 0; --j) {
      ext_[j] = static_cast<std::size_t>(mesh.count()[j]) + 1;
      stride_[j] = n;
      n *= ext_[j];
    }
    table_.assign(n, 0.0L);
    // Scatter values at offset +1 on every axis, then prefix-sum axis by axis.
    for (std::size_t f = 0; f < values.size(); ++f) {
      std::size_t rem = f, pos = 0;
      for (int j = d - 1; j >= 0; --j) {
        const std::size_t c = rem % mesh.count()[j];
        rem /= mesh.count()[j];
        pos += (c + 1) * stride_[j];
      }
      table_[pos] = values[f];
    }
    for (int j = 0; j < d; ++j) {
      for (std::size_t p = 0; p < n; ++p) {
        const std::size_t c = (p / stride_[j]) % ext_[j];
        if (c > 0) table_[p] += table_[p - stride_[j]];
      }
    }
  }

  long double sum(const IndexBox& box) const
  {
    if (box.empty()) return 0.0L;
    const int d = static_cast<int>(lo_.size());
    long double total = 0.0L;
    for (unsigned code = 0; code < (1u << d); ++code) {
      std::size_t pos = 0;
      int parity = 0;
      for (int j = 0; j < d; ++j) {
        const bool upper = (code >> j) & 1u;
        const std::int64_t c = (upper ? box.hi[j] : box.lo[j]) - lo_[j];
        pos += static_cast<std::size_t>(c) * stride_[j];
        if (!upper) ++parity;
      }
      total += (parity % 2 == 0) ? table_[pos] : -table_[pos];
    }
    return total;
  }

 private:
  std::vector<std::int64_t> lo_;
  std::vector<std::size_t> ext_;
  std::vector<std::size_t> stride_;
  std::vector<long double> table_;
};

/// Piecewise-constant function on the cells of a mesh.
struct MeshFunction {
  Mesh mesh;
  std::vector<double> values;

  MeshFunction() = default;
  explicit MeshFunction(Mesh m, double fill = 0.0) : mesh(std::move(m)), values(mesh.size(), fill) {}
  MeshFunction(Mesh m, std::vector<double> v) : mesh(std::move(m)), values(std::move(v))
  {
    if (values.size() != mesh.size()) throw DimensionError("values do not match the mesh");
  }

  friend bool operator==(const MeshFunction&, const MeshFunction&) = default;
};

namespace detail {

template <typename T>
std::string join(const std::vector<T>& v)
{
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace detail

/// CSV form: a "# mesh level=..; tau=..; lo=..; count=.." header line, then
/// one "i1,...,id,value" row per nonzero cell (cells not listed are 0).
inline void write_csv(std::ostream& os, const MeshFunction& f)
{
  const Mesh& m = f.mesh;
  os << "# mesh level=" << m.level() << "; tau=" << detail::join(m.shift()) << "; lo=" << detail::join(m.lo())
     << "; count=" << detail::join(m.count()) << "\n";
  os << std::setprecision(17);
  for (std::size_t c = 0; c < f.values.size(); ++c) {
    if (f.values[c] == 0.0) continue;
    for (auto i : m.unflat(c)) os << i << ",";
    os << f.values[c] << "\n";
  }
}

inline MeshFunction read_csv(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line) || line.rfind("# mesh ", 0) != 0) throw ParseError("CSV must start with a '# mesh' header");
  int level = 0;
  std::vector<int> shift;
  std::vector<std::int64_t> lo, count;
  bool have[4] = {false, false, false, false};
  std::istringstream hs(line.substr(7));
  std::string field;
  while (std::getline(hs, field, ';')) {
    const auto b = field.find_first_not_of(' ');
    if (b == std::string::npos) continue;
    field = field.substr(b);
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ParseError("bad mesh header field '" + field + "'");
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    const auto ints = detail::parse_int_list(val);
    if (key == "level") { level = static_cast<int>(ints.at(0)); have[0] = true; }
    else if (key == "tau") { shift.assign(ints.begin(), ints.end()); have[1] = true; }
    else if (key == "lo") { lo = ints; have[2] = true; }
    else if (key == "count") { count = ints; have[3] = true; }
    else throw ParseError("unknown mesh header field '" + key + "'");
  }
  for (bool h : have)
    if (!h) throw ParseError("mesh header needs level, tau, lo and count");
  MeshFunction f(Mesh(level, shift, lo, count));
  const int d = f.mesh.dim();
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> parts;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) parts.push_back(tok);
    if (static_cast<int>(parts.size()) != d + 1) throw ParseError("CSV row has wrong arity: '" + line + "'");
    std::vector<std::int64_t> idx(d);
    try {
      for (int j = 0; j < d; ++j) idx[j] = std::stoll(parts[j]);
      const double v = std::stod(parts[d]);
      if (!f.mesh.contains_index(idx)) throw ParseError("CSV cell outside the mesh: '" + line + "'");
      f.values[f.mesh.flat(idx)] = v;
    } catch (const std::invalid_argument&) {
      throw ParseError("bad CSV row '" + line + "'");
    } catch (const std::out_of_range&) {
      throw ParseError("bad CSV row '" + line + "'");
    }
  }
  return f;
}

inline MeshFunction read_csv_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return read_csv(in);
}

inline void write_csv_file(const std::string& path, const MeshFunction& f)
{
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_csv(out, f);
}

}  // namespace sparsemb
