#include <gtest/gtest.h>

#include <sstream>

#include "gen.hpp"
#include "sparsemb/mesh.hpp"

using namespace sparsemb;

TEST(Mesh, FromWindow)
{
  const Mesh m = Mesh::from_window({0}, Window{0, 2, 1}, 3);
  EXPECT_EQ(m.level(), 3);
  EXPECT_EQ(m.lo(), (std::vector<std::int64_t>{-8}));
  EXPECT_EQ(m.count(), (std::vector<std::int64_t>{16}));
  EXPECT_DOUBLE_EQ(m.cell_volume(), 0.125);
  EXPECT_THROW(Mesh::from_window({0}, Window{0, 4, 1}, 3), DomainError);
}

TEST(Mesh, FlatRoundTrip)
{
  const Mesh m = Mesh::from_window({1, -1}, Window{0, 1, 2}, 3);
  for (std::size_t f = 0; f < m.size(); ++f) {
    EXPECT_EQ(m.flat(m.unflat(f)), f);
    EXPECT_EQ(m.cell(f).level, 3);
  }
}

TEST(Mesh, CellBoxOfCube)
{
  const auto q = make_cube(1, {1});
  const IndexBox b = cell_box(q, 4);
  EXPECT_EQ(b.lo, (std::vector<std::int64_t>{8}));
  EXPECT_EQ(b.hi, (std::vector<std::int64_t>{16}));
  EXPECT_EQ(b.size(), 8);
}

// Each cell's ancestor at the cube level must be the cube; the box holds exactly those cells.
TEST(Property, CellBoxMatchesAncestors)
{
  gen::Rng rng(21);
  for (int t = 0; t < 200; ++t) {
    const int d = gen::uniform_int(rng, 1, 2);
    const auto s = gen::shift(rng, d);
    const auto q = gen::cube(rng, d, -3, 3, 3, s);
    const int L = q.level + gen::uniform_int(rng, 0, 3);
    const Mesh m = Mesh::from_cube(parent(parent(q)), L);
    const IndexBox b = m.clip(q);
    std::size_t inside = 0;
    for (std::size_t f = 0; f < m.size(); ++f) {
      const bool in = ancestor(m.cell(f), q.level) == q;
      inside += in;
      bool in_box = true;
      const auto idx = m.unflat(f);
      for (int j = 0; j < d; ++j) in_box = in_box && idx[j] >= b.lo[j] && idx[j] < b.hi[j];
      EXPECT_EQ(in, in_box);
    }
    EXPECT_EQ(inside, static_cast<std::size_t>(b.size()));
  }
}

TEST(Property, BoxSumMatchesLoop)
{
  gen::Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    const int d = gen::uniform_int(rng, 1, 3);
    const Mesh m = Mesh::from_window(std::vector<int>(d, 0), Window{0, 0, 1}, d == 3 ? 2 : 3);
    const auto v = gen::values(rng, m.size());
    const BoxSum bs(m, v);
    IndexBox box{m.lo(), m.lo()};
    for (int j = 0; j < d; ++j) {
      const auto a = m.lo()[j] + gen::uniform_int(rng, 0, static_cast<int>(m.count()[j]) - 1);
      box.lo[j] = a;
      box.hi[j] = a + gen::uniform_int(rng, 0, static_cast<int>(m.lo()[j] + m.count()[j] - a));
    }
    long double brute = 0;
    for (std::size_t f = 0; f < m.size(); ++f) {
      const auto idx = m.unflat(f);
      bool in = true;
      for (int j = 0; j < d; ++j) in = in && idx[j] >= box.lo[j] && idx[j] < box.hi[j];
      if (in) brute += v[f];
    }
    EXPECT_NEAR(static_cast<double>(bs.sum(box)), static_cast<double>(brute), 1e-12 * (1 + static_cast<double>(brute)));
  }
}

TEST(MeshFunction, CsvRoundTrip)
{
  gen::Rng rng(23);
  const Mesh m = Mesh::from_window({0, 1}, Window{0, 1, 1}, 2);
  const MeshFunction f = gen::function(rng, m, 0.5);
  std::stringstream ss;
  write_csv(ss, f);
  EXPECT_EQ(read_csv(ss), f);
}

TEST(MeshFunction, CsvErrors)
{
  std::stringstream bad("x,y\n");
  EXPECT_THROW(read_csv(bad), ParseError);
  std::stringstream outside("# mesh level=0; tau=0; lo=0; count=2\n5,1.0\n");
  EXPECT_THROW(read_csv(outside), ParseError);
  std::stringstream arity("# mesh level=0; tau=0; lo=0; count=2\n1,1.0,2\n");
  EXPECT_THROW(read_csv(arity), ParseError);
}
