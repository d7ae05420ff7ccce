#include <gtest/gtest.h>

#include <algorithm>

#include "gen.hpp"
#include "sparsemb/embedding.hpp"

using namespace sparsemb;

namespace {

std::vector<DyadicCube> tower(int lo, int hi)
{
  std::vector<DyadicCube> out;
  for (int k = lo; k <= hi; ++k) out.push_back(make_cube(k, {0}));
  return out;
}

// [2^j, 2^{j+1}) for j = 0..J, listed outward.
std::vector<DyadicCube> outward_annuli(int J)
{
  std::vector<DyadicCube> out;
  for (int j = 0; j <= J; ++j) out.push_back(make_cube(-j, {1}));
  return out;
}

EmbeddingProblem problem(int d, std::vector<double> p, std::vector<Weight> sigma, KernelMap k, SparseFamily fam,
                         std::optional<Mesh> mesh = std::nullopt, double theta = 2)
{
  return EmbeddingProblem{.d = d,
                          .p = std::move(p),
                          .sigma = std::move(sigma),
                          .kernel = std::move(k),
                          .family = std::move(fam),
                          .theta = theta,
                          .mesh = std::move(mesh),
                          .tol = kDefaultQuadTol};
}

EmbeddingProblem stein_weiss(int depth, std::optional<Mesh> mesh = std::nullopt)
{
  return problem(1, {2, 2}, {Weight::power(-0.5, 1), Weight::power(-0.5, 1)}, KernelMap::riesz(0.5, 2, 1),
                 assign_esets(tower(0, depth), depth), std::move(mesh));
}

}  // namespace

TEST(Norm, Examples)
{
  const Mesh m = Mesh::from_cube(make_cube(0, {0}), 3);
  EXPECT_NEAR(lp_norm(TestFunction(m, 1.0), Weight::lebesgue(), 3.5), 1.0, 1e-15);
  TestFunction f(m, 0.0);
  for (std::size_t c = 0; c < 4; ++c) f.values[c] = 2.0;
  EXPECT_NEAR(lp_norm(f, Weight::lebesgue(), 2), std::sqrt(2.0), 1e-15);
}

TEST(Property, NormBounds)
{
  gen::Rng rng(51);
  for (int t = 0; t < 100; ++t) {
    const int d = gen::uniform_int(rng, 1, 2);
    const Mesh m = Mesh::from_cube(make_cube(0, std::vector<std::int64_t>(d, 0)), d == 1 ? 6 : 3);
    const TestFunction f = gen::function(rng, m, 0.0);
    const Weight w = Weight::power(gen::uniform(rng, -0.5, 2), d);
    const double p = gen::uniform(rng, 1.1, 6);
    const auto [lo, hi] = std::minmax_element(f.values.begin(), f.values.end());
    const double mass = std::pow(integrate(w, make_cube(0, std::vector<std::int64_t>(d, 0))), 1 / p);
    const double nrm = lp_norm(f, w, p);
    EXPECT_GE(nrm, *lo * mass * (1 - 1e-9));
    EXPECT_LE(nrm, *hi * mass * (1 + 1e-9));
  }
}

TEST(Supremum, SingleUnitCube)
{
  const auto k = KernelMap::riesz(0.3, 3, 1);
  const auto prob = problem(1, {2, 3, 4}, {Weight{}, Weight{}, Weight{}}, k, assign_esets({make_cube(0, {0})}, 0));
  const auto r = a0_supremum(prob);
  EXPECT_DOUBLE_EQ(r.value, kernel_value(k, make_cube(0, {0})));
  EXPECT_EQ(r.argmax, std::optional<std::size_t>(0));
}

TEST(Supremum, RegimeMismatch)
{
  const auto prob = problem(1, {4, 4}, {Weight{}, Weight{}}, KernelMap::riesz(0.5, 2, 1), assign_esets(tower(0, 3), 3));
  EXPECT_THROW(a0_supremum(prob), DomainError);
  const auto ge = problem(1, {2, 2}, {Weight{}, Weight{}}, KernelMap::riesz(0.5, 2, 1), assign_esets(tower(0, 3), 3));
  EXPECT_THROW(a0_sum(ge), DomainError);
}

// A constant weight c multiplies every average by c, so A0 picks up c^{sum 1/p_i'}.
TEST(Supremum, Homogeneity)
{
  const Mesh m = Mesh::from_window({0}, Window{0, 0, 1}, 4);
  const Weight two = Weight::sampled(MeshFunction(m, 2.0));
  const Weight one = Weight::sampled(MeshFunction(m, 1.0));
  const auto fam = assign_esets({make_cube(1, {0}), make_cube(2, {-1}), make_cube(3, {1})}, 4);
  const auto k = KernelMap::riesz(0.5, 2, 1);
  const std::vector<double> p{1.5, 2.5};
  const double a = a0_supremum(problem(1, p, {one, one}, k, fam)).value;
  const double b = a0_supremum(problem(1, p, {two, two}, k, fam)).value;
  const double e = (1 - 1 / 1.5) + (1 - 1 / 2.5);
  EXPECT_NEAR(b / a, std::pow(2.0, e), 1e-12);
}

TEST(Supremum, SteinWeissScaleInvariance)
{
  const auto r = a0_supremum(stein_weiss(40));
  const auto [lo, hi] = std::minmax_element(r.terms.begin(), r.terms.end());
  EXPECT_GT(*lo, 0);
  EXPECT_LE(*hi / *lo, 2.0);
}

TEST(Theta, LebesgueMatchesPlain)
{
  for (double theta : {1.01, 1.5, 3.0}) {
    auto prob = problem(1, {2, 2}, {Weight{}, Weight{}}, KernelMap::riesz(0.5, 2, 1), assign_esets(tower(-3, 6), 6));
    prob.theta = theta;
    EXPECT_EQ(a0_supremum(prob, Averaging::Theta).value, a0_supremum(prob).value);
    auto sum = problem(1, {3, 3}, {Weight{}, Weight{}}, KernelMap::riesz(0.5, 2, 1), assign_esets(tower(-3, 6), 6));
    sum.theta = theta;
    EXPECT_EQ(a0_sum(sum, Averaging::Theta).value, a0_sum(sum).value);
  }
}

// Jensen: (avg sigma^theta)^{1/theta} >= avg sigma, increasing in theta.
TEST(Theta, JensenOrdering)
{
  const auto fam = assign_esets({make_cube(0, {0}), make_cube(-1, {1}), make_cube(2, {1})}, 4);
  for (bool sum : {false, true}) {
    std::vector<double> vals;
    auto prob = problem(1, sum ? std::vector<double>{3, 3} : std::vector<double>{2, 2},
                        {Weight::power(0.7, 1), Weight::power(-0.3, 1)}, KernelMap::riesz(0.5, 2, 1), fam);
    const double plain = a0_auto(prob).value;
    for (double theta : {1.01, 1.5, 2.0}) {
      prob.theta = theta;
      vals.push_back(a0_auto(prob, Averaging::Theta).value);
    }
    EXPECT_GE(vals[0], plain * (1 - 1e-9));
    EXPECT_TRUE(std::is_sorted(vals.begin(), vals.end()));
  }
}

TEST(Theta, DivergentPowerIsInfinite)
{
  auto prob = problem(1, {2, 2}, {Weight::power(-0.6, 1), Weight{}}, KernelMap::riesz(0.5, 2, 1),
                      assign_esets(tower(0, 3), 3));
  prob.theta = 2;  // theta * beta = -1.2 <= -1
  const auto r = a0_supremum(prob, Averaging::Theta);
  EXPECT_TRUE(r.infinite);
  prob.p = {3, 3};
  EXPECT_TRUE(a0_sum(prob, Averaging::Theta).infinite);
}

TEST(Sum, SingleCubeAndEmpty)
{
  const auto k = KernelMap::riesz(0.5, 2, 1);
  const auto one = problem(1, {3, 3}, {Weight{}, Weight{}}, k, assign_esets({make_cube(0, {0})}, 0));
  EXPECT_NEAR(a0_sum(one).value, kernel_value(k, make_cube(0, {0})), 1e-15);
  auto empty = one;
  empty.family = SparseFamily{};
  EXPECT_EQ(a0_sum(empty).value, 0.0);
  auto degenerate = one;
  SparseFamily tree;
  std::vector<DyadicCube> cubes{make_cube(0, {0}), make_cube(1, {0}), make_cube(1, {1})};
  degenerate.family = assign_esets(cubes, 1);
  EXPECT_THROW(a0_sum(degenerate), DomainError);
}

TEST(Property, SumPartialsAndPermutation)
{
  gen::Rng rng(52);
  for (int t = 0; t < 20; ++t) {
    std::vector<DyadicCube> cubes = outward_annuli(20);
    auto prob = problem(1, {4, 4}, {Weight::modified_power(0, -0.5, 1), Weight::power(0.2, 1)},
                        KernelMap::riesz(0.5, 2, 1), assign_esets(cubes, 0));
    const auto base = a0_sum(prob);
    EXPECT_TRUE(std::is_sorted(base.partial_sums.begin(), base.partial_sums.end()));
    std::shuffle(cubes.begin(), cubes.end(), rng);
    prob.family = assign_esets(cubes, 0);
    EXPECT_NEAR(a0_sum(prob).value / base.value, 1.0, 1e-12);
  }
}

TEST(SparseConstant, Examples)
{
  const auto k = KernelMap::riesz(0.5, 2, 1);
  const std::vector<double> p{1.5, 2};
  const double inv = 1 / 1.5 + 0.5;
  const auto single = problem(1, p, {Weight{}, Weight{}}, k, assign_esets({make_cube(2, {1})}, 2));
  const auto s = make_cube(2, {1});
  EXPECT_NEAR(sparse_constant_sup(single).value, kernel_value(k, s) * std::pow(volume(s), 2 - inv), 1e-15);

  const auto halves = problem(1, p, {Weight{}, Weight{}}, k, assign_esets(tower(0, 8), 8));
  const auto r = sparse_constant_sup(halves);
  for (std::size_t i = 0; i + 1 < r.terms.size(); ++i) {
    const auto& q = halves.family.cubes[i];
    EXPECT_NEAR(r.terms[i] / (kernel_value(k, q) * std::pow(volume(q), 2 - inv) * std::pow(2.0, inv)), 1.0, 1e-12);
  }

  const auto sum_single = problem(1, {3, 3}, {Weight{}, Weight{}}, k, assign_esets({make_cube(2, {1})}, 2));
  EXPECT_NEAR(sparse_constant_sum(sum_single).value, kernel_value(k, s) * std::pow(volume(s), 2 - 2.0 / 3), 1e-15);
  auto empty = sum_single;
  empty.family = SparseFamily{};
  EXPECT_EQ(sparse_constant_sum(empty).value, 0.0);
}

TEST(SparseConstant, BoundedBySupremumForPowerWeights)
{
  const auto prob = stein_weiss(30);
  const double c1 = sparse_constant_sup(prob).value, a0 = a0_supremum(prob).value;
  EXPECT_TRUE(std::isfinite(c1));
  EXPECT_LE(c1 / a0, 4.0);
}

TEST(Holder, EqualityAndZero)
{
  const Mesh m = Mesh::from_cube(make_cube(0, {0}), 4);
  const auto prob = problem(1, {2, 3}, {Weight{}, Weight{}}, KernelMap::riesz(0.5, 2, 1), assign_esets(tower(0, 2), 4));
  const auto r = holder_cube_ratios(prob, {TestFunction(m, 3.0), TestFunction(m, 0.5)}, make_cube(1, {1}));
  EXPECT_NEAR(r[0], 1.0, 1e-12);
  EXPECT_NEAR(r[1], 1.0, 1e-12);
  const auto z = holder_cube_ratios(prob, {TestFunction(m, 0.0), TestFunction(m, 1.0)}, make_cube(1, {1}));
  EXPECT_EQ(z[0], 0.0);
}

TEST(Property, HolderBound)
{
  gen::Rng rng(53);
  for (int t = 0; t < 150; ++t) {
    const int d = gen::uniform_int(rng, 1, 2);
    const Mesh m = Mesh::from_cube(make_cube(0, std::vector<std::int64_t>(d, 0)), d == 1 ? 5 : 3);
    const double theta = std::vector<double>{1.5, 2, 3}[gen::uniform_int(rng, 0, 2)];
    const std::vector<double> p{gen::uniform(rng, 1.2, 5), gen::uniform(rng, 1.2, 5)};
    const std::vector<Weight> sig{Weight::power(gen::uniform(rng, -d / theta + 0.05, 2), d),
                                  Weight::power(gen::uniform(rng, -d / theta + 0.05, 2), d)};
    const auto prob = problem(d, p, sig, KernelMap::riesz(0.5, 2, d), assign_esets({m.cell(0)}, m.level()),
                              std::nullopt, theta);
    const auto s = ancestor(m.cell(gen::uniform_int(rng, 0, static_cast<int>(m.size()) - 1)), gen::uniform_int(rng, 0, 2));
    for (double r : holder_cube_ratios(prob, {gen::function(rng, m), gen::function(rng, m)}, s))
      EXPECT_LE(r, 1 + 1e-9);
  }
}

TEST(Verify, SingleCubeSaturates)
{
  const auto q = make_cube(0, {0});
  const Mesh m = Mesh::from_cube(q, 3);
  const auto prob = problem(1, {2, 2}, {Weight{}, Weight{}}, KernelMap::riesz(0.5, 2, 1), assign_esets({q}, 3), m);
  const auto rep = verify_embedding(prob, 4, 1);
  EXPECT_NEAR(rep.ratio_over_a0, 1.0, 1e-12);
  EXPECT_EQ(rep.best_candidate.rfind("indicator", 0), 0u);
}

TEST(Verify, MaxSemanticsAndDeterminism)
{
  const auto prob = stein_weiss(8, Mesh::from_window({0}, Window{0, 8, 1}, 9));
  const auto a = verify_embedding(prob, 10, 99), b = verify_embedding(prob, 10, 99);
  for (double r : a.trial_ratios) EXPECT_LE(r, a.best_ratio);
  for (const auto& d : a.per_dilation) EXPECT_LE(d.ratio, a.best_ratio);
  EXPECT_EQ(a.trial_ratios, b.trial_ratios);
  EXPECT_EQ(a.best_ratio, b.best_ratio);
  EXPECT_LE(a.best_ratio, a.chain_bound);
  const auto c = verify_embedding(prob, 10, 100);
  EXPECT_NE(a.trial_ratios, c.trial_ratios);
}

TEST(Extremize, SingleCube)
{
  const auto q = make_cube(1, {1});
  const auto prob = problem(1, {2, 1.5}, {Weight::power(0.5, 1), Weight{}}, KernelMap::riesz(0.5, 2, 1),
                            assign_esets({q}, 4), Mesh::from_cube(make_cube(0, {0}), 4));
  const auto res = extremize(prob, 10, 2, 5);
  EXPECT_TRUE(res.monotone);
  const double a0 = a0_supremum(prob).value;
  for (const auto& h : res.history) {
    ASSERT_GE(h.size(), 2u);
    EXPECT_NEAR(h[1] / a0, 1.0, 1e-9);
  }
}

TEST(Property, ExtremizerMonotone)
{
  gen::Rng rng(54);
  for (int t = 0; t < 8; ++t) {
    const int depth = gen::uniform_int(rng, 3, 7);
    auto prob = stein_weiss(depth, Mesh::from_window({0}, Window{0, depth, 1}, depth + 1));
    prob.p = {gen::uniform(rng, 1.3, 3), gen::uniform(rng, 1.3, 3)};
    if (prob.regime() == Regime::SumLtOne) continue;
    const auto res = extremize(prob, 15, 2, t);
    EXPECT_TRUE(res.monotone);
    for (const auto& h : res.history) EXPECT_TRUE(std::is_sorted(h.begin(), h.end()));
    EXPECT_LE(res.best_ratio, verify_embedding(prob, 0, 0).chain_bound);
  }
}

TEST(Tp, Examples)
{
  const auto halves = assign_esets(tower(0, 6), 6);
  for (double p : {1.5, 2.0, 4.0})
    for (std::size_t i = 0; i + 1 < halves.size(); ++i)
      EXPECT_NEAR(t_p(Weight{}, p, halves.cubes[i], halves), 2.0, 1e-12);
  const auto disjoint = assign_esets({make_cube(1, {0}), make_cube(1, {1})}, 1);
  EXPECT_NEAR(t_p(Weight{}, 2, disjoint.cubes[0], disjoint), 1.0, 1e-15);
  for (const auto& q : halves.cubes) EXPECT_TRUE(std::isfinite(t_p(Weight::power(0.5, 1), 2, q, halves)));
  EXPECT_THROW(t_p(Weight::power(1.5, 1), 2, halves.cubes[0], halves), DomainError);
}

TEST(A2, Examples)
{
  const auto halves = a2_bound_check(Weight{}, 2, assign_esets(tower(0, 10), 10));
  EXPECT_NEAR(halves.sup_tp, 2.0, 1e-12);
  EXPECT_NEAR(halves.ap.value, 1.0, 1e-15);
  EXPECT_NEAR(halves.ratio, 2.0, 1e-12);
  EXPECT_LE(halves.ratio, 4.0);
  EXPECT_LE(halves.ratio, halves.chain_bound * (1 + 1e-12));
  const auto disjoint = a2_bound_check(Weight{}, 2, assign_esets({make_cube(1, {0}), make_cube(1, {1})}, 1));
  EXPECT_NEAR(disjoint.ratio, 1.0, 1e-15);
}

TEST(Balance, Examples)
{
  EXPECT_EQ(balance_residual(1, 2, {2, 2}, {-1, -1}), 0.0);
  EXPECT_EQ(balance_residual(1, 1, {2, 2}, {0, 0}), 1.0);
  EXPECT_EQ(balance_residual(0.5, 1, {2, 2}, {-0.5, -0.5}), 0.0);
  EXPECT_EQ(balance_residual(0.5, 1, {4, 4}, {-1.0 / 3, -1.0 / 3}, true), 0.0);
}

// Bilinear form of the Riesz potential with p_1 = p, p_2 = q' and beta_i = -gamma_i p_i':
// the residual vanishes exactly when 1/q = 1/p - (alpha - gamma_1 - gamma_2)/d.
TEST(Property, SteinWeissEquivalence)
{
  gen::Rng rng(55);
  for (int t = 0; t < 500; ++t) {
    const int d = gen::uniform_int(rng, 1, 3);
    const double alpha = gen::uniform(rng, 0.1, d - 0.1);
    const double p = gen::uniform(rng, 1.1, 5), g1 = gen::uniform(rng, -1, 1), g2 = gen::uniform(rng, -1, 1);
    const double inv_q = 1 / p - (alpha - g1 - g2) / d;
    if (!(inv_q > 0.01 && inv_q < 0.99)) continue;
    const double q = 1 / inv_q, qc = q / (q - 1), pc = p / (p - 1);
    const std::vector<double> ps{p, qc};
    const std::vector<double> beta{-g1 * pc, -g2 * q};  // (q')' = q
    EXPECT_NEAR(balance_residual(alpha, d, ps, beta), 0.0, 1e-12);
    const double off = gen::uniform(rng, 0.05, 0.3);
    const double qbad = 1 / (inv_q + off * (inv_q < 0.5 ? 1 : -1));
    const std::vector<double> ps_bad{p, qbad / (qbad - 1)};
    const std::vector<double> beta_bad{-g1 * pc, -g2 * qbad};
    EXPECT_GT(std::abs(balance_residual(alpha, d, ps_bad, beta_bad)), 1e-3);
  }
}

TEST(Series, InsideUnitWindow)
{
  const auto fam = assign_esets({make_cube(1, {0}), make_cube(2, {-1}), make_cube(3, {5})}, 3);
  const auto s = power_tail_series(fam, 4, -7, 1);
  double total = 0;
  for (std::size_t i = 0; i < fam.size(); ++i) {
    EXPECT_DOUBLE_EQ(s.terms[i], fam.eset_volume(i));
    total += fam.eset_volume(i);
  }
  EXPECT_DOUBLE_EQ(s.partial_sums.back(), total);
}

TEST(Series, ConvergentAndDivergentTowers)
{
  const auto fam = assign_esets(outward_annuli(40), 0);
  const double r = 4;
  const auto conv = power_tail_series(fam, r, -2 / r, 1);
  EXPECT_EQ(conv.verdict, SeriesVerdict::Convergent);
  EXPECT_LT(conv.tail_fraction, 1e-3);
  // terms |E| (1.5 * 2^j)^{-2} = 2^j * 2^{-2j} / 2.25
  for (int j = 0; j <= 40; ++j) EXPECT_NEAR(conv.terms[j] * 2.25 / std::exp2(-j), 1.0, 1e-12);
  const auto div = power_tail_series(fam, r, -1 / (2 * r), 1);
  EXPECT_EQ(div.verdict, SeriesVerdict::DivergentTrend);
}
