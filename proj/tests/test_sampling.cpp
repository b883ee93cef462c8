#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "kmix/rng.hpp"
#include "kmix/sampling.hpp"
#include "test_support.hpp"

using namespace kmix;

// Known-answer vectors from the Random123 distribution (kat_vectors).
TEST(Philox, KnownAnswerZero) {
  const auto out = philox4x64_10({0, 0, 0, 0}, {0, 0});
  EXPECT_EQ(out[0], 0x16554d9eca36314cULL);
  EXPECT_EQ(out[1], 0xdb20fe9d672d0fdcULL);
  EXPECT_EQ(out[2], 0xd7e772cee186176bULL);
  EXPECT_EQ(out[3], 0x7e68b68aec7ba23bULL);
}

TEST(Philox, KnownAnswerPi) {
  const auto out = philox4x64_10(
      {0x243f6a8885a308d3ULL, 0x13198a2e03707344ULL, 0xa4093822299f31d0ULL, 0x082efa98ec4e6c89ULL},
      {0x452821e638d01377ULL, 0xbe5466cf34e90c6cULL});
  EXPECT_EQ(out[0], 0xa528f45403e61d95ULL);
  EXPECT_EQ(out[1], 0x38c72dbd566e9788ULL);
  EXPECT_EQ(out[2], 0xa5a1610e72fd18b5ULL);
  EXPECT_EQ(out[3], 0x57bd43b5e52b7fe6ULL);
}

TEST(SplitStream, SameKeyReplays) {
  auto a = split_stream(42, 0);
  auto b = split_stream(42, 0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SplitStream, DistinctIndicesAndSeedsDiffer) {
  std::set<std::uint64_t> firsts;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    auto a = split_stream(42, i);
    auto b = split_stream(42, i + 1);
    EXPECT_NE(a.next_u64(), b.next_u64()) << i;
    auto c = split_stream(42 + i, 0);
    auto d = split_stream(43 + i, 0);
    EXPECT_NE(c.next_u64(), d.next_u64()) << i;
    firsts.insert(split_stream(42, i).next_u64());
  }
  EXPECT_EQ(firsts.size(), 1000u);
}

TEST(RngStream, BoundedIntegersStayInRange) {
  auto rng = split_stream(1, 2);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform_int(3, 9);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 9);
    ++hits[static_cast<std::size_t>(v - 3)];
  }
  for (int h : hits) EXPECT_NEAR(h, 10000, 500);
}

TEST(SampleBeta, UniformCase) {
  auto rng = split_stream(7, 0);
  const auto s = test::moments(100000, [&] { return sample_beta(1.0, 1.0, rng); });
  EXPECT_NEAR(s.mean, 0.5, 0.01);
}

TEST(SampleBeta, SymmetricTwoTwo) {
  // Beta(2,2): mean 1/2, variance ab/((a+b)^2(a+b+1)) = 4/(16*5) = 0.05.
  auto rng = split_stream(7, 1);
  const auto s = test::moments(100000, [&] { return sample_beta(2.0, 2.0, rng); });
  EXPECT_NEAR(s.mean, 0.5, 0.01);
  EXPECT_NEAR(s.var, 0.05, 0.005);
}

TEST(SampleBeta, RejectsNonPositive) {
  auto rng = split_stream(7, 2);
  EXPECT_THROW(sample_beta(0.0, 1.0, rng), ParameterError);
  EXPECT_THROW(sample_beta(1.0, -2.0, rng), ParameterError);
}

TEST(SampleDirichlet, SymmetricOnes) {
  auto rng = split_stream(11, 0);
  const auto params = DirichletParams::symmetric(3, 1.0);
  const auto st = test::component_moments(100000, 3, [&] { return sample_dirichlet(params, rng); });
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(st[k].mean, 1.0 / 3.0, 0.01);
}

TEST(SampleDirichlet, PaperNonAnchorAlpha) {
  auto rng = split_stream(11, 1);
  const DirichletParams params({2.0 / 9.0, 2.0 / 9.0});
  const auto st = test::component_moments(100000, 2, [&] { return sample_dirichlet(params, rng); });
  EXPECT_NEAR(st[0].mean, 0.5, 0.01);
  EXPECT_NEAR(st[1].mean, 0.5, 0.01);
}

TEST(SampleDirichlet, ThirdsVariance) {
  // alpha_i(alpha_0 - alpha_i) / (alpha_0^2 (alpha_0 + 1)) = (1/3)(2/3) / 2 = 1/9
  auto rng = split_stream(11, 2);
  const auto params = DirichletParams::symmetric(3, 1.0 / 3.0);
  const auto st = test::component_moments(100000, 3, [&] { return sample_dirichlet(params, rng); });
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(st[k].var, 1.0 / 9.0, 0.01);
}

TEST(SampleDirichlet, TinyAlphaStaysOnSimplex) {
  auto rng = split_stream(11, 3);
  const auto params = DirichletParams::symmetric(5, 1e-3);
  for (int i = 0; i < 1000; ++i) {
    const auto phi = sample_dirichlet(params, rng);
    double sum = 0.0;
    for (double p : phi.values()) sum += p;
    ASSERT_NEAR(sum, 1.0, 1e-9);
  }
}

TEST(DirichletParams, Validation) {
  EXPECT_THROW(DirichletParams({1.0}), ParameterError);
  EXPECT_THROW(DirichletParams({1.0, 0.0}), ParameterError);
  EXPECT_THROW(DirichletParams({1.0, -1.0, 2.0}), ParameterError);
}

TEST(ConditionalDirichlet, AnchorFixedAndPartnersSymmetric) {
  auto rng = split_stream(13, 0);
  const DirichletParams params({1.0, 2.0 / 9.0, 2.0 / 9.0});
  std::vector<double> a, b;
  for (int i = 0; i < 100000; ++i) {
    const auto phi = sample_conditional_dirichlet(params, 0, 0.5, rng);
    ASSERT_EQ(phi[0], 0.5);
    a.push_back(phi[1]);
    b.push_back(phi[2]);
  }
  EXPECT_NEAR(test::moments_of(a).mean, 0.25, 0.005);
  EXPECT_NEAR(test::moments_of(b).mean, 0.25, 0.005);
}

TEST(ConditionalDirichlet, NearOneShare) {
  auto rng = split_stream(13, 1);
  const DirichletParams params({1.0, 0.5, 0.7, 2.0});
  for (int i = 0; i < 100; ++i) {
    const auto phi = sample_conditional_dirichlet(params, 2, 0.999, rng);
    EXPECT_EQ(phi[2], 0.999);
    EXPECT_NEAR(phi[0] + phi[1] + phi[3], 0.001, 1e-12);
  }
}

TEST(ConditionalDirichlet, RejectsBadShareAndIndex) {
  auto rng = split_stream(13, 2);
  const DirichletParams params({1.0, 1.0, 1.0});
  EXPECT_THROW(sample_conditional_dirichlet(params, 0, 1.0, rng), ParameterError);
  EXPECT_THROW(sample_conditional_dirichlet(params, 0, 0.0, rng), ParameterError);
  EXPECT_THROW(sample_conditional_dirichlet(params, 3, 0.5, rng), ParameterError);
}

TEST(ConditionalDirichlet, RemainderMatchesReducedDirichlet) {
  // Dropping the anchor and rescaling by 1/(1 - share) must give Dir(alpha \ alpha_i).
  auto rng = split_stream(13, 3);
  const DirichletParams params({0.8, 0.5, 1.5, 3.0});
  const std::size_t anchor = 1;
  const double share = 0.3;
  const DirichletParams reduced = params.without(anchor);
  const int n = 100000;
  std::vector<std::vector<double>> cols(3);
  for (int i = 0; i < n; ++i) {
    const auto phi = sample_conditional_dirichlet(params, anchor, share, rng);
    for (std::size_t j = 0, r = 0; j < 4; ++j) {
      if (j != anchor) cols[r++].push_back(phi[j] / (1.0 - share));
    }
  }
  for (std::size_t r = 0; r < 3; ++r) {
    const auto m = test::moments_of(cols[r]);
    const double se = std::sqrt(reduced.variance(r) / n);
    EXPECT_NEAR(m.mean, reduced.mean(r), 3 * se) << r;
    // Sample variance has standard error ~ sqrt((mu4 - sigma^4)/n); bound it
    // generously by sqrt(2/n) * sigma^2 * 2.
    EXPECT_NEAR(m.var, reduced.variance(r), 3 * 2 * std::sqrt(2.0 / n) * reduced.variance(r)) << r;
  }
}

TEST(Sticks, HandExamples) {
  const auto v = sticks_from_simplex(Simplex({0.5, 0.3, 0.2}));
  ASSERT_EQ(v.size(), 2u);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(v[1], 0.6);

  const auto v2 = sticks_from_simplex(Simplex({0.7, 0.3}));
  ASSERT_EQ(v2.size(), 1u);
  EXPECT_DOUBLE_EQ(v2[0], 0.7);

  const auto v3 = sticks_from_simplex(Simplex({0.0, 0.0, 1.0}));
  EXPECT_EQ(v3[0], 0.0);
  EXPECT_EQ(v3[1], 0.0);
}

TEST(Sticks, InverseHandExamples) {
  const auto phi = simplex_from_sticks(StickWeights({0.5, 0.5}));
  EXPECT_DOUBLE_EQ(phi[0], 0.5);
  EXPECT_DOUBLE_EQ(phi[1], 0.25);
  EXPECT_DOUBLE_EQ(phi[2], 0.25);

  const auto full = simplex_from_sticks(StickWeights({1.0}));
  EXPECT_EQ(full[0], 1.0);
  EXPECT_EQ(full[1], 0.0);
}

TEST(Sticks, DegenerateDenominator) {
  EXPECT_THROW(sticks_from_simplex(Simplex({1.0, 0.0, 0.0})), DegenerateSimplexError);
}

TEST(Sticks, RoundTripProperty) {
  auto rng = split_stream(17, 0);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 8));
    std::vector<double> alpha(k);
    for (auto& a : alpha) a = 0.2 + 3.0 * rng.uniform();
    const Simplex phi = sample_dirichlet(DirichletParams(alpha), rng);
    const Simplex back = simplex_from_sticks(sticks_from_simplex(phi));
    for (std::size_t i = 0; i < k; ++i) ASSERT_NEAR(back[i], phi[i], 1e-9);

    std::vector<double> v(k - 1);
    for (auto& x : v) x = rng.uniform() * 0.999;
    const StickWeights sw(v);
    const StickWeights sw_back = sticks_from_simplex(simplex_from_sticks(sw));
    for (std::size_t i = 0; i + 1 < k; ++i) ASSERT_NEAR(sw_back[i], sw[i], 1e-9);
  }
}

TEST(SamplerProperties, EverySimplexSumsToOne) {
  auto rng = split_stream(19, 0);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 8));
    std::vector<double> alpha(k);
    for (auto& a : alpha) a = std::exp(-4.0 + 6.0 * rng.uniform());
    const DirichletParams params(alpha);
    const auto check = [](const Simplex& s) {
      double sum = 0.0;
      for (double p : s.values()) {
        EXPECT_GE(p, 0.0);
        sum += p;
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    };
    check(sample_dirichlet(params, rng));
    const auto anchor = static_cast<std::size_t>(rng.below(k));
    check(sample_conditional_dirichlet(params, anchor, 0.01 + 0.98 * rng.uniform(), rng));
    check(sample_simplex(params, StickLaw::gem, rng));
  }
}

TEST(SamplerProperties, DirichletMeansWithinThreeStandardErrors) {
  auto rng = split_stream(23, 0);
  const int n = 100000;
  for (int trial = 0; trial < 5; ++trial) {
    const auto k = static_cast<std::size_t>(rng.uniform_int(2, 6));
    std::vector<double> alpha(k);
    for (auto& a : alpha) a = 0.1 + 4.0 * rng.uniform();
    const DirichletParams params(alpha);
    auto draw_rng = split_stream(23, 1 + static_cast<std::uint64_t>(trial));
    const auto st = test::component_moments(n, k, [&] { return sample_dirichlet(params, draw_rng); });
    for (std::size_t i = 0; i < k; ++i) {
      EXPECT_NEAR(st[i].mean, params.mean(i), 3 * std::sqrt(params.variance(i) / n))
          << "trial " << trial << " component " << i;
    }
  }
}

TEST(SamplerProperties, PureFunctionOfStream) {
  const DirichletParams params({0.3, 1.2, 2.5});
  auto a = split_stream(99, 5);
  auto b = split_stream(99, 5);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(sample_dirichlet(params, a), sample_dirichlet(params, b));
    EXPECT_EQ(sample_beta(0.4, 2.0, a), sample_beta(0.4, 2.0, b));
  }
}

TEST(GemLaw, UniformSticksForUnitAlpha) {
  // With K = 2 and alpha_1 = 1, v_1 ~ Beta(1, 1) so phi_1 is uniform.
  auto rng = split_stream(29, 0);
  const auto params = DirichletParams::symmetric(2, 1.0);
  const auto st = test::component_moments(50000, 2, [&] { return sample_simplex(params, StickLaw::gem, rng); });
  EXPECT_NEAR(st[0].mean, 0.5, 0.01);
}
