#include "fiberpath/paths.hpp"
#include "fiberpath/philox.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace fiberpath;

TEST(Philox, KnownAnswers)
{
    // Random123 known-answer vectors for philox4x32-10
    using C = Philox4x32::counter_type;
    EXPECT_EQ(Philox4x32::block({0, 0, 0, 0}, {0, 0}), (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}),
              (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}),
              (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(NormalStream, DeterministicAndDistinct)
{
    NormalStream a(42, 7, 0), b(42, 7, 0), c(42, 8, 0), d(43, 7, 0), e(42, 7, 1);
    for (int i = 0; i < 100; ++i) {
        const double x = a();
        EXPECT_EQ(x, b());
        EXPECT_NE(x, c());
        EXPECT_NE(x, d());
        EXPECT_NE(x, e());
    }
}

TEST(NormalStream, Moments)
{
    NormalStream z(5, 0, 0);
    const int n = 400000;
    double m1 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < n; ++i) {
        const double x = z();
        m1 += x;
        m2 += x * x;
        m4 += x * x * x * x;
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    EXPECT_NEAR(m1, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(m2, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(m4, 3.0, 5.0 * std::sqrt(96.0 / n));
}

TEST(PathGrid, IndexOf)
{
    const PathGrid g(2.0, 8);
    EXPECT_EQ(g.index_of(0.0), 0);
    EXPECT_EQ(g.index_of(1.0), 4);
    EXPECT_EQ(g.index_of(2.0), 8);
    EXPECT_DOUBLE_EQ(g.dt(), 0.25);
    EXPECT_THROW(g.index_of(0.3), domain_error);
    EXPECT_THROW(g.index_of(2.25), domain_error);
    EXPECT_THROW(PathGrid(0.0, 4), domain_error);
    EXPECT_THROW(PathGrid(1.0, 0), domain_error);
}

TEST(BrownianPath, PositionsArePrefixSums)
{
    const auto p = sample_path(PathGrid(1.0, 16), 3, 0, 9);
    for (int mu = 0; mu < 3; ++mu) {
        EXPECT_EQ(p.position(0, mu), 0.0);
        double s = 0;
        for (int i = 0; i < 16; ++i) {
            s += p.increment(i, mu);
            EXPECT_EQ(p.position(i + 1, mu), s);
        }
    }
}

TEST(BrownianPath, SameSeedSameStreamSamePath)
{
    const PathGrid g(1.0, 32);
    EXPECT_EQ(sample_path(g, 3, 11, 1).increments(), sample_path(g, 3, 11, 1).increments());
    EXPECT_NE(sample_path(g, 3, 11, 1).increments(), sample_path(g, 3, 12, 1).increments());
    EXPECT_NE(sample_path(g, 3, 11, 1).increments(), sample_path(g, 3, 11, 2).increments());
}

TEST(BrownianPath, EndpointVariance)
{
    const PathGrid g(2.0, 8);
    const int n = 40000;
    double s2 = 0, cross = 0;
    for (int u = 0; u < n; ++u) {
        const auto p = sample_path(g, 2, u, 3);
        s2 += p.position(8, 0) * p.position(8, 0);
        cross += p.position(8, 0) * p.position(8, 1);
    }
    // Var b(T)^2 = 2 T^2
    EXPECT_NEAR(s2 / n, 2.0, 5.0 * std::sqrt(2.0 * 4.0 / n));
    EXPECT_NEAR(cross / n, 0.0, 5.0 * 2.0 / std::sqrt(double(n)));
}

TEST(BrownianPath, QuadraticVariation)
{
    const int n = 1 << 14;
    const auto p = sample_path(PathGrid(1.5, n), 3, 0, 17);
    for (int mu = 0; mu < 3; ++mu) {
        double qv = 0;
        for (int i = 0; i < n; ++i) qv += p.increment(i, mu) * p.increment(i, mu);
        EXPECT_NEAR(qv, 1.5, 5.0 * 1.5 * std::sqrt(2.0 / n));
    }
}

TEST(BrownianPath, Antithetic)
{
    const auto p = sample_path(PathGrid(1.0, 8), 3, 4, 5);
    const auto q = antithetic(p);
    EXPECT_TRUE(q.negated);
    for (int i = 0; i <= 8; ++i)
        for (int mu = 0; mu < 3; ++mu) EXPECT_EQ(q.position(i, mu), -p.position(i, mu));
    EXPECT_FALSE(antithetic(q).negated);
}

TEST(Refinement, CoarsePathIsASubsequence)
{
    const auto p = sample_path(PathGrid(1.0, 8), 3, 2, 6);
    const auto f = refine_midpoints(p);
    ASSERT_EQ(f.n_steps(), 16);
    EXPECT_EQ(f.level, 1u);
    for (int i = 0; i < 8; ++i)
        for (int mu = 0; mu < 3; ++mu)
            EXPECT_NEAR(f.increment(2 * i, mu) + f.increment(2 * i + 1, mu), p.increment(i, mu), 1e-15);
    const auto ff = refine_midpoints(f);
    EXPECT_EQ(ff.n_steps(), 32);
    for (int i = 0; i <= 8; ++i) EXPECT_NEAR(ff.position(4 * i, 0), p.position(i, 0), 1e-14);
}

TEST(Refinement, DeterministicAndMirrorCompatible)
{
    const auto p = sample_path(PathGrid(1.0, 8), 2, 2, 6);
    EXPECT_EQ(refine_midpoints(p).increments(), refine_midpoints(p).increments());
    const auto a = refine_midpoints(antithetic(p));
    const auto b = antithetic(refine_midpoints(p));
    for (std::size_t i = 0; i < a.increments().size(); ++i) EXPECT_EQ(a.increments()[i], b.increments()[i]);
}

TEST(Refinement, BridgeVariance)
{
    // b(mid) - (b(left) + b(right))/2 has variance dt/4
    const PathGrid g(1.0, 4);
    const int n = 20000;
    double s2 = 0;
    for (int u = 0; u < n; ++u) {
        const auto f = refine_midpoints(sample_path(g, 1, u, 8));
        const double w = 0.5 * (f.increment(0, 0) - f.increment(1, 0));
        s2 += w * w;
    }
    const double want = 0.25 / 4.0;
    EXPECT_NEAR(s2 / n, want, 5.0 * want * std::sqrt(2.0 / n));
}

TEST(Dump, RoundTrips)
{
    const auto p = sample_path(PathGrid(1.0, 5), 2, 1, 1);
    std::ostringstream os;
    dump_path(os, p);
    std::istringstream is(os.str());
    for (int i = 0; i < 5; ++i)
        for (int mu = 0; mu < 2; ++mu) {
            double x;
            is >> x;
            EXPECT_EQ(x, p.increment(i, mu));
        }
}
