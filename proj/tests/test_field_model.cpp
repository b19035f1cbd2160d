#include "fiberpath/field_model.hpp"
#include "fiberpath/fock_oracle.hpp"
#include "fiberpath/radial_table.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

using namespace fiberpath;

namespace {

constexpr double pi = std::numbers::pi;

ModeSet one_pair()
{
    Eigen::VectorXd k(3);
    k << 0, 0, 1;
    return ModeSet::from_half(3, {k}, {1.0});
}

FormFactor unit_phi() { return FormFactor::table({0.0, 1.5}, {1.0, 1.0}); }

/**
 * A and A + B by brute force in (|k|, cos theta) for x along z; the phi average
 * of delta_perp is (1 + c^2)/2 on the xx entry and 1 - c^2 on zz.
 */
std::pair<double, double> brute_AB(const FormFactor& ff, double tau, double r)
{
    using boost::math::quadrature::gauss_kronrod;
    const double pre = 0.5 * 2 * pi;  // (1/2) * int dphi
    auto radial = [&](auto ang) {
        auto fk = [&](double k) {
            const double p = ff(k);
            auto fc = [&](double c) { return std::cos(k * r * c) * ang(c); };
            return k * p * p * std::exp(-tau * k) * gauss_kronrod<double, 61>::integrate(fc, -1.0, 1.0, 10, 1e-14);
        };
        double s = 0;
        const auto bp = ff.breakpoints();
        for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
            // stay strictly inside a sharp cutoff
            const double hi = ff.kind == FormFactor::Kind::sharp_cutoff ? bp[i + 1] * (1 - 1e-15) : bp[i + 1];
            s += gauss_kronrod<double, 61>::integrate(fk, bp[i], hi, 10, 1e-13);
        }
        return pre * s;
    };
    const double A = radial([](double c) { return 0.5 * (1 + c * c); });
    const double ApB = radial([](double c) { return 1 - c * c; });
    return {A, ApB - A};
}

std::shared_ptr<const RadialTable> shared_table()
{
    static auto t = std::make_shared<const RadialTable>(RadialTable::build(FormFactor::sharp(1.0), 2.0, 6.0));
    return t;
}

}  // namespace

TEST(FormFactor, SharpAndTable)
{
    const auto s = FormFactor::sharp(2.0);
    EXPECT_DOUBLE_EQ(s(1.9), std::pow(2 * pi, -1.5));
    EXPECT_EQ(s(2.0), 0.0);
    const auto t = FormFactor::table({0.0, 1.0, 2.0}, {1.0, 3.0, 0.0});
    EXPECT_DOUBLE_EQ(t(0.5), 2.0);
    EXPECT_DOUBLE_EQ(t(1.5), 1.5);
    EXPECT_EQ(t(2.5), 0.0);
    EXPECT_NE(s.fingerprint(), FormFactor::sharp(2.0 + 1e-12).fingerprint());
    EXPECT_THROW(FormFactor::sharp(0.0), domain_error);
    EXPECT_THROW(FormFactor::table({0.1, 1.0}, {1, 1}), domain_error);
    EXPECT_THROW(FormFactor::table({0.0, 1.0, 1.0}, {1, 1, 1}), domain_error);
}

TEST(ModeSet, PairsAndQuadratureVolume)
{
    const auto m = one_pair();
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ((m[0].k + m[1].k).norm(), 0.0);
    EXPECT_EQ(m[0].omega, 1.0);

    const auto q = ModeSet::spherical_quadrature(1.3, 6, 5, 7);
    double vol = 0, second = 0;
    for (const auto& md : q.modes()) {
        vol += md.w;
        second += md.w * md.k(0) * md.k(0);
    }
    EXPECT_NEAR(vol, 4.0 / 3.0 * pi * std::pow(1.3, 3), 1e-12);
    // int k_x^2 over the ball = 4 pi R^5 / 15
    EXPECT_NEAR(second, 4 * pi * std::pow(1.3, 5) / 15.0, 1e-12);
    EXPECT_THROW(ModeSet::from_half(3, {Eigen::VectorXd::Zero(3)}, {1.0}), domain_error);
}

TEST(ModeSet, EmptyIsHarmless)
{
    const ModeSet e(3);
    EXPECT_TRUE(e.empty());
    const ModeSumKernel k(e, FormFactor::sharp(1.0));
    EXPECT_EQ(k.trace_at_origin(), 0.0);
    EXPECT_EQ(k.eval(0.5, Eigen::Vector3d(1, 2, 3)).norm(), 0.0);
    const auto f = KFunction::zero(e);
    EXPECT_EQ(q1_form(e, f, f, 0.0, 1.0), cplx(0));
}

TEST(ModeSumKernel, OnePairByHand)
{
    const ModeSumKernel k(one_pair(), unit_phi());
    const Eigen::Vector3d x(0.3, -0.7, 1.1);
    const Eigen::MatrixXd w = k.eval(0.4, x);
    Eigen::MatrixXd want = Eigen::MatrixXd::Zero(3, 3);
    want(0, 0) = want(1, 1) = std::exp(-0.4) * std::cos(1.1);
    EXPECT_LE((w - want).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_DOUBLE_EQ(k.trace_at_origin(), 2.0);
    EXPECT_DOUBLE_EQ(ito_isometry_mean(PairKernel(k), 1.5), 3.0);
}

TEST(Continuum, OriginValueClosedFormAndMonteCarlo)
{
    // W(0,0) = Lambda^2 / (12 pi^2) I for the sharp cutoff
    const double L = 1.0;
    const double closed = L * L / (12 * pi * pi);
    const ContinuumKernel k(shared_table());
    const Eigen::MatrixXd w = k.eval(0.0, Eigen::Vector3d::Zero());
    EXPECT_LE((w - closed * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-9 * closed);
    EXPECT_NEAR(k.trace_at_origin(), 3 * closed, 1e-9 * closed);

    // Monte Carlo over the ball: (1/2) (2pi)^-3 vol E[delta_perp / |k|]
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-L, L);
    const int n = 400000;
    Eigen::Matrix3d acc = Eigen::Matrix3d::Zero(), acc2 = Eigen::Matrix3d::Zero();
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d q(u(rng), u(rng), u(rng));
        if (q.norm() >= L) continue;
        ++hits;
        const Eigen::Matrix3d v = Eigen::Matrix3d(transverse_projector(q)) / q.norm();
        acc += v;
        acc2 += v.cwiseProduct(v);
    }
    const double vol = 4.0 / 3.0 * pi * L * L * L, pre = 0.5 * std::pow(2 * pi, -3) * vol;
    const Eigen::Matrix3d mean = acc / hits;
    const Eigen::Matrix3d sd = ((acc2 / hits - mean.cwiseProduct(mean)) / hits).cwiseSqrt();
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            EXPECT_NEAR(pre * mean(a, b), a == b ? closed : 0.0, 5 * pre * sd(a, b) + 1e-15);
}

TEST(Continuum, TableAgreesWithBruteForce)
{
    const auto ff = FormFactor::sharp(1.0);
    const auto& t = *shared_table();
    const double a00 = t.lookup(0, 0).first;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> ut(0.0, 2.0), ur(0.0, 6.0);
    double worst = 0, worst_direct = 0;
    for (int i = 0; i < 1000; ++i) {
        const double tau = ut(rng), r = ur(rng);
        const auto [A, B] = t.lookup(tau, r);
        const auto [Ab, Bb] = i < 100 ? brute_AB(ff, tau, r) : radial::direct(ff, tau, r);
        worst = std::max({worst, std::abs(A - Ab), std::abs(B - Bb)});
        if (i < 100) {
            const auto [Ad, Bd] = radial::direct(ff, tau, r);
            worst_direct = std::max({worst_direct, std::abs(Ad - Ab), std::abs(Bd - Bb)});
        }
    }
    EXPECT_LE(worst, 1e-6 * a00);
    EXPECT_LE(worst_direct, 1e-10 * a00);
}

TEST(Continuum, TableFormFactorBruteForce)
{
    const auto ff = FormFactor::table({0.0, 0.5, 1.2}, {0.1, 0.08, 0.0});
    const auto t = RadialTable::build(ff, 0.5, 41, 3.0, 121);
    for (int i : {0, 16})
        for (int j : {0, 28, 100}) {
            const double tau = 0.5 * i / 40, r = 3.0 * j / 120;
            const auto [Ab, Bb] = brute_AB(ff, tau, r);
            const auto [Ad, Bd] = radial::direct(ff, tau, r);
            EXPECT_NEAR(Ad, Ab, 1e-12);
            EXPECT_NEAR(Bd, Bb, 1e-12);
            // on grid nodes the table is exact up to quadrature
            EXPECT_NEAR(t.A_at(i, j), Ab, 1e-10);
            EXPECT_NEAR(t.B_at(i, j), Bb, 1e-10);
            const auto [A, B] = t.lookup(tau, r);
            EXPECT_NEAR(A, Ab, 1e-10);
            EXPECT_NEAR(B, Bb, 1e-10);
        }
}

TEST(Continuum, RefusesToExtrapolate)
{
    const auto& t = *shared_table();
    EXPECT_THROW(t.lookup(2.5, 1.0), extrapolation_error);
    EXPECT_THROW(t.lookup(1.0, 6.5), extrapolation_error);
    EXPECT_NO_THROW(t.lookup(-1.0, 1.0));
}

TEST(Continuum, CacheRoundTripAndMismatch)
{
    const auto ff = FormFactor::sharp(1.0);
    const auto t = RadialTable::build(ff, 0.5, 30, 2.0, 50);
    const auto path = (std::filesystem::temp_directory_path() / "fiberpath_cache_test.fpk").string();
    t.save(path);
    const auto u = RadialTable::load(path, ff, 0.5, 2.0);
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 50; ++j) {
            ASSERT_EQ(u.A_at(i, j), t.A_at(i, j));
            ASSERT_EQ(u.B_at(i, j), t.B_at(i, j));
        }
    EXPECT_THROW(RadialTable::load(path, FormFactor::sharp(1.1)), cache_mismatch);
    EXPECT_THROW(RadialTable::load(path, FormFactor::table({0.0, 1.0}, {1, 1})), cache_mismatch);
    EXPECT_THROW(RadialTable::load(path, ff, 1.0, 0.0), cache_mismatch);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.put('X');
    }
    EXPECT_THROW(RadialTable::load(path, ff), cache_mismatch);
    std::filesystem::remove(path);
    EXPECT_THROW(RadialTable::load(path, ff), cache_mismatch);
}

TEST(Continuum, ModeSumConvergesToContinuum)
{
    // fine spherical quadrature of the sharp cutoff reproduces the tabulated kernel
    const auto ff = FormFactor::sharp(1.0);
    const ModeSumKernel m(ModeSet::spherical_quadrature(1.0, 24, 24, 24), ff);
    const ContinuumKernel c(shared_table());
    for (const Eigen::Vector3d x : {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0.4, -1.0, 0.3)}) {
        const Eigen::MatrixXd d = m.eval(0.3, x) - c.eval(0.3, x);
        EXPECT_LE(d.cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Forms, ImaginaryPartExactlyZeroForRealFields)
{
    const auto s = ModeSet::spherical_quadrature(1.0, 2, 2, 3);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z;
    std::vector<Eigen::VectorXcd> hf, hg;
    for (std::size_t q = 0; q < s.pairs(); ++q) {
        Eigen::VectorXcd a(3), b(3);
        for (int i = 0; i < 3; ++i) {
            a(i) = cplx(z(rng), z(rng));
            b(i) = cplx(z(rng), z(rng));
        }
        hf.push_back(a);
        hg.push_back(b);
    }
    const auto f = KFunction::real_field(s, hf), g = KFunction::real_field(s, hg);
    EXPECT_EQ(q1_form(s, f, g, 0.2, 1.3).imag(), 0.0);
    EXPECT_EQ(q0_form(s, f, g).imag(), 0.0);
    EXPECT_NEAR(q1_form(s, f, g, 0.2, 1.3).real(), q1_form(s, g, f, 1.3, 0.2).real(), 1e-14);
}

TEST(Forms, OnePairByHand)
{
    const auto s = one_pair();
    Eigen::VectorXcd a(3), b(3);
    a << cplx(0.5, 0.1), 0.3, 2.0;
    b << 0.2, cplx(-1.0, 0.4), 7.0;
    const auto f = KFunction::real_field(s, {a}), g = KFunction::real_field(s, {b});
    // (1/2) [conj(a).P b + conj(conj a).P conj b] = Re(conj(a).P b), P = diag(1,1,0)
    const cplx ab = std::conj(a(0)) * b(0) + std::conj(a(1)) * b(1);
    EXPECT_NEAR(q0_form(s, f, g).real(), ab.real(), 1e-15);
    EXPECT_NEAR(q1_form(s, f, g, 0.0, 0.7).real(), ab.real() * std::exp(-0.7), 1e-15);
    EXPECT_NEAR(l2_norm_sq(s, f), 2 * a.squaredNorm(), 1e-14);
}

TEST(Forms, CovarianceOfTheFockField)
{
    // q0(f, f) = <Omega, A(f)^2 Omega> on the truncated Fock space
    const auto s = ModeSet::spherical_quadrature(1.0, 1, 2, 2);
    const auto ff = FormFactor::sharp(1.0);
    const FockModel m(s, ff, PolarizationBasis::meridian(), 2);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    std::vector<Eigen::VectorXcd> h;
    for (std::size_t q = 0; q < s.pairs(); ++q) {
        Eigen::VectorXcd a(3);
        for (int i = 0; i < 3; ++i) a(i) = cplx(z(rng), z(rng));
        h.push_back(a);
    }
    const auto f = KFunction::real_field(s, h);
    const Eigen::VectorXcd om = m.vacuum();
    const Eigen::VectorXcd v = m.field_operator(f) * om;
    EXPECT_NEAR(v.squaredNorm(), q0_form(s, f, f).real(), 1e-12);
}

TEST(Forms, SecondLayerFromOuEmbedding)
{
    // stationary OU xi_s = int_{-inf}^s sqrt2 e^{-(s-r)} dW(r): Cov = int_{-inf}^{min} 2 e^{-(s-r)} e^{-(s'-r)} dr
    auto ou = [](double s1, double s2) {
        using boost::math::quadrature::gauss_kronrod;
        const double m = std::min(s1, s2);
        auto f = [&](double y) { return 2.0 * std::exp(-(s1 - m + y)) * std::exp(-(s2 - m + y)); };
        return gauss_kronrod<double, 61>::integrate(f, 0.0, 60.0, 15, 1e-15);
    };
    const auto s = ModeSet::spherical_quadrature(1.0, 2, 2, 2);
    std::vector<Eigen::VectorXcd> h;
    for (std::size_t q = 0; q < s.pairs(); ++q) h.push_back(Eigen::VectorXcd::Constant(3, cplx(1.0 + q, -0.5)));
    const auto f = KFunction::real_field(s, h);
    for (auto [si, sj] : {std::pair{0.0, 0.0}, std::pair{0.3, 1.0}, std::pair{2.0, 0.5}}) {
        const cplx want = ou(si, sj) * q1_form(s, f, f, 0.1, 0.6);
        EXPECT_NEAR(q2_form(s, f, f, si, 0.1, sj, 0.6).real(), want.real(), 1e-9);
    }
}

TEST(NormKernel, SharpClosedForm)
{
    const auto g = NormKernel::continuum(FormFactor::sharp(2.0));
    // ||phi/sqrt(omega)||^2 = (2pi)^-3 4 pi Lambda^2 / 2
    EXPECT_NEAR(g.at_origin(), std::pow(2 * pi, -3) * 4 * pi * 2.0, 1e-14);
    // G(r) = (2pi)^-3 4 pi int_0^L k sin(kr)/(kr) dk
    const double r = 0.8;
    EXPECT_NEAR(g(r), std::pow(2 * pi, -3) * 4 * pi * (1 - std::cos(2.0 * r)) / (r * r), 1e-14);
    const auto tab = NormKernel::continuum(FormFactor::table({0.0, 2.0}, {std::pow(2 * pi, -1.5), std::pow(2 * pi, -1.5)}));
    EXPECT_NEAR(tab(r), g(r), 1e-12);
    EXPECT_NEAR(tab.at_origin(), g.at_origin(), 1e-12);
}

TEST(NormKernel, ModeSum)
{
    const auto g = NormKernel::mode_sum(one_pair(), unit_phi());
    EXPECT_DOUBLE_EQ(g.at_origin(), 2.0);
    const double x[3] = {0.0, 0.0, 0.5};
    EXPECT_NEAR(g.eval(x), 2.0 * std::cos(0.5), 1e-15);
}
