#pragma once

#include "fiberpath/form_factor.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

namespace fiberpath {

struct extrapolation_error : domain_error {
    using domain_error::domain_error;
};

struct cache_mismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace radial {

// Angular averages over the sphere, z = |k| r:
//   a(z) = j0(z) - j1(z)/z,  b(z) = j2(z)
// so that <delta_perp(k) cos(k.x)> = a I + b xhat xhat^T.
inline double ang_a(double z)
{
    if (z < 0.1) {
        const double z2 = z * z;
        return 2.0 / 3.0 + z2 * (-2.0 / 15.0 + z2 * (1.0 / 140.0 - z2 / 5670.0));
    }
    const double s = std::sin(z), c = std::cos(z);
    return s / z - (s / (z * z) - c / z) / z;
}

inline double ang_b(double z)
{
    if (z < 0.1) {
        const double z2 = z * z;
        return z2 * (1.0 / 15.0 + z2 * (-1.0 / 210.0 + z2 / 7560.0));
    }
    const double s = std::sin(z), c = std::cos(z);
    return (3.0 / (z * z) - 1.0) * s / z - 3.0 * c / (z * z);
}

/** Prefactor (1/2)(4 pi) of the radial reduction; |phi|^2 carries the (2 pi)^-3. */
inline constexpr double prefactor = 2.0 * std::numbers::pi;

/**
 * Independent evaluation of A(tau, r), B(tau, r) by adaptive Gauss-Kronrod
 * on each smooth piece of |phi|^2.
 */
inline std::pair<double, double> direct(const FormFactor& ff, double tau, double r)
{
    using boost::math::quadrature::gauss_kronrod;
    const auto bp = ff.breakpoints();
    double A = 0, B = 0;
    for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
        const double lo = bp[i], hi = bp[i + 1];
        const double mid = 0.5 * (lo + hi);
        const double phi_mid = ff(mid);
        auto phi2 = [&](double k) {
            // sharp cutoff is constant on the open panel; avoid the endpoint jump
            const double p = ff.kind == FormFactor::Kind::sharp_cutoff ? phi_mid : ff(k);
            return p * p;
        };
        auto fa = [&](double k) { return k * phi2(k) * std::exp(-tau * k) * ang_a(k * r); };
        auto fb = [&](double k) { return k * phi2(k) * std::exp(-tau * k) * ang_b(k * r); };
        A += gauss_kronrod<double, 31>::integrate(fa, lo, hi, 15, 1e-13);
        B += gauss_kronrod<double, 31>::integrate(fb, lo, hi, 15, 1e-13);
    }
    return {prefactor * A, prefactor * B};
}

}  // namespace radial

/**
 * W(tau, x) = A(tau, r) I + B(tau, r) xhat xhat^T for the continuum d = 3
 * isotropic model, tabulated on a uniform (tau, r) grid with bilinear lookup.
 */
class RadialTable {
public:
    static constexpr std::uint32_t format_version = 1;

    RadialTable() = default;

    /**
     * Grid step h = 2.5e-3 / kmax in both variables keeps the bilinear error
     * (h^2/8)(|A_tt| + |A_rr|) under 1e-6 of the peak A(0,0).
     */
    static RadialTable build(const FormFactor& ff, double tau_max, double r_max)
    {
        if (ff.dim != 3) throw domain_error("RadialTable: continuum reduction requires d = 3");
        if (!(tau_max > 0) || !(r_max > 0)) throw domain_error("RadialTable: bad range");
        const double h = 2.5e-3 / ff.cutoff;
        const int nt = int(std::ceil(tau_max / h)) + 1;
        const int nr = int(std::ceil(r_max / h)) + 1;
        return build(ff, tau_max, nt, r_max, nr);
    }

    static RadialTable build(const FormFactor& ff, double tau_max, int n_tau, double r_max, int n_r)
    {
        if (n_tau < 2 || n_r < 2) throw domain_error("RadialTable: need >= 2 nodes per axis");
        RadialTable t;
        t.ff_ = ff;
        t.tau_max_ = tau_max;
        t.r_max_ = r_max;
        t.nt_ = n_tau;
        t.nr_ = n_r;
        t.A_.assign(std::size_t(n_tau) * n_r, 0.0);
        t.B_.assign(std::size_t(n_tau) * n_r, 0.0);

        // composite 20-point Gauss-Legendre; double panels until stable
        int panels = std::max(4, int(std::ceil(ff.cutoff * (r_max + tau_max) / 2.0)));
        for (;;) {
            const auto coarse = t.panel_probe(panels);
            const auto fine = t.panel_probe(2 * panels);
            double err = 0;
            for (std::size_t i = 0; i < coarse.size(); ++i)
                err = std::max(err, std::abs(coarse[i] - fine[i]));
            const double scale = std::abs(fine[0]);
            if (err <= std::max(1e-10, 1e-8 * scale) * 1e-2 || panels > 4096) break;
            panels *= 2;
        }
        t.fill(panels);
        return t;
    }

    double tau_max() const { return tau_max_; }
    double r_max() const { return r_max_; }
    int n_tau() const { return nt_; }
    int n_r() const { return nr_; }
    const FormFactor& form_factor() const { return ff_; }
    double A_at(int i, int j) const { return A_[std::size_t(i) * nr_ + j]; }
    double B_at(int i, int j) const { return B_[std::size_t(i) * nr_ + j]; }

    /** Bilinear lookup; outside the tabulated rectangle it refuses. */
    std::pair<double, double> lookup(double tau, double r) const
    {
        tau = std::abs(tau);
        if (tau > tau_max_ * (1 + 1e-12) || r > r_max_ * (1 + 1e-12) || r < 0)
            throw extrapolation_error("RadialTable: (tau, r) = (" + std::to_string(tau) + ", " +
                                      std::to_string(r) + ") outside the tabulated region");
        const double x = tau / tau_max_ * (nt_ - 1);
        const double y = r / r_max_ * (nr_ - 1);
        int i = std::min(int(x), nt_ - 2);
        int j = std::min(int(y), nr_ - 2);
        const double fx = x - i, fy = y - j;
        auto bil = [&](const std::vector<double>& v) {
            const double* p = v.data() + std::size_t(i) * nr_ + j;
            const double* q = p + nr_;
            return (1 - fx) * ((1 - fy) * p[0] + fy * p[1]) + fx * ((1 - fy) * q[0] + fy * q[1]);
        };
        return {bil(A_), bil(B_)};
    }

    // Binary cache: magic, version, d, kind, fingerprint, cutoff, grids, then A and B row-major.
    void save(const std::string& path) const
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("cannot write kernel cache " + path);
        save(os);
        if (!os) throw std::runtime_error("short write on kernel cache " + path);
    }

    void save(std::ostream& os) const
    {
        os.write(magic, 8);
        put(os, format_version);
        put(os, std::int32_t(ff_.dim));
        put(os, std::int32_t(ff_.kind));
        put(os, ff_.fingerprint());
        put(os, ff_.cutoff);
        put(os, tau_max_);
        put(os, std::int32_t(nt_));
        put(os, r_max_);
        put(os, std::int32_t(nr_));
        os.write(reinterpret_cast<const char*>(A_.data()), std::streamsize(A_.size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(B_.data()), std::streamsize(B_.size() * sizeof(double)));
    }

    /** Refuses when the header disagrees with ff or the grid does not cover the request. */
    static RadialTable load(const std::string& path, const FormFactor& ff, double tau_need = 0,
                            double r_need = 0)
    {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw cache_mismatch("cannot open kernel cache " + path);
        char m[8];
        is.read(m, 8);
        if (!is || std::memcmp(m, magic, 8) != 0) throw cache_mismatch("not a kernel cache: " + path);
        if (get<std::uint32_t>(is) != format_version) throw cache_mismatch("kernel cache version mismatch");
        const auto d = get<std::int32_t>(is);
        const auto kind = get<std::int32_t>(is);
        const auto fp = get<std::uint64_t>(is);
        const auto cut = get<double>(is);
        if (d != ff.dim || kind != int(ff.kind) || fp != ff.fingerprint() || cut != ff.cutoff)
            throw cache_mismatch("kernel cache was built for a different form factor");
        RadialTable t;
        t.ff_ = ff;
        t.tau_max_ = get<double>(is);
        t.nt_ = get<std::int32_t>(is);
        t.r_max_ = get<double>(is);
        t.nr_ = get<std::int32_t>(is);
        if (!is || t.nt_ < 2 || t.nr_ < 2 || t.nt_ > (1 << 24) || t.nr_ > (1 << 24))
            throw cache_mismatch("corrupt kernel cache header");
        if (t.tau_max_ < tau_need || t.r_max_ < r_need)
            throw cache_mismatch("kernel cache does not cover the requested range");
        const std::size_t n = std::size_t(t.nt_) * t.nr_;
        t.A_.resize(n);
        t.B_.resize(n);
        is.read(reinterpret_cast<char*>(t.A_.data()), std::streamsize(n * sizeof(double)));
        is.read(reinterpret_cast<char*>(t.B_.data()), std::streamsize(n * sizeof(double)));
        if (!is) throw cache_mismatch("truncated kernel cache");
        return t;
    }

private:
    static constexpr char magic[8] = {'F', 'P', 'K', 'T', 'A', 'B', 'L', '\0'};

    template <class T>
    static void put(std::ostream& os, T v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
    template <class T>
    static T get(std::istream& is)
    {
        T v{};
        is.read(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }

    struct Nodes {
        std::vector<double> k, wk;  // k, weight * k * |phi|^2
    };

    Nodes nodes(int panels) const
    {
        using G = boost::math::quadrature::gauss<double, 20>;
        const auto& ab = G::abscissa();
        const auto& wt = G::weights();
        Nodes n;
        const auto bp = ff_.breakpoints();
        for (std::size_t s = 0; s + 1 < bp.size(); ++s) {
            const double lo = bp[s], hi = bp[s + 1];
            const double mid_phi = ff_(0.5 * (lo + hi));
            const double w = (hi - lo) / panels;
            for (int p = 0; p < panels; ++p) {
                const double c = lo + (p + 0.5) * w, half = 0.5 * w;
                auto push = [&](double x, double wx) {
                    const double k = c + half * x;
                    const double ph = ff_.kind == FormFactor::Kind::sharp_cutoff ? mid_phi : ff_(k);
                    n.k.push_back(k);
                    n.wk.push_back(half * wx * k * ph * ph);
                };
                // boost stores the nonnegative half of a symmetric rule
                for (std::size_t i = 0; i < ab.size(); ++i) {
                    push(ab[i], wt[i]);
                    if (ab[i] != 0.0) push(-ab[i], wt[i]);
                }
            }
        }
        return n;
    }

    /** A at a few stress points, used to pick the panel count. */
    std::vector<double> panel_probe(int panels) const
    {
        const Nodes n = nodes(panels);
        std::vector<double> out;
        for (double r : {0.0, 0.5 * r_max_, r_max_}) {
            double a = 0, b = 0;
            for (std::size_t q = 0; q < n.k.size(); ++q) {
                a += n.wk[q] * radial::ang_a(n.k[q] * r);
                b += n.wk[q] * radial::ang_b(n.k[q] * r);
            }
            out.push_back(radial::prefactor * a);
            out.push_back(radial::prefactor * b);
        }
        return out;
    }

    void fill(int panels)
    {
        const Nodes n = nodes(panels);
        const std::size_t nq = n.k.size();
        std::vector<double> et(std::size_t(nt_) * nq);
        for (int i = 0; i < nt_; ++i) {
            const double tau = tau_max_ * i / (nt_ - 1);
            for (std::size_t q = 0; q < nq; ++q)
                et[i * nq + q] = radial::prefactor * n.wk[q] * std::exp(-tau * n.k[q]);
        }
        std::vector<double> ja(nq), jb(nq);
        for (int j = 0; j < nr_; ++j) {
            const double r = r_max_ * j / (nr_ - 1);
            for (std::size_t q = 0; q < nq; ++q) {
                ja[q] = radial::ang_a(n.k[q] * r);
                jb[q] = radial::ang_b(n.k[q] * r);
            }
            for (int i = 0; i < nt_; ++i) {
                const double* e = et.data() + i * nq;
                double a = 0, b = 0;
                for (std::size_t q = 0; q < nq; ++q) {
                    a += e[q] * ja[q];
                    b += e[q] * jb[q];
                }
                A_[std::size_t(i) * nr_ + j] = a;
                B_[std::size_t(i) * nr_ + j] = b;
            }
        }
    }

    FormFactor ff_;
    double tau_max_ = 0, r_max_ = 0;
    int nt_ = 0, nr_ = 0;
    std::vector<double> A_, B_;
};

}  // namespace fiberpath
