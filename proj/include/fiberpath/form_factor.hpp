#pragma once

#include "fiberpath/polarization.hpp"

#include <Eigen/Dense>
#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace fiberpath {

using cplx = std::complex<double>;

/**
 * Radial form factor phi(|k|). Real and even by construction.
 * sharp-cutoff: (2 pi)^{-d/2} for |k| < cutoff, else 0.
 * table: piecewise linear through (k_i, v_i), zero beyond the last node.
 */
struct FormFactor {
    enum class Kind { sharp_cutoff, table };

    Kind kind = Kind::sharp_cutoff;
    double cutoff = 1.0;
    int dim = 3;
    std::vector<double> nodes;
    std::vector<double> values;

    static FormFactor sharp(double lambda, int d = 3)
    {
        if (!(lambda > 0.0) || !std::isfinite(lambda))
            throw domain_error("FormFactor: cutoff must be positive and finite");
        if (d < 2) throw domain_error("FormFactor: dimension must be >= 2");
        FormFactor f;
        f.kind = Kind::sharp_cutoff;
        f.cutoff = lambda;
        f.dim = d;
        return f;
    }

    static FormFactor table(std::vector<double> k, std::vector<double> v, int d = 3)
    {
        if (k.size() < 2 || k.size() != v.size())
            throw domain_error("FormFactor: table needs >= 2 matching nodes");
        if (k.front() != 0.0) throw domain_error("FormFactor: table must start at |k| = 0");
        for (std::size_t i = 1; i < k.size(); ++i)
            if (!(k[i] > k[i - 1])) throw domain_error("FormFactor: table nodes must increase");
        for (double x : v)
            if (!std::isfinite(x)) throw domain_error("FormFactor: table values must be finite");
        if (d < 2) throw domain_error("FormFactor: dimension must be >= 2");
        FormFactor f;
        f.kind = Kind::table;
        f.cutoff = k.back();
        f.dim = d;
        f.nodes = std::move(k);
        f.values = std::move(v);
        return f;
    }

    double operator()(double kabs) const
    {
        if (kind == Kind::sharp_cutoff)
            return kabs < cutoff ? std::pow(2.0 * std::numbers::pi, -0.5 * dim) : 0.0;
        if (kabs > nodes.back()) return 0.0;
        auto it = std::upper_bound(nodes.begin(), nodes.end(), kabs);
        if (it == nodes.end()) return values.back();
        const std::size_t i = std::size_t(it - nodes.begin()) - 1;
        const double s = (kabs - nodes[i]) / (nodes[i + 1] - nodes[i]);
        return values[i] + s * (values[i + 1] - values[i]);
    }

    /** Breakpoints of |phi|^2 on [0, cutoff], for panel placement. */
    std::vector<double> breakpoints() const
    {
        if (kind == Kind::sharp_cutoff) return {0.0, cutoff};
        return nodes;
    }

    std::string kind_name() const { return kind == Kind::sharp_cutoff ? "sharp-cutoff" : "table"; }

    /** FNV-1a over the defining numbers; used to key kernel caches. */
    std::uint64_t fingerprint() const
    {
        std::uint64_t h = 1469598103934665603ull;
        auto eat = [&](const void* p, std::size_t n) {
            auto c = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) h = (h ^ c[i]) * 1099511628211ull;
        };
        const int k = int(kind);
        eat(&k, sizeof k);
        eat(&dim, sizeof dim);
        eat(&cutoff, sizeof cutoff);
        for (double x : nodes) eat(&x, sizeof x);
        for (double x : values) eat(&x, sizeof x);
        return h;
    }
};

/**
 * Finite k-space quadrature. Modes are stored in adjacent pairs
 * (2p, 2p+1) = (+k, -k) with equal weights, so the set is closed under k -> -k.
 */
class ModeSet {
public:
    enum class Provenance { continuum_quadrature, handcrafted };

    struct Mode {
        Eigen::VectorXd k;
        double w = 0;
        double omega = 0;
    };

    ModeSet() = default;
    explicit ModeSet(int d) : dim_(d) {}

    static ModeSet from_half(int d, const std::vector<Eigen::VectorXd>& half_k,
                             const std::vector<double>& weights,
                             Provenance prov = Provenance::handcrafted)
    {
        if (half_k.size() != weights.size())
            throw domain_error("ModeSet: one weight per half-mode required");
        ModeSet s(d);
        s.prov_ = prov;
        for (std::size_t i = 0; i < half_k.size(); ++i) {
            const auto& k = half_k[i];
            if (k.size() != d) throw domain_error("ModeSet: k has wrong dimension");
            const double om = k.norm();
            if (!(om > 0.0) || !std::isfinite(om)) throw domain_error("ModeSet: omega must be > 0");
            if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
                throw domain_error("ModeSet: weights must be > 0");
            s.modes_.push_back({k, weights[i], om});
            s.modes_.push_back({-k, weights[i], om});
        }
        return s;
    }

    /**
     * d = 3 product rule on the ball |k| < kmax: Gauss-Legendre in |k| and cos(theta),
     * uniform in phi. Half-set phi in [0, pi); partners supply phi + pi.
     */
    static ModeSet spherical_quadrature(double kmax, int n_r, int n_theta, int n_phi);

    int dim() const { return dim_; }
    Provenance provenance() const { return prov_; }
    std::size_t size() const { return modes_.size(); }
    std::size_t pairs() const { return modes_.size() / 2; }
    bool empty() const { return modes_.empty(); }
    const Mode& operator[](std::size_t m) const { return modes_[m]; }
    const std::vector<Mode>& modes() const { return modes_; }

private:
    int dim_ = 3;
    Provenance prov_ = Provenance::handcrafted;
    std::vector<Mode> modes_;
};

namespace detail {
/** Gauss-Legendre nodes and weights on [-1, 1] for runtime n. */
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w)
{
    // boost returns the nonnegative zeros in ascending order
    const auto pos = boost::math::legendre_p_zeros<double>(n);
    x.clear();
    for (auto it = pos.rbegin(); it != pos.rend(); ++it)
        if (*it != 0.0) x.push_back(-*it);
    for (double z : pos) x.push_back(z);
    w.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dp = boost::math::legendre_p_prime(n, x[i]);
        w[i] = 2.0 / ((1.0 - x[i] * x[i]) * dp * dp);
    }
}
}  // namespace detail

inline ModeSet ModeSet::spherical_quadrature(double kmax, int n_r, int n_theta, int n_phi)
{
    if (n_r < 1 || n_theta < 1 || n_phi < 1 || !(kmax > 0))
        throw domain_error("spherical_quadrature: bad resolution");
    std::vector<double> xr, wr, xt, wt;
    detail::gauss_legendre(n_r, xr, wr);
    detail::gauss_legendre(n_theta, xt, wt);
    std::vector<Eigen::VectorXd> ks;
    std::vector<double> ws;
    const double dphi = std::numbers::pi / n_phi;
    for (int a = 0; a < n_r; ++a) {
        const double r = 0.5 * kmax * (xr[a] + 1.0);
        const double wrad = 0.5 * kmax * wr[a] * r * r;
        for (int b = 0; b < n_theta; ++b) {
            const double ct = xt[b], st = std::sqrt(1.0 - ct * ct);
            for (int c = 0; c < n_phi; ++c) {
                const double ph = (c + 0.5) * dphi;
                Eigen::VectorXd k(3);
                k << r * st * std::cos(ph), r * st * std::sin(ph), r * ct;
                ks.push_back(k);
                ws.push_back(wrad * wt[b] * dphi);
            }
        }
    }
    return from_half(3, ks, ws, Provenance::continuum_quadrature);
}

/**
 * A d-tuple of k-space test functions sampled on a ModeSet: one complex
 * d-vector per mode.
 */
struct KFunction {
    std::vector<Eigen::VectorXcd> values;

    static KFunction zero(const ModeSet& s)
    {
        return {std::vector<Eigen::VectorXcd>(s.size(), Eigen::VectorXcd::Zero(s.dim()))};
    }

    /** Values on the +k members; -k members get the conjugate (a real field). */
    static KFunction real_field(const ModeSet& s, const std::vector<Eigen::VectorXcd>& half)
    {
        if (half.size() != s.pairs()) throw domain_error("KFunction: one value per pair required");
        KFunction f;
        for (const auto& v : half) {
            if (v.size() != s.dim()) throw domain_error("KFunction: value has wrong dimension");
            f.values.push_back(v);
            f.values.push_back(v.conjugate());
        }
        return f;
    }

    bool is_real_field() const
    {
        if (values.size() % 2) return false;
        for (std::size_t p = 0; p < values.size(); p += 2)
            if (values[p + 1] != values[p].conjugate()) return false;
        return true;
    }

    void check(const ModeSet& s) const
    {
        if (values.size() != s.size())
            throw domain_error("KFunction: sampled on a different mode set");
        for (const auto& v : values)
            if (v.size() != s.dim()) throw domain_error("KFunction: value has wrong dimension");
    }
};

}  // namespace fiberpath
