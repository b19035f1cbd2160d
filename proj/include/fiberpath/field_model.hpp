#pragma once

#include "fiberpath/form_factor.hpp"
#include "fiberpath/radial_table.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <memory>
#include <numbers>
#include <variant>
#include <vector>

namespace fiberpath {

/** Mode data flattened for hot loops: one entry per +-k pair. */
struct ModeTable {
    int dim = 3;
    std::size_t n = 0;
    std::vector<double> k;      // n * dim, the +k member
    std::vector<double> omega;  // n
    std::vector<double> c;      // (1/2) w |phi|^2 / omega, per single mode
    std::vector<double> proj;   // n * dim * dim, delta_perp(k), row-major
    std::vector<double> w;      // quadrature weight
    std::vector<double> wphi;   // w phi / sqrt(omega), weight of K-f couplings

    ModeTable() = default;
    ModeTable(const ModeSet& s, const FormFactor& ff) : dim(s.dim()), n(s.pairs())
    {
        if (ff.dim != s.dim()) throw domain_error("ModeTable: form factor and mode set dimensions differ");
        k.resize(n * dim);
        omega.resize(n);
        c.resize(n);
        w.resize(n);
        wphi.resize(n);
        proj.resize(n * dim * dim);
        for (std::size_t p = 0; p < n; ++p) {
            const auto& m = s[2 * p];
            const double ph = ff(m.omega);
            for (int a = 0; a < dim; ++a) k[p * dim + a] = m.k[a];
            omega[p] = m.omega;
            c[p] = 0.5 * m.w * ph * ph / m.omega;
            w[p] = m.w;
            wphi[p] = m.w * ph / std::sqrt(m.omega);
            const Eigen::MatrixXd pr = transverse_projector(m.k);
            for (int a = 0; a < dim; ++a)
                for (int b = 0; b < dim; ++b) proj[(p * dim + a) * dim + b] = pr(a, b);
        }
    }

    double kdot(std::size_t p, const double* x) const
    {
        double s = 0;
        for (int a = 0; a < dim; ++a) s += k[p * dim + a] * x[a];
        return s;
    }
};

/** Pair kernel realized as a finite sum over +-k pairs. */
class ModeSumKernel {
public:
    ModeSumKernel(const ModeSet& s, const FormFactor& ff) : t_(s, ff) {}

    int dim() const { return t_.dim; }
    const ModeTable& table() const { return t_; }

    Eigen::MatrixXd eval(double tau, const Eigen::VectorXd& x) const
    {
        const int d = t_.dim;
        if (x.size() != d) throw domain_error("eval_kernel: x has wrong dimension");
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d);
        for (std::size_t p = 0; p < t_.n; ++p) {
            // +k and -k give the same cosine; count the pair once with weight 2
            const double f = 2.0 * t_.c[p] * std::exp(-std::abs(tau) * t_.omega[p]) *
                             std::cos(t_.kdot(p, x.data()));
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) w(a, b) += f * t_.proj[(p * d + a) * d + b];
        }
        return w;
    }

    /** tr W(0,0) = (1/2) sum (d-1) |phi|^2 / omega. */
    double trace_at_origin() const
    {
        double s = 0;
        for (std::size_t p = 0; p < t_.n; ++p) s += 2.0 * t_.c[p] * (t_.dim - 1);
        return s;
    }

private:
    ModeTable t_;
};

/** Continuum d = 3 kernel from a radial table. */
class ContinuumKernel {
public:
    explicit ContinuumKernel(std::shared_ptr<const RadialTable> t) : t_(std::move(t)) {}

    int dim() const { return 3; }
    const RadialTable& table() const { return *t_; }

    Eigen::MatrixXd eval(double tau, const Eigen::VectorXd& x) const
    {
        if (x.size() != 3) throw domain_error("eval_kernel: x has wrong dimension");
        const double r = x.norm();
        const auto [A, B] = t_->lookup(tau, r);
        Eigen::MatrixXd w = A * Eigen::MatrixXd::Identity(3, 3);
        if (r > 0) w += B * (x * x.transpose()) / (r * r);
        return w;
    }

    /** Contraction u^T W v without forming W. */
    double contract(double tau, const double* x, const double* u, const double* v) const
    {
        const double r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        const double r = std::sqrt(r2);
        const auto [A, B] = t_->lookup(tau, r);
        double s = A * (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]);
        if (r2 > 0)
            s += B * (u[0] * x[0] + u[1] * x[1] + u[2] * x[2]) * (v[0] * x[0] + v[1] * x[1] + v[2] * x[2]) / r2;
        return s;
    }

    double trace_at_origin() const
    {
        return 3.0 * t_->lookup(0.0, 0.0).first;
    }

private:
    std::shared_ptr<const RadialTable> t_;
};

/** W_ab(tau, x) = (1/2) sum_or_int delta_perp_ab |phi|^2/omega e^{-|tau| omega} cos(k.x). */
class PairKernel {
public:
    PairKernel(ModeSumKernel k) : v_(std::move(k)) {}
    PairKernel(ContinuumKernel k) : v_(std::move(k)) {}

    static PairKernel mode_sum(const ModeSet& s, const FormFactor& ff) { return ModeSumKernel(s, ff); }
    static PairKernel continuum(const FormFactor& ff, double tau_max, double r_max)
    {
        return ContinuumKernel(std::make_shared<const RadialTable>(RadialTable::build(ff, tau_max, r_max)));
    }

    bool is_mode_sum() const { return std::holds_alternative<ModeSumKernel>(v_); }
    const ModeSumKernel& as_mode_sum() const { return std::get<ModeSumKernel>(v_); }
    const ContinuumKernel& as_continuum() const { return std::get<ContinuumKernel>(v_); }

    int dim() const
    {
        return std::visit([](const auto& k) { return k.dim(); }, v_);
    }
    Eigen::MatrixXd eval(double tau, const Eigen::VectorXd& x) const
    {
        return std::visit([&](const auto& k) { return k.eval(tau, x); }, v_);
    }
    double trace_at_origin() const
    {
        return std::visit([](const auto& k) { return k.trace_at_origin(); }, v_);
    }

private:
    std::variant<ModeSumKernel, ContinuumKernel> v_;
};

inline Eigen::MatrixXd eval_kernel(const PairKernel& k, double tau, const Eigen::VectorXd& x)
{
    return k.eval(tau, x);
}

/** E[q1(K^[0,t], K^[0,t])] = t tr W(0,0). */
inline double ito_isometry_mean(const PairKernel& k, double t)
{
    if (t < 0) throw domain_error("ito_isometry_mean: t must be >= 0");
    return t * k.trace_at_origin();
}

namespace detail {
inline cplx pair_term(const ModeSet& s, std::size_t m, const Eigen::VectorXcd& f,
                      const Eigen::VectorXcd& g)
{
    const Eigen::MatrixXd p = transverse_projector(s[m].k);
    return 0.5 * s[m].w * f.dot(p * g);  // Eigen's dot conjugates the left factor
}
}  // namespace detail

/**
 * q1(j_t f, j_t' g) = (1/2) sum w conj(f)^T delta_perp g e^{-|t-t'| omega}.
 * With decay 0 this is q0. When both arguments are real fields the -k term is
 * the conjugate of the +k term, so only 2 Re(+k term) is accumulated and the
 * imaginary part is exactly zero.
 */
inline cplx q1_form(const ModeSet& s, const KFunction& f, const KFunction& g, double t = 0,
                    double tp = 0)
{
    f.check(s);
    g.check(s);
    const double dt = std::abs(t - tp);
    const bool real = f.is_real_field() && g.is_real_field();
    cplx sum = 0;
    for (std::size_t p = 0; p < s.pairs(); ++p) {
        const double decay = dt == 0 ? 1.0 : std::exp(-dt * s[2 * p].omega);
        const cplx a = detail::pair_term(s, 2 * p, f.values[2 * p], g.values[2 * p]);
        if (real) {
            sum += 2.0 * a.real() * decay;
        } else {
            const cplx b = detail::pair_term(s, 2 * p + 1, f.values[2 * p + 1], g.values[2 * p + 1]);
            sum += (a + b) * decay;
        }
    }
    return sum;
}

inline cplx q0_form(const ModeSet& s, const KFunction& f, const KFunction& g)
{
    return q1_form(s, f, g, 0, 0);
}

/** Second Euclidean layer (h = 1): q2(xi_s j_t f, xi_s' j_t' g) = e^{-|s-s'|} q1(...). */
inline cplx q2_form(const ModeSet& s, const KFunction& f, const KFunction& g, double si, double ti,
                    double sj, double tj)
{
    return std::exp(-std::abs(si - sj)) * q1_form(s, f, g, ti, tj);
}

/** ||f||^2 = sum w |f|^2 and ||f / sqrt(omega)||^2 on the mode set. */
inline double l2_norm_sq(const ModeSet& s, const KFunction& f, double omega_power = 0)
{
    f.check(s);
    double n = 0;
    for (std::size_t m = 0; m < s.size(); ++m)
        n += s[m].w * f.values[m].squaredNorm() * std::pow(s[m].omega, omega_power);
    return n;
}

/**
 * Scalar kernel of the field-valued integral int phi(. - b(s)) db_mu(s):
 * G(x) = sum_or_int |phi|^2 / omega cos(k.x), so G(0) = ||phi / sqrt(omega)||^2.
 */
class NormKernel {
public:
    static NormKernel continuum(const FormFactor& ff)
    {
        if (ff.dim != 3) throw domain_error("NormKernel: continuum form requires d = 3");
        NormKernel n;
        n.ff_ = ff;
        n.continuum_ = true;
        return n;
    }
    static NormKernel mode_sum(const ModeSet& s, const FormFactor& ff)
    {
        NormKernel n;
        n.ff_ = ff;
        n.t_ = ModeTable(s, ff);
        return n;
    }

    double operator()(double r) const { return eval_radial(r); }

    double eval(const double* x) const
    {
        if (continuum_) return eval_radial(std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
        double g = 0;
        for (std::size_t p = 0; p < t_.n; ++p) g += 4.0 * t_.c[p] * std::cos(t_.kdot(p, x));
        return g;
    }

    double at_origin() const
    {
        if (!continuum_) {
            double g = 0;
            for (std::size_t p = 0; p < t_.n; ++p) g += 4.0 * t_.c[p];
            return g;
        }
        return eval_radial(0.0);
    }

private:
    double eval_radial(double r) const
    {
        constexpr double pi = std::numbers::pi;
        if (ff_.kind == FormFactor::Kind::sharp_cutoff) {
            const double L = ff_.cutoff, c = std::pow(2 * pi, -3.0) * 4 * pi;
            const double z = L * r;
            // (1 - cos z) / r^2, with the series near 0
            if (z < 1e-3) return c * L * L * (0.5 - z * z / 24.0);
            return c * (1.0 - std::cos(z)) / (r * r);
        }
        using boost::math::quadrature::gauss_kronrod;
        const auto bp = ff_.breakpoints();
        double g = 0;
        for (std::size_t i = 0; i + 1 < bp.size(); ++i) {
            auto f = [&](double k) {
                const double z = k * r, p = ff_(k);
                const double j0 = z < 1e-4 ? 1.0 - z * z / 6.0 : std::sin(z) / z;
                return k * p * p * j0;
            };
            g += gauss_kronrod<double, 31>::integrate(f, bp[i], bp[i + 1], 15, 1e-13);
        }
        return 4 * pi * g;
    }

    FormFactor ff_;
    bool continuum_ = false;
    ModeTable t_;
};

}  // namespace fiberpath
