#pragma once

#include "fiberpath/field_model.hpp"
#include "fiberpath/paths.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

namespace fiberpath {

/**
 * Diagonal (i = j) terms of a double stochastic sum.
 * realized_increments keeps db_a(i) db_b(i); deterministic_qv replaces it by
 * its quadratic-variation limit delta_ab ds.
 */
enum class DiagonalRule { realized_increments, deterministic_qv };

inline const char* to_string(DiagonalRule r)
{
    return r == DiagonalRule::realized_increments ? "realized-increments" : "deterministic-qv";
}

struct ActionConfig {
    DiagonalRule rule = DiagonalRule::deterministic_qv;
    double e = 0;
    const PairKernel* kernel = nullptr;
};

struct Interval {
    double a = 0, b = 0;
};

namespace detail {

inline std::pair<int, int> grid_range(const BrownianPath& p, Interval I)
{
    const int i0 = p.grid().index_of(I.a), i1 = p.grid().index_of(I.b);
    if (i1 < i0) throw domain_error("interval end precedes its start");
    return {i0, i1};
}

// db_i^T W(s_i - s_j, b_i - b_j) db_j, alpha outer, beta inner
inline double pair_value(const PairKernel& k, const BrownianPath& p, int i, int j)
{
    const int d = p.dim();
    const double tau = p.grid().time(i) - p.grid().time(j);
    const double* bi = p.position_row(i);
    const double* bj = p.position_row(j);
    const double* ui = p.increment_row(i);
    const double* uj = p.increment_row(j);
    double x[16];
    for (int a = 0; a < d; ++a) x[a] = bi[a] - bj[a];
    if (k.is_mode_sum()) {
        const ModeTable& t = k.as_mode_sum().table();
        double s = 0;
        for (std::size_t q = 0; q < t.n; ++q) {
            const double f = 2.0 * t.c[q] * std::exp(-std::abs(tau) * t.omega[q]) * std::cos(t.kdot(q, x));
            double c = 0;
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) c += ui[a] * t.proj[(q * d + a) * d + b] * uj[b];
            s += f * c;
        }
        return s;
    }
    return k.as_continuum().contract(tau, x, ui, uj);
}

}  // namespace detail

/**
 * Discretized q1(K^I1, K^I2): sum over s_i in I1 (outer), s_j in I2 (inner) of
 * db(i)^T W(s_i - s_j, b(s_i) - b(s_j)) db(j), left-endpoint evaluation. This is the
 * direct O(n^2) evaluator; it works for every kernel and serves as the reference
 * for the fast mode-sum path. The pair of intervals is visited in a canonical
 * order so q1_double(I1, I2) == q1_double(I2, I1) bit for bit.
 */
inline double q1_double(const BrownianPath& p, Interval I1, Interval I2, const PairKernel& k,
                        DiagonalRule rule = DiagonalRule::realized_increments)
{
    if (k.dim() != p.dim()) throw domain_error("q1_double: kernel and path dimensions differ");
    auto r1 = detail::grid_range(p, I1);
    auto r2 = detail::grid_range(p, I2);
    if (r2 < r1) std::swap(r1, r2);
    const double qv = p.grid().dt() * k.trace_at_origin();
    double s = 0;
    for (int i = r1.first; i < r1.second; ++i)
        for (int j = r2.first; j < r2.second; ++j) {
            if (i == j && rule == DiagonalRule::deterministic_qv)
                s += qv;
            else
                s += detail::pair_value(k, p, i, j);
        }
    return s;
}

/**
 * Per-path cache for mode-sum kernels: u_i = db(i) e^{i k.b(s_i)} for every +k.
 * All block forms come out of it in O(n * modes).
 */
class ModePathForms {
public:
    ModePathForms(const ModeTable& t, const BrownianPath& p) : t_(&t), p_(&p)
    {
        if (t.dim != p.dim()) throw domain_error("mode table and path dimensions differ");
        const int n = p.n_steps(), d = p.dim();
        u_.resize(t.n * std::size_t(n) * d);
        decay_.resize(t.n);
        for (std::size_t q = 0; q < t.n; ++q) {
            decay_[q] = std::exp(-t.omega[q] * p.grid().dt());
            for (int i = 0; i < n; ++i) {
                const double ph = t.kdot(q, p.position_row(i));
                const cplx e(std::cos(ph), std::sin(ph));
                const double* db = p.increment_row(i);
                for (int a = 0; a < d; ++a) u_[(q * n + i) * d + a] = db[a] * e;
            }
        }
    }

    /**
     * Q(j, l) = q1(K^{[n_j, n_{j+1})}, K^{[n_l, n_{l+1})}) for grid-index boundaries
     * 0 <= n_0 < n_1 < ... ; symmetric.
     */
    Eigen::MatrixXd blocks(const std::vector<int>& bnd, DiagonalRule rule) const
    {
        const int nb = int(bnd.size()) - 1;
        const int n = p_->n_steps(), d = p_->dim();
        if (nb < 1 || bnd.front() < 0 || bnd.back() > n)
            throw domain_error("block boundaries outside the path grid");
        for (int j = 0; j < nb; ++j)
            if (bnd[j + 1] <= bnd[j]) throw domain_error("block boundaries must increase");

        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nb, nb);
        std::vector<cplx> S(d), L(std::size_t(nb) * d), R(std::size_t(nb) * d), Pu(d);
        for (std::size_t q = 0; q < t_->n; ++q) {
            const double c = t_->c[q], om = t_->omega[q], g = decay_[q];
            const double* P = t_->proj.data() + q * d * d;
            const cplx* u = u_.data() + q * std::size_t(n) * d;
            for (int j = 0; j < nb; ++j) {
                std::fill(S.begin(), S.end(), cplx(0));
                cplx* Lj = L.data() + std::size_t(j) * d;
                cplx* Rj = R.data() + std::size_t(j) * d;
                std::fill(Lj, Lj + d, cplx(0));
                std::fill(Rj, Rj + d, cplx(0));
                double diag = 0;
                cplx off = 0;
                double wl = 1.0;  // e^{-omega (s_i - s_start)}
                for (int i = bnd[j]; i < bnd[j + 1]; ++i) {
                    const cplx* ui = u + std::size_t(i) * d;
                    for (int a = 0; a < d; ++a) {
                        cplx s = 0;
                        for (int b = 0; b < d; ++b) s += P[a * d + b] * ui[b];
                        Pu[a] = s;
                    }
                    for (int a = 0; a < d; ++a) {
                        diag += std::real(Pu[a] * std::conj(ui[a]));
                        off += Pu[a] * S[a];
                        Lj[a] += wl * Pu[a];
                    }
                    for (int a = 0; a < d; ++a) {
                        S[a] = g * (S[a] + std::conj(ui[a]));
                        Rj[a] = g * Rj[a] + std::conj(ui[a]);
                    }
                    wl *= g;
                }
                // R accumulates e^{-omega (s_last - s_i)}; one more step reaches s_end
                for (int a = 0; a < d; ++a) Rj[a] *= g;
                const double dq = rule == DiagonalRule::realized_increments ? diag : 0.0;
                Q(j, j) += 2.0 * c * (dq + 2.0 * off.real());
                for (int l = 0; l < j; ++l) {
                    const double gap = p_->grid().time(bnd[j]) - p_->grid().time(bnd[l + 1]);
                    const cplx* Rl = R.data() + std::size_t(l) * d;
                    cplx x = 0;
                    for (int a = 0; a < d; ++a) x += Lj[a] * Rl[a];
                    const double v = 2.0 * c * std::exp(-om * gap) * x.real();
                    Q(j, l) += v;
                }
            }
        }
        for (int j = 0; j < nb; ++j) {
            if (rule == DiagonalRule::deterministic_qv) {
                double tr = 0;
                for (std::size_t q = 0; q < t_->n; ++q) tr += 2.0 * t_->c[q] * (d - 1);
                Q(j, j) += (bnd[j + 1] - bnd[j]) * p_->grid().dt() * tr;
            }
            for (int l = 0; l < j; ++l) Q(l, j) = Q(j, l);
        }
        return Q;
    }

    /**
     * q1(K^{[i0, i1)}, f^{s_l}) with f^{s_l} = j_{s_l} f(. - b(s_l)), f a real field
     * given by its +k values: (1/2) sum_i sum_k w phi/sqrt(omega) db_i^T delta_perp f(k)
     * e^{i k.(b_i - b_l)} e^{-|s_i - s_l| omega}.
     */
    double coupling(int i0, int i1, const std::vector<Eigen::VectorXcd>& f_half, int il) const
    {
        const int n = p_->n_steps(), d = p_->dim();
        if (f_half.size() != t_->n) throw domain_error("coupling: test function has wrong size");
        double total = 0;
        const double* bl = p_->position_row(il);
        const double sl = p_->grid().time(il);
        for (std::size_t q = 0; q < t_->n; ++q) {
            const Eigen::VectorXcd Pf = projected(q, f_half[q]);
            const double ph = -t_->kdot(q, bl);
            const cplx el(std::cos(ph), std::sin(ph));
            const cplx* u = u_.data() + q * std::size_t(n) * d;
            cplx z = 0;
            for (int i = i0; i < i1; ++i) {
                cplx x = 0;
                for (int a = 0; a < d; ++a) x += u[std::size_t(i) * d + a] * Pf[a];
                z += x * std::exp(-t_->omega[q] * std::abs(p_->grid().time(i) - sl));
            }
            // +k gives z, -k gives conj(z)
            total += t_->wphi[q] * (z * el).real();
        }
        return total;
    }

    /**
     * q1(f^{s_l}, g^{s_m}) = (1/2) sum_k w conj(f)^T delta_perp g e^{i k.(b_l - b_m)}
     * e^{-|s_l - s_m| omega}, both real fields given by +k values.
     */
    double insertion_form(const std::vector<Eigen::VectorXcd>& f_half, int il,
                          const std::vector<Eigen::VectorXcd>& g_half, int im) const
    {
        double total = 0;
        const double dt = std::abs(p_->grid().time(il) - p_->grid().time(im));
        const int d = p_->dim();
        double x[16];
        for (int a = 0; a < d; ++a) x[a] = p_->position(il, a) - p_->position(im, a);
        for (std::size_t q = 0; q < t_->n; ++q) {
            const cplx v = f_half[q].dot(projected(q, g_half[q]));
            const double ph = t_->kdot(q, x);
            total += t_->w[q] * std::exp(-t_->omega[q] * dt) * (v * cplx(std::cos(ph), std::sin(ph))).real();
        }
        return total;
    }

    const ModeTable& table() const { return *t_; }
    const BrownianPath& path() const { return *p_; }

private:
    Eigen::VectorXcd projected(std::size_t q, const Eigen::VectorXcd& f) const
    {
        const int d = t_->dim;
        const double* P = t_->proj.data() + q * d * d;
        Eigen::VectorXcd out(d);
        for (int a = 0; a < d; ++a) {
            cplx s = 0;
            for (int b = 0; b < d; ++b) s += P[a * d + b] * f[b];
            out[a] = s;
        }
        return out;
    }

    const ModeTable* t_;
    const BrownianPath* p_;
    std::vector<cplx> u_;
    std::vector<double> decay_;
};

inline std::vector<Eigen::VectorXcd> half_values(const ModeSet& s, const KFunction& f)
{
    f.check(s);
    if (!f.is_real_field())
        throw domain_error("test function must satisfy f(-k) = conj f(k) on the mode set");
    std::vector<Eigen::VectorXcd> h;
    for (std::size_t q = 0; q < s.pairs(); ++q) h.push_back(f.values[2 * q]);
    return h;
}

/** q1 between the whole-horizon block and itself, by the fastest route for the kernel. */
inline double q1_full(const BrownianPath& p, double T, const PairKernel& k, DiagonalRule rule)
{
    if (k.is_mode_sum()) {
        ModePathForms f(k.as_mode_sum().table(), p);
        return f.blocks({0, p.grid().index_of(T)}, rule)(0, 0);
    }
    return q1_double(p, {0, T}, {0, T}, k, rule);
}

/** (e^2/2) q1(K^[0,T], K^[0,T]); exp(-full_action) is the density of mu relative to db. */
inline double full_action(const BrownianPath& p, double T, const ActionConfig& cfg)
{
    if (!cfg.kernel) throw domain_error("full_action: no kernel");
    if (cfg.e == 0) return 0.0;
    return 0.5 * cfg.e * cfg.e * q1_full(p, T, *cfg.kernel, cfg.rule);
}

/** D(t) = q1(K^[0,t], K^[t,2t]); disjoint index sets, so no diagonal terms. */
inline double cross_D(const BrownianPath& p, double t, const PairKernel& k)
{
    const int it = p.grid().index_of(t), i2 = p.grid().index_of(2 * t);
    if (k.is_mode_sum()) {
        ModePathForms f(k.as_mode_sum().table(), p);
        return f.blocks({0, it, i2}, DiagonalRule::realized_increments)(1, 0);
    }
    return q1_double(p, {0, t}, {t, 2 * t}, k);
}

/** Discretized q1(K^[0,2t], f^t) on a mode set; f must be a real field. */
inline double weyl_coupling(const BrownianPath& p, const KFunction& f, double t, const ModeSet& s,
                            const FormFactor& ff)
{
    const int it = p.grid().index_of(t), i2 = p.grid().index_of(2 * t);
    const ModeTable tab(s, ff);
    ModePathForms forms(tab, p);
    return forms.coupling(0, i2, half_values(s, f), it);
}

/**
 * Discretized || int_0^T phi~(. - b(s)) db_mu(s) ||^2 =
 * sum_ij db_mu(i) db_mu(j) G(b_i - b_j), realized increments.
 */
inline double burkholder_functional(const BrownianPath& p, double T, int mu, const NormKernel& g)
{
    const int n = p.grid().index_of(T), d = p.dim();
    double s = 0;
    double x[16];
    for (int i = 0; i < n; ++i) {
        const double* bi = p.position_row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = p.position_row(j);
            for (int a = 0; a < d; ++a) x[a] = bi[a] - bj[a];
            s += p.increment(i, mu) * p.increment(j, mu) * g.eval(x);
        }
    }
    return s;
}

}  // namespace fiberpath
