#pragma once

#include "fiberpath/field_model.hpp"
#include "fiberpath/polarization.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <boost/math/special_functions/hermite.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace fiberpath {

/** Occupation tuples with total <= n_max, lexicographic (oscillator 0 most significant). */
class FockBasis {
public:
    FockBasis(int n_osc, int n_max) : n_osc_(n_osc), n_max_(n_max)
    {
        if (n_osc < 1 || n_max < 0) throw domain_error("FockBasis: bad size");
        std::vector<int> cur(n_osc, 0);
        enumerate(cur, 0, n_max);
        for (std::size_t i = 0; i < states_.size() / n_osc; ++i) index_.emplace(code(state(i)), i);
    }

    int oscillators() const { return n_osc_; }
    int n_max() const { return n_max_; }
    std::size_t size() const { return states_.size() / n_osc_; }
    const int* state(std::size_t i) const { return states_.data() + i * n_osc_; }
    int total(std::size_t i) const
    {
        int s = 0;
        for (int o = 0; o < n_osc_; ++o) s += state(i)[o];
        return s;
    }

    /** Index of an occupation tuple, or -1 when it lies outside the truncation. */
    long find(const int* n) const
    {
        int s = 0;
        for (int o = 0; o < n_osc_; ++o) {
            if (n[o] < 0) return -1;
            s += n[o];
        }
        if (s > n_max_) return -1;
        auto it = index_.find(code(n));
        return it == index_.end() ? -1 : long(it->second);
    }

    /** C(n_osc + n_max, n_max). */
    static std::size_t expected_size(int n_osc, int n_max)
    {
        double c = 1;
        for (int i = 1; i <= n_max; ++i) c = c * (n_osc + i) / i;
        return std::size_t(std::llround(c));
    }

private:
    void enumerate(std::vector<int>& cur, int o, int left)
    {
        if (o == n_osc_) {
            states_.insert(states_.end(), cur.begin(), cur.end());
            return;
        }
        for (int n = 0; n <= left; ++n) {
            cur[o] = n;
            enumerate(cur, o + 1, left - n);
        }
        cur[o] = 0;
    }

    std::uint64_t code(const int* n) const
    {
        std::uint64_t c = 0;
        for (int o = 0; o < n_osc_; ++o) c = c * std::uint64_t(n_max_ + 1) + std::uint64_t(n[o]);
        return c;
    }

    int n_osc_, n_max_;
    std::vector<int> states_;
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

struct FockOperator {
    Eigen::MatrixXd matrix;
    std::string label;

    double hermiticity_residual() const
    {
        return (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
    }
};

struct Spectrum {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors;  // empty when only values were requested
};

inline Spectrum spectrum(const FockOperator& op, bool vectors = true)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
        op.matrix, vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed on " + op.label);
    Spectrum s;
    s.values = es.eigenvalues();
    if (vectors) s.vectors = es.eigenvectors();
    return s;
}

struct GroundState {
    double energy = 0;
    int multiplicity = 0;
    double gap = 0;  // first level above the ground multiplet minus E0
    Eigen::MatrixXd vectors;
};

inline GroundState ground_state(const Spectrum& s)
{
    const auto& v = s.values;
    const double width = v(v.size() - 1) - v(0);
    const double tol = 1e-9 * std::max(width, 1e-300);
    GroundState g;
    g.energy = v(0);
    int m = 1;
    while (m < v.size() && v(m) - v(0) <= tol) ++m;
    g.multiplicity = m;
    g.gap = m < v.size() ? v(m) - v(0) : 0.0;
    if (s.vectors.size()) g.vectors = s.vectors.leftCols(m);
    return g;
}

inline GroundState ground_state(const FockOperator& op) { return ground_state(spectrum(op)); }

/** (Psi, e^{-t op} Phi) by spectral calculus. */
inline cplx semigroup_element(const Eigen::VectorXcd& psi, const Eigen::VectorXcd& phi,
                              const Spectrum& s, double t)
{
    const Eigen::VectorXcd a = s.vectors.transpose().cast<cplx>() * psi;
    const Eigen::VectorXcd b = s.vectors.transpose().cast<cplx>() * phi;
    cplx r = 0;
    for (Eigen::Index n = 0; n < s.values.size(); ++n)
        r += std::conj(a(n)) * b(n) * std::exp(-t * (s.values(n) - s.values(0)));
    return r * std::exp(-t * s.values(0));
}

/**
 * Truncated Fock space over a ModeSet. Every +-k member is its own oscillator
 * per transverse polarization, so P_f is diagonal and A_mu(0) real:
 *   A_mu(0) = sum_{m,j} e_mu(k_m, j) sqrt(w_m) phi(k_m) / sqrt(2 omega_m) (a + a^dag).
 */
class FockModel {
public:
    using Sparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;
    using SparseC = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;

    struct Oscillator {
        std::size_t mode;
        int pol;
        Eigen::VectorXd e;
        Eigen::VectorXd k;
        double omega;
        double w;
        double g;  // sqrt(w) phi / sqrt(2 omega)
    };

    FockModel(const ModeSet& s, const FormFactor& ff, const PolarizationBasis& pb, int n_max)
        : dim_(s.dim()), modes_(s), basis_(int(s.size()) * (s.dim() - 1), n_max)
    {
        if (ff.dim != s.dim()) throw domain_error("FockModel: form factor and mode set dimensions differ");
        for (std::size_t m = 0; m < s.size(); ++m) {
            const auto frame = polarization_frame(s[m].k, pb);
            const double ph = ff(s[m].omega);
            for (int j = 0; j < dim_ - 1; ++j)
                osc_.push_back({m, j, frame[j], s[m].k, s[m].omega, s[m].w,
                                std::sqrt(s[m].w) * ph / std::sqrt(2.0 * s[m].omega)});
        }
        build_ladder();
        build_field();
    }

    int dim() const { return dim_; }
    const FockBasis& basis() const { return basis_; }
    const ModeSet& modes() const { return modes_; }
    const std::vector<Oscillator>& oscillators() const { return osc_; }
    const Sparse& annihilator(std::size_t o) const { return a_[o]; }
    const Sparse& field(int mu) const { return A_[mu]; }
    const Eigen::VectorXd& number() const { return N_; }
    const Eigen::VectorXd& field_energy() const { return Hf_; }
    const Eigen::VectorXd& field_momentum(int mu) const { return Pf_[mu]; }

    Eigen::VectorXcd vacuum() const
    {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(Eigen::Index(basis_.size()));
        v(0) = 1.0;
        return v;
    }

    /** (1/2)(P - P_f - e A(0))^2, squared after truncation. */
    FockOperator build_K(const Eigen::VectorXd& P, double e) const
    {
        if (P.size() != dim_) throw domain_error("build_K: P has wrong dimension");
        const Eigen::Index n = Eigen::Index(basis_.size());
        Sparse K(n, n);
        for (int mu = 0; mu < dim_; ++mu) {
            Sparse pi = -e * A_[mu];
            Sparse diag(n, n);
            diag.reserve(Eigen::VectorXi::Constant(n, 1));
            for (Eigen::Index i = 0; i < n; ++i) diag.insert(i, i) = P(mu) - Pf_[mu](i);
            pi += diag;
            K += Sparse(pi * pi);
        }
        FockOperator op{Eigen::MatrixXd(0.5 * K), "K(P)"};
        op.matrix = 0.5 * (op.matrix + op.matrix.transpose()).eval();
        return op;
    }

    FockOperator build_H(const Eigen::VectorXd& P, double e) const
    {
        FockOperator op = build_K(P, e);
        op.matrix.diagonal() += Hf_;
        op.label = "H(P)";
        return op;
    }

    /** A(f) = sum_o sqrt(w/2) (e_o . f(k_m) a_o^dag + e_o . f(-k_m) a_o). */
    SparseC field_operator(const KFunction& f) const
    {
        f.check(modes_);
        if (!f.is_real_field())
            throw domain_error("A(f) needs f(-k) = conj f(k) to be self-adjoint");
        const Eigen::Index n = Eigen::Index(basis_.size());
        SparseC A(n, n);
        for (std::size_t o = 0; o < osc_.size(); ++o) {
            const auto& os = osc_[o];
            const std::size_t partner = os.mode ^ 1u;
            const cplx cr = std::sqrt(0.5 * os.w) * os.e.cast<cplx>().dot(f.values[os.mode]);
            const cplx an = std::sqrt(0.5 * os.w) * os.e.cast<cplx>().dot(f.values[partner]);
            const SparseC a = a_[o].cast<cplx>();
            A += cr * SparseC(a.adjoint()) + an * a;
        }
        return A;
    }

    /** exp(i theta A(f)) as a dense unitary. */
    Eigen::MatrixXcd weyl_operator(const KFunction& f, double theta) const
    {
        const Eigen::MatrixXcd A = Eigen::MatrixXcd(field_operator(f));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(0.5 * (A + A.adjoint()));
        if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed on A(f)");
        Eigen::VectorXcd ph(es.eigenvalues().size());
        for (Eigen::Index i = 0; i < ph.size(); ++i)
            ph(i) = std::exp(cplx(0, theta * es.eigenvalues()(i)));
        return es.eigenvectors() * ph.asDiagonal() * es.eigenvectors().adjoint();
    }

    /** a(f) with f given per oscillator; a(f) = sum sqrt(w) conj(f_o) a_o. */
    SparseC annihilation(const Eigen::VectorXcd& f_osc) const
    {
        const Eigen::Index n = Eigen::Index(basis_.size());
        SparseC a(n, n);
        for (std::size_t o = 0; o < osc_.size(); ++o)
            a += std::sqrt(osc_[o].w) * std::conj(f_osc(Eigen::Index(o))) * a_[o].cast<cplx>();
        return a;
    }

private:
    std::vector<Eigen::VectorXd> polarization_frame(const Eigen::VectorXd& k, const PolarizationBasis& pb) const
    {
        if (dim_ == 3) {
            const auto fr = pb(Vec3(k));
            return {Eigen::VectorXd(fr.first), Eigen::VectorXd(fr.second)};
        }
        // any orthonormal transverse frame: Gram-Schmidt on the coordinate axes
        std::vector<Eigen::VectorXd> out;
        const Eigen::VectorXd kh = k.normalized();
        for (int a = 0; a < dim_ && int(out.size()) < dim_ - 1; ++a) {
            Eigen::VectorXd v = Eigen::VectorXd::Unit(dim_, a);
            v -= kh.dot(v) * kh;
            for (const auto& u : out) v -= u.dot(v) * u;
            if (v.norm() > 1e-6) out.push_back(v.normalized());
        }
        return out;
    }

    void build_ladder()
    {
        const std::size_t n = basis_.size(), no = osc_.size();
        a_.assign(no, Sparse(Eigen::Index(n), Eigen::Index(n)));
        N_ = Eigen::VectorXd::Zero(Eigen::Index(n));
        Hf_ = Eigen::VectorXd::Zero(Eigen::Index(n));
        Pf_.assign(dim_, Eigen::VectorXd::Zero(Eigen::Index(n)));
        std::vector<std::vector<Eigen::Triplet<double>>> trip(no);
        std::vector<int> tmp(no);
        for (std::size_t i = 0; i < n; ++i) {
            const int* s = basis_.state(i);
            for (std::size_t o = 0; o < no; ++o) {
                N_(Eigen::Index(i)) += s[o];
                Hf_(Eigen::Index(i)) += s[o] * osc_[o].omega;
                for (int mu = 0; mu < dim_; ++mu) Pf_[mu](Eigen::Index(i)) += s[o] * osc_[o].k(mu);
                if (s[o] == 0) continue;
                std::copy(s, s + no, tmp.begin());
                tmp[o] -= 1;
                const long j = basis_.find(tmp.data());
                trip[o].emplace_back(Eigen::Index(j), Eigen::Index(i), std::sqrt(double(s[o])));
            }
        }
        for (std::size_t o = 0; o < no; ++o) a_[o].setFromTriplets(trip[o].begin(), trip[o].end());
    }

    void build_field()
    {
        const Eigen::Index n = Eigen::Index(basis_.size());
        A_.assign(dim_, Sparse(n, n));
        for (std::size_t o = 0; o < osc_.size(); ++o) {
            const Sparse x = Sparse(a_[o].transpose()) + a_[o];
            for (int mu = 0; mu < dim_; ++mu) {
                const double c = osc_[o].e(mu) * osc_[o].g;
                if (c != 0.0) A_[mu] += c * x;
            }
        }
    }

    int dim_;
    ModeSet modes_;
    FockBasis basis_;
    std::vector<Oscillator> osc_;
    std::vector<Sparse> a_;
    std::vector<Sparse> A_;
    Eigen::VectorXd N_, Hf_;
    std::vector<Eigen::VectorXd> Pf_;
};

/** (phi, e^{-beta N} phi) for a normalized state phi. */
inline double number_weight(const FockModel& m, const Eigen::VectorXd& phi, double beta)
{
    double s = 0;
    for (Eigen::Index i = 0; i < phi.size(); ++i) s += phi(i) * phi(i) * std::exp(-beta * m.number()(i));
    return s / phi.squaredNorm();
}

/** Normalized e^{-t H} Omega. */
inline Eigen::VectorXd evolved_vacuum(const Spectrum& s, double t)
{
    Eigen::VectorXd c = s.vectors.row(0).transpose();
    for (Eigen::Index n = 0; n < c.size(); ++n) c(n) *= std::exp(-t * (s.values(n) - s.values(0)));
    Eigen::VectorXd v = s.vectors * c;
    return v / v.norm();
}

/** Ground vector with a nonnegative vacuum overlap. */
inline Eigen::VectorXd ground_vector(const Spectrum& s)
{
    Eigen::VectorXd g = s.vectors.col(0);
    if (g(0) < 0) g = -g;
    return g;
}

/** One step of a Green-function schedule: N-time ds, H(P)-time dt, then an optional Weyl insertion. */
struct GreenStep {
    double s = 0;  // Euclidean layer of this block
    double t = 0;  // end time of this block
    Eigen::VectorXd P;
    bool has_insertion = false;
    KFunction f;
    double theta = 0;
};

/** (Omega, prod_j e^{-(s_j - s_{j-1}) N} e^{-(t_j - t_{j-1}) H(P_{j-1})} Phi_j Omega). */
inline cplx green_oracle(const FockModel& m, double e, const std::vector<GreenStep>& steps)
{
    Eigen::VectorXcd v = m.vacuum();
    for (std::size_t jj = steps.size(); jj-- > 0;) {
        const auto& st = steps[jj];
        const double s_prev = jj ? steps[jj - 1].s : 0.0, t_prev = jj ? steps[jj - 1].t : 0.0;
        if (st.has_insertion) v = m.weyl_operator(st.f, st.theta) * v;
        const Spectrum sp = spectrum(m.build_H(st.P, e));
        const Eigen::VectorXcd c = sp.vectors.transpose().cast<cplx>() * v;
        Eigen::VectorXcd d = c;
        for (Eigen::Index n = 0; n < d.size(); ++n) d(n) *= std::exp(-(st.t - t_prev) * sp.values(n));
        v = sp.vectors.cast<cplx>() * d;
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) *= std::exp(-(st.s - s_prev) * m.number()(i));
    }
    return v(0);
}

struct RelativeBoundReport {
    int trials = 0;
    int violations = 0;
    double max_violation = -1e300;  // max over trials of lhs - rhs
    double max_ratio = 0;           // max lhs / rhs
};

/**
 * ||a(f) Psi|| <= ||f/sqrt(omega)|| ||H_f^{1/2} Psi|| + ||f|| ||Psi|| on random Psi
 * supported below the top shell and random f; a^dag(f) is checked as well.
 */
inline RelativeBoundReport relative_bound_check(const FockModel& m, int trials, std::uint64_t seed,
                                                double tol = 1e-10)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const auto& osc = m.oscillators();
    const Eigen::Index n = Eigen::Index(m.basis().size());
    RelativeBoundReport rep;
    for (int tr = 0; tr < trials; ++tr) {
        Eigen::VectorXcd f(Eigen::Index(osc.size()));
        for (auto& x : f) x = cplx(z(rng), z(rng));
        Eigen::VectorXcd psi(n);
        for (Eigen::Index i = 0; i < n; ++i)
            psi(i) = m.basis().total(std::size_t(i)) < m.basis().n_max() ? cplx(z(rng), z(rng)) : cplx(0);
        psi /= psi.norm();
        double nf = 0, nfw = 0;
        for (std::size_t o = 0; o < osc.size(); ++o) {
            const double a2 = std::norm(f(Eigen::Index(o))) * osc[o].w;
            nf += a2;
            nfw += a2 / osc[o].omega;
        }
        double hf = 0;
        for (Eigen::Index i = 0; i < n; ++i) hf += std::norm(psi(i)) * m.field_energy()(i);
        const double rhs = std::sqrt(nfw) * std::sqrt(hf) + std::sqrt(nf) * psi.norm();
        const auto a = m.annihilation(f);
        const double lhs_a = (a * psi).norm();
        const double lhs_c = (Eigen::SparseMatrix<cplx, Eigen::RowMajor>(a.adjoint()) * psi).norm();
        for (double lhs : {lhs_a, lhs_c}) {
            rep.max_violation = std::max(rep.max_violation, lhs - rhs);
            rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
            if (lhs > rhs + tol) ++rep.violations;
        }
        ++rep.trials;
    }
    return rep;
}

struct PositivityReport {
    double min_entry = 0;           // min real entry over the grid
    double max_imag = 0;            // max |imaginary| entry
    double tail = 0;                // max |contribution of the top shell|
    double interior_min = 0;        // min over |x|, |y| <= L/2
    std::string verdict;            // PASS | FAIL | INCONCLUSIVE
    int n_max = 0, grid = 0;
    double L = 0;
};

/**
 * Grid witness for positivity improvement of theta e^{-tH(0)} theta^{-1},
 * theta = exp(i pi N / 2), on one real oscillator
 *   H = omega b^dag b + (e^2/2) lambda^2 (b + b^dag)^2,
 * the symmetric combination of a single +-k pair at P = 0 with P_f dropped.
 * b + b^dag = sqrt2 x, Hermite functions psi_n(x) give the Q-space grid.
 */
inline PositivityReport positivity_check(double t, double e, int grid_size, int n_max,
                                         double omega = 1.0, double lambda2 = 1.0)
{
    if (n_max < 1 || grid_size < 2) throw domain_error("positivity_check: bad resolution");
    const int nb = n_max + 1;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(nb, nb);
    for (int n = 1; n < nb; ++n) b(n - 1, n) = std::sqrt(double(n));
    const Eigen::MatrixXd x = b + b.transpose();
    Eigen::MatrixXd H = omega * b.transpose() * b + 0.5 * e * e * lambda2 * x * x;
    H = 0.5 * (H + H.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Eigen::VectorXd ex = (-t * es.eigenvalues().array()).exp();
    const Eigen::MatrixXd S = es.eigenvectors() * ex.asDiagonal() * es.eigenvectors().transpose();

    Eigen::MatrixXcd M(nb, nb);
    const cplx I(0, 1);
    for (int n = 0; n < nb; ++n)
        for (int m = 0; m < nb; ++m) M(n, m) = std::pow(I, n) * S(n, m) * std::pow(I, -m);

    PositivityReport rep;
    rep.n_max = n_max;
    rep.grid = grid_size;
    rep.L = 6.0 / std::sqrt(2.0);  // six standard deviations of |psi_0|^2
    Eigen::MatrixXd psi(nb, grid_size);
    std::vector<double> xs(grid_size);
    for (int g = 0; g < grid_size; ++g) {
        xs[g] = -rep.L + 2.0 * rep.L * g / (grid_size - 1);
        for (int n = 0; n < nb; ++n) {
            const double norm = std::sqrt(std::ldexp(1.0, n) * std::tgamma(n + 1.0) * std::sqrt(std::numbers::pi));
            psi(n, g) = boost::math::hermite(unsigned(n), xs[g]) * std::exp(-0.5 * xs[g] * xs[g]) / norm;
        }
    }
    const Eigen::MatrixXcd K = psi.transpose().cast<cplx>() * M * psi.cast<cplx>();
    Eigen::MatrixXcd Mtop = Eigen::MatrixXcd::Zero(nb, nb);
    Mtop.row(n_max) = M.row(n_max);
    Mtop.col(n_max) = M.col(n_max);
    const Eigen::MatrixXcd T = psi.transpose().cast<cplx>() * Mtop * psi.cast<cplx>();

    rep.min_entry = K.real().minCoeff();
    rep.max_imag = K.imag().cwiseAbs().maxCoeff();
    rep.tail = T.cwiseAbs().maxCoeff();
    rep.interior_min = 1e300;
    for (int i = 0; i < grid_size; ++i)
        for (int j = 0; j < grid_size; ++j)
            if (std::abs(xs[i]) <= 0.5 * rep.L && std::abs(xs[j]) <= 0.5 * rep.L)
                rep.interior_min = std::min(rep.interior_min, K(i, j).real());

    if (rep.max_imag > 1e-8)
        rep.verdict = "FAIL";
    else if (rep.min_entry > rep.tail)
        rep.verdict = "PASS";
    else if (rep.min_entry < -rep.tail)
        rep.verdict = "FAIL";
    else
        rep.verdict = "INCONCLUSIVE";
    return rep;
}

/**
 * Second-order perturbation theory for E(P, e^2) - |P|^2/2 below the one-photon
 * threshold: e^2 [ (1/2) sum_o g_o^2 - sum_o (P.e_o)^2 g_o^2 / (omega_o + |P - k_o|^2/2 - |P|^2/2) ].
 * The first term is <Omega, (e^2/2) A^2 Omega>.
 */
inline double perturbative_shift(const FockModel& m, const Eigen::VectorXd& P, double e)
{
    double s = 0;
    for (const auto& o : m.oscillators()) {
        const double pe = P.dot(o.e);
        const double den = o.omega + 0.5 * (P - o.k).squaredNorm() - 0.5 * P.squaredNorm();
        s += 0.5 * o.g * o.g - pe * pe * o.g * o.g / den;
    }
    return e * e * s;
}

}  // namespace fiberpath
