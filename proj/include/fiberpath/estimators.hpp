#pragma once

#include "fiberpath/action.hpp"
#include "fiberpath/field_model.hpp"
#include "fiberpath/paths.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace fiberpath {

/** A sampling outcome that is a property of the ensemble, not a bug. */
struct statistical_failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EnsembleSpec {
    long n_paths = 10000;  // counted in paths; antithetic pairs are two paths
    int n_steps = 128;     // steps over the whole horizon the estimator needs
    std::uint64_t seed = 1;
    int n_batches = 32;
    int threads = 1;
    bool antithetic = true;
    DiagonalRule rule = DiagonalRule::deterministic_qv;

    long units() const { return antithetic ? n_paths / 2 : n_paths; }

    nlohmann::json to_json() const
    {
        return {{"n_paths", n_paths}, {"n_steps", n_steps}, {"seed", seed},
                {"n_batches", n_batches}, {"antithetic", antithetic},
                {"diagonal_rule", to_string(rule)}};
    }
};

struct EstimateResult {
    cplx mean = 0;
    double std_error = 0;
    long n_samples = 0;
    int n_batches = 0;
    nlohmann::json metadata;
};

/**
 * Per-unit channel values, unit u = path stream u (and its mirror when
 * antithetic). Units are split across threads in contiguous slices and written
 * by index, so results do not depend on the thread count.
 */
template <class F>
std::vector<cplx> sample_units(const PathGrid& grid, int dim, const EnsembleSpec& spec, int channels, F&& f)
{
    if (spec.n_batches < 16) throw domain_error("batch means need at least 16 batches");
    if (spec.antithetic && spec.n_paths % 2) throw domain_error("antithetic pairing needs an even path count");
    const long U = spec.units();
    if (U < spec.n_batches) throw domain_error("fewer sampling units than batches");
    std::vector<cplx> out(std::size_t(U) * channels);
    auto work = [&](long lo, long hi) {
        std::vector<cplx> buf(channels);
        for (long u = lo; u < hi; ++u) {
            const BrownianPath p = sample_path(grid, dim, std::uint64_t(u), spec.seed);
            if (spec.antithetic) {
                const BrownianPath q = antithetic(p);
                f(p, &q, buf.data());
            } else {
                f(p, nullptr, buf.data());
            }
            std::copy(buf.begin(), buf.end(), out.begin() + std::ptrdiff_t(u * channels));
        }
    };
    const int T = std::max(1, std::min<int>(spec.threads, int(U)));
    if (T == 1) {
        work(0, U);
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < T; ++k) pool.emplace_back(work, U * k / T, U * (k + 1) / T);
        for (auto& th : pool) th.join();
    }
    return out;
}

namespace detail {

inline double batch_spread(const std::vector<cplx>& b)
{
    const double B = double(b.size());
    cplx m = 0;
    for (const auto& x : b) m += x;
    m /= B;
    double v = 0;
    for (const auto& x : b) v += std::norm(x - m);
    return std::sqrt(v / (B - 1.0) / B);
}

/** Sum of channel c over units [lo, hi), in unit order. */
inline cplx channel_sum(const std::vector<cplx>& v, int channels, int c, long lo, long hi)
{
    cplx s = 0;
    for (long u = lo; u < hi; ++u) s += v[std::size_t(u) * channels + c];
    return s;
}

}  // namespace detail

/** Plain mean of one channel with batch-means error. */
inline EstimateResult mean_estimate(const std::vector<cplx>& v, int channels, int c, int n_batches)
{
    const long U = long(v.size()) / channels;
    EstimateResult r;
    std::vector<cplx> bm(n_batches);
    for (int b = 0; b < n_batches; ++b) {
        const long lo = U * b / n_batches, hi = U * (b + 1) / n_batches;
        bm[b] = detail::channel_sum(v, channels, c, lo, hi) / double(hi - lo);
    }
    r.mean = detail::channel_sum(v, channels, c, 0, U) / double(U);
    r.std_error = detail::batch_spread(bm);
    r.n_batches = n_batches;
    return r;
}

/** Self-normalized ratio sum(num) / sum(den); error from the spread of batch ratios. */
inline EstimateResult ratio_estimate(const std::vector<cplx>& v, int channels, int cn, int cd, int n_batches)
{
    const long U = long(v.size()) / channels;
    EstimateResult r;
    std::vector<cplx> br(n_batches);
    for (int b = 0; b < n_batches; ++b) {
        const long lo = U * b / n_batches, hi = U * (b + 1) / n_batches;
        const cplx d = detail::channel_sum(v, channels, cd, lo, hi);
        if (!(d.real() > 0)) throw statistical_failure("nonpositive normalization in a batch");
        br[b] = detail::channel_sum(v, channels, cn, lo, hi) / d;
    }
    const cplx den = detail::channel_sum(v, channels, cd, 0, U);
    if (!(den.real() > 0)) throw statistical_failure("nonpositive normalization Z");
    r.mean = detail::channel_sum(v, channels, cn, 0, U) / den;
    r.std_error = detail::batch_spread(br);
    r.n_batches = n_batches;
    return r;
}

inline nlohmann::json vec_json(const Eigen::VectorXd& v)
{
    auto a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

namespace detail {

inline cplx phase(const Eigen::VectorXd& P, const BrownianPath& p, int i_end, int i_start = 0)
{
    double s = 0;
    for (int a = 0; a < p.dim(); ++a) s += P(a) * (p.position(i_end, a) - p.position(i_start, a));
    return {std::cos(s), std::sin(s)};
}

inline double action_over(const BrownianPath& p, double T, double e, const PairKernel& k, DiagonalRule r)
{
    return e == 0 ? 0.0 : 0.5 * e * e * q1_full(p, T, k, r);
}

/**
 * Mean of w(p) and w(mirror) for a weight e^{-S} e^{i phi} whose action is even
 * under b -> -b: the action is evaluated once and the phases pair up, so the
 * imaginary part cancels exactly.
 */
inline cplx mirrored(double weight, cplx ph, bool antithetic)
{
    if (!antithetic) return weight * ph;
    return 0.5 * (weight * ph + weight * std::conj(ph));
}

}  // namespace detail

/** Z_t(P) = E[e^{iP.b(t)} e^{-(e^2/2) q1(K^[0,t], K^[0,t])}]. */
inline EstimateResult partition(const Eigen::VectorXd& P, double t, double e, const PairKernel& k,
                                const EnsembleSpec& spec)
{
    if (P.size() != k.dim()) throw domain_error("partition: P has wrong dimension");
    const PathGrid grid(t, spec.n_steps);
    auto v = sample_units(grid, k.dim(), spec, 1, [&](const BrownianPath& p, const BrownianPath* q, cplx* out) {
        const double S = detail::action_over(p, t, e, k, spec.rule);
        out[0] = detail::mirrored(std::exp(-S), detail::phase(P, p, grid.n_steps), q != nullptr);
    });
    EstimateResult r = mean_estimate(v, 1, 0, spec.n_batches);
    r.n_samples = spec.n_paths;
    r.metadata = {{"estimator", "partition"}, {"P", vec_json(P)}, {"t", t}, {"e", e},
                  {"ensemble", spec.to_json()}};
    return r;
}

struct EnergyEstimate {
    EstimateResult energy;              // two-point estimate from the last ladder pair
    std::vector<double> ladder;
    std::vector<EstimateResult> Z;      // Z_t at each rung
    std::vector<EstimateResult> pairs;  // -log(Z_{k+1}/Z_k)/(t_{k+1}-t_k)
};

/**
 * E ~ -log(Z_{t2}/Z_{t1})/(t2 - t1) for consecutive ladder rungs, all from one
 * ensemble over [0, t_max]. Consistent only when the ground state overlaps Omega.
 */
inline EnergyEstimate ground_energy(const Eigen::VectorXd& P, double e, const std::vector<double>& ladder,
                                    const PairKernel& k, const EnsembleSpec& spec)
{
    if (ladder.size() < 2) throw domain_error("ground_energy: ladder needs >= 2 horizons");
    for (std::size_t i = 0; i < ladder.size(); ++i)
        if (!(ladder[i] > (i ? ladder[i - 1] : 0.0))) throw domain_error("ground_energy: ladder must increase");
    if (!k.is_mode_sum()) throw domain_error("ground_energy: requires a mode-sum kernel");
    const PathGrid grid(ladder.back(), spec.n_steps);
    std::vector<int> bnd{0};
    for (double t : ladder) bnd.push_back(grid.index_of(t));
    const int C = int(ladder.size());
    const auto& tab = k.as_mode_sum().table();

    auto v = sample_units(grid, k.dim(), spec, C, [&](const BrownianPath& p, const BrownianPath* q, cplx* out) {
        Eigen::MatrixXd Q = ModePathForms(tab, p).blocks(bnd, spec.rule);
        double acc = 0;
        for (int c = 0; c < C; ++c) {
            // q1 over [0, t_c]^2 from the leading (c+1) x (c+1) blocks
            acc += Q(c, c);
            for (int l = 0; l < c; ++l) acc += 2.0 * Q(c, l);
            out[c] = detail::mirrored(std::exp(-0.5 * e * e * acc), detail::phase(P, p, bnd[c + 1]), q != nullptr);
        }
    });

    EnergyEstimate out;
    out.ladder = ladder;
    const long U = spec.units();
    for (int c = 0; c < C; ++c) {
        out.Z.push_back(mean_estimate(v, C, c, spec.n_batches));
        out.Z.back().n_samples = spec.n_paths;
    }
    for (int c = 0; c + 1 < C; ++c) {
        const double dt = ladder[c + 1] - ladder[c];
        std::vector<cplx> be(spec.n_batches);
        for (int b = 0; b < spec.n_batches; ++b) {
            const long lo = U * b / spec.n_batches, hi = U * (b + 1) / spec.n_batches;
            const double z1 = detail::channel_sum(v, C, c, lo, hi).real();
            const double z2 = detail::channel_sum(v, C, c + 1, lo, hi).real();
            if (!(z1 > 0) || !(z2 > 0)) throw statistical_failure("nonpositive Z in a batch; increase n_paths");
            be[b] = -std::log(z2 / z1) / dt;
        }
        const double Z1 = out.Z[c].mean.real(), Z2 = out.Z[c + 1].mean.real();
        if (!(Z1 > 0) || !(Z2 > 0)) throw statistical_failure("nonpositive Z estimate; increase n_paths");
        EstimateResult r;
        r.mean = -std::log(Z2 / Z1) / dt;
        r.std_error = detail::batch_spread(be);
        r.n_batches = spec.n_batches;
        r.n_samples = spec.n_paths;
        r.metadata = {{"t1", ladder[c]}, {"t2", ladder[c + 1]}};
        out.pairs.push_back(r);
    }
    out.energy = out.pairs.back();
    out.energy.metadata = {{"estimator", "ground_energy"}, {"P", vec_json(P)}, {"e", e},
                           {"t_ladder", ladder}, {"ensemble", spec.to_json()}};
    return out;
}

/**
 * <e^{-beta N}> at finite t: E[e^{e^2 (1 - e^{-beta}) D(t)} w] / E[w] with
 * w = e^{iP.b(2t)} e^{-(e^2/2) q1(K^[0,2t], K^[0,2t])}. The D-weight exponent is
 * e^2 (1 - e^{-beta}), the value the second-layer covariance e^{-|s-s'|} gives.
 */
inline EstimateResult expectation_expN(double beta, const Eigen::VectorXd& P, double e, double t,
                                       const PairKernel& k, const EnsembleSpec& spec)
{
    if (!(beta >= 0)) throw domain_error("expectation_expN: beta must be >= 0");
    if (!k.is_mode_sum()) throw domain_error("expectation_expN: requires a mode-sum kernel");
    const PathGrid grid(2 * t, spec.n_steps);
    const std::vector<int> bnd{0, grid.index_of(t), grid.n_steps};
    const auto& tab = k.as_mode_sum().table();
    const double lam = e * e * (1.0 - std::exp(-beta));
    auto v = sample_units(grid, k.dim(), spec, 2, [&](const BrownianPath& p, const BrownianPath* q, cplx* out) {
        const Eigen::MatrixXd Q = ModePathForms(tab, p).blocks(bnd, spec.rule);
        const double S = 0.5 * e * e * (Q(0, 0) + Q(1, 1) + 2.0 * Q(1, 0));
        const cplx ph = detail::phase(P, p, grid.n_steps);
        const bool anti = q != nullptr;
        out[0] = detail::mirrored(std::exp(lam * Q(1, 0) - S), ph, anti);
        out[1] = detail::mirrored(std::exp(-S), ph, anti);
    });
    EstimateResult r = ratio_estimate(v, 2, 0, 1, spec.n_batches);
    r.n_samples = spec.n_paths;
    r.metadata = {{"estimator", "expN"}, {"beta", beta}, {"P", vec_json(P)}, {"e", e}, {"t", t},
                  {"ensemble", spec.to_json()}};
    return r;
}

/**
 * <e^{-iA(f)}> at finite t: E[e^{-e q1(K^[0,2t], f^t) - q0(f,f)/2} w] / E[w].
 * The coupling is not even under b -> -b, so both members of a pair are evaluated.
 */
inline EstimateResult expectation_weyl(const KFunction& f, const Eigen::VectorXd& P, double e, double t,
                                       const ModeSet& modes, const FormFactor& ff, const EnsembleSpec& spec)
{
    const PairKernel k = PairKernel::mode_sum(modes, ff);
    const auto& tab = k.as_mode_sum().table();
    const auto fh = half_values(modes, f);
    const double q0 = q0_form(modes, f, f).real();
    const PathGrid grid(2 * t, spec.n_steps);
    const int it = grid.index_of(t);
    auto one = [&](const BrownianPath& p, double& w, cplx& num) {
        ModePathForms forms(tab, p);
        const double S = 0.5 * e * e * forms.blocks({0, grid.n_steps}, spec.rule)(0, 0);
        const double c = forms.coupling(0, grid.n_steps, fh, it);
        const cplx ph = detail::phase(P, p, grid.n_steps);
        w = std::exp(-S);
        num = std::exp(-e * c - 0.5 * q0 - S) * ph;
        return ph;
    };
    auto v = sample_units(grid, k.dim(), spec, 2, [&](const BrownianPath& p, const BrownianPath* q, cplx* out) {
        double w1;
        cplx n1;
        const cplx ph = one(p, w1, n1);
        if (!q) {
            out[0] = n1;
            out[1] = w1 * ph;
            return;
        }
        double w2;
        cplx n2;
        one(*q, w2, n2);
        out[0] = 0.5 * (n1 + n2);
        out[1] = detail::mirrored(w1, ph, true);
    });
    EstimateResult r = ratio_estimate(v, 2, 0, 1, spec.n_batches);
    r.n_samples = spec.n_paths;
    r.metadata = {{"estimator", "weyl"}, {"P", vec_json(P)}, {"e", e}, {"t", t}, {"q0_ff", q0},
                  {"ensemble", spec.to_json()}};
    return r;
}

struct WeylInsertion {
    KFunction f;
    double theta = 0;  // inserts e^{i theta A(f)}
};

/** Block j spans [t_{j-1}, t_j] at Euclidean layer s_j with momentum P_{j-1}. */
struct GreenBlock {
    double s = 0;
    double t = 0;
    Eigen::VectorXd P;
    std::vector<WeylInsertion> insertions;  // applied at (s_j, t_j)
};

/**
 * Per-path Green-function weight for a schedule:
 * exp(-(1/2) q2(G, G)) e^{i sum (b(t_j) - b(t_{j-1})).P_{j-1}}, where
 * G = e sum_j xi_{s_j} K^{[t_{j-1}, t_j]} - sum_l theta_l xi_{s_l} f_l^{t_l}.
 */
class GreenWeight {
public:
    GreenWeight(const std::vector<GreenBlock>& sched, double e, const ModeSet& modes, const FormFactor& ff,
                const PathGrid& grid)
        : sched_(sched), e_(e), tab_(modes, ff)
    {
        if (sched.empty()) throw domain_error("green: empty schedule");
        bnd_.push_back(0);
        double s_prev = 0, t_prev = 0;
        for (const auto& b : sched) {
            if (b.s < s_prev || !(b.t > t_prev)) throw domain_error("green: schedule must be ordered");
            if (b.P.size() != modes.dim()) throw domain_error("green: P has wrong dimension");
            bnd_.push_back(grid.index_of(b.t));
            s_prev = b.s;
            t_prev = b.t;
            for (const auto& ins : b.insertions) {
                ins_.push_back({half_values(modes, ins.f), ins.theta, b.s, bnd_.back()});
            }
        }
    }

    cplx operator()(const BrownianPath& p, DiagonalRule rule) const
    {
        ModePathForms forms(tab_, p);
        const Eigen::MatrixXd Q = forms.blocks(bnd_, rule);
        const int m = int(sched_.size());
        double q2 = 0;
        for (int j = 0; j < m; ++j)
            for (int l = 0; l < m; ++l)
                q2 += e_ * e_ * std::exp(-std::abs(sched_[j].s - sched_[l].s)) * Q(j, l);
        for (int j = 0; j < m; ++j)
            for (const auto& in : ins_)
                q2 -= 2.0 * e_ * in.theta * std::exp(-std::abs(sched_[j].s - in.s)) *
                      forms.coupling(bnd_[j], bnd_[j + 1], in.f, in.index);
        for (const auto& a : ins_)
            for (const auto& b : ins_)
                q2 += a.theta * b.theta * std::exp(-std::abs(a.s - b.s)) *
                      forms.insertion_form(a.f, a.index, b.f, b.index);
        double ph = 0;
        for (int j = 0; j < m; ++j)
            for (int a = 0; a < p.dim(); ++a)
                ph += (p.position(bnd_[j + 1], a) - p.position(bnd_[j], a)) * sched_[j].P(a);
        return std::exp(-0.5 * q2) * cplx(std::cos(ph), std::sin(ph));
    }

private:
    struct Ins {
        std::vector<Eigen::VectorXcd> f;
        double theta;
        double s;
        int index;
    };
    std::vector<GreenBlock> sched_;
    double e_;
    ModeTable tab_;
    std::vector<int> bnd_;
    std::vector<Ins> ins_;
};

inline EstimateResult green_n_point(const std::vector<GreenBlock>& sched, double e, const ModeSet& modes,
                                    const FormFactor& ff, const EnsembleSpec& spec)
{
    const PathGrid grid(sched.back().t, spec.n_steps);
    const GreenWeight gw(sched, e, modes, ff, grid);
    auto v = sample_units(grid, modes.dim(), spec, 1, [&](const BrownianPath& p, const BrownianPath* q, cplx* out) {
        out[0] = q ? 0.5 * (gw(p, spec.rule) + gw(*q, spec.rule)) : gw(p, spec.rule);
    });
    EstimateResult r = mean_estimate(v, 1, 0, spec.n_batches);
    r.n_samples = spec.n_paths;
    r.metadata = {{"estimator", "green"}, {"blocks", int(sched.size())}, {"e", e}, {"ensemble", spec.to_json()}};
    return r;
}

struct DiamagneticReport {
    cplx Z_P = 0;
    double Z_0 = 0;
    double margin = 0;  // Z_0 - |Z_P|
    bool holds = false;
};

/** |Z_t(P)| <= Z_t(0) on one shared ensemble; pathwise |weight(P)| = weight(0). */
inline DiamagneticReport diamagnetic_check(const Eigen::VectorXd& P, double t, double e, const PairKernel& k,
                                           const EnsembleSpec& spec)
{
    const PathGrid grid(t, spec.n_steps);
    auto v = sample_units(grid, k.dim(), spec, 2, [&](const BrownianPath& p, const BrownianPath* q, cplx* out) {
        const double w = std::exp(-detail::action_over(p, t, e, k, spec.rule));
        out[0] = detail::mirrored(w, detail::phase(P, p, grid.n_steps), q != nullptr);
        out[1] = w;
    });
    DiamagneticReport r;
    const long U = spec.units();
    r.Z_P = detail::channel_sum(v, 2, 0, 0, U) / double(U);
    r.Z_0 = (detail::channel_sum(v, 2, 1, 0, U) / double(U)).real();
    r.margin = r.Z_0 - std::abs(r.Z_P);
    r.holds = r.margin >= 0;
    return r;
}

}  // namespace fiberpath
