#pragma once

#include "fiberpath/config.hpp"
#include "fiberpath/estimators.hpp"
#include "fiberpath/fock_oracle.hpp"
#include "fiberpath/polarization.hpp"
#include "fiberpath/radial_table.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#ifndef FIBERPATH_VERSION
#define FIBERPATH_VERSION "unknown"
#endif

namespace fiberpath::cli {

inline constexpr int schema_version = 1;

enum Exit : int { ok = 0, internal = 1, validation = 2, statistical = 3 };

/** 17 significant digits, the round-trip width for doubles. */
inline std::string g17(double x)
{
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", x == 0.0 ? 0.0 : x);  // no "-0"
    return b;
}

class Csv {
public:
    explicit Csv(std::string header) { os_ << header << '\n'; }
    template <class... T>
    void row(const T&... v)
    {
        bool first = true;
        ((os_ << (first ? "" : ",") << cell(v), first = false), ...);
        os_ << '\n';
    }
    std::string str() const { return os_.str(); }

private:
    static std::string cell(double x) { return g17(x); }
    static std::string cell(int x) { return std::to_string(x); }
    static std::string cell(long x) { return std::to_string(x); }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    std::ostringstream os_;
};

inline std::string p_header(int d)
{
    std::string h;
    for (int a = 0; a < d; ++a) h += (a ? "," : "") + (d == 3 ? std::string("P_") + "xyz"[a] : "P_" + std::to_string(a + 1));
    return h;
}

inline std::string p_cells(const Eigen::VectorXd& P)
{
    std::string s;
    for (Eigen::Index a = 0; a < P.size(); ++a) s += (a ? "," : "") + g17(P(a));
    return s;
}

inline ojson ordered(const nlohmann::json& j) { return ojson::parse(j.dump()); }

/** Everything a subcommand produces; written by the caller, from one thread. */
struct Artifacts {
    std::vector<std::pair<std::string, std::string>> files;  // file name, bytes
    ojson results = ojson::object();
};

struct Options {
    std::string config;
    std::string out;
    long long seed = -1;
    int threads = 0;
    std::string construction = "both";
    long samples = 10000;
    std::string checks;
    std::string inspect;
};

namespace detail {

inline EnsembleSpec ensemble(const ExperimentConfig& c)
{
    EnsembleSpec s;
    s.n_paths = c.path.n_paths;
    s.n_steps = c.path.n_steps;
    s.seed = c.path.seed;
    s.n_batches = c.path.n_batches;
    s.threads = c.path.threads;
    s.antithetic = c.path.antithetic;
    s.rule = c.path.rule;
    return s;
}

inline void need_modes(const ExperimentConfig& c, const std::string& what)
{
    if (c.model.kind == "continuum")
        throw config_error(what + " needs a finite mode set (model.kind = reference, modes or quadrature)");
}

inline void on_grid(double T, int n, const std::vector<double>& ts, const std::string& what)
{
    const PathGrid g(T, n);
    for (double t : ts) {
        try {
            g.index_of(t);
        } catch (const domain_error&) {
            throw config_error(what + ": time " + g17(t) + " is not on the " + std::to_string(n) +
                               "-step grid over [0, " + g17(T) + "]");
        }
    }
}

inline KFunction test_function(const ExperimentConfig& c, const ModeSet& m)
{
    if (c.estimator.f.size() != m.pairs())
        throw config_error("estimator.f_re needs one vector per +-k pair (" + std::to_string(m.pairs()) + ")");
    return KFunction::real_field(m, c.estimator.f);
}

/** Subcommand-specific checks that need the realized mode set; cheap, no sampling. */
inline void validate(const std::string& cmd, const ExperimentConfig& c)
{
    const int d = c.model.dim;
    for (const auto& P : c.estimator.P)
        if (P.size() != d) throw config_error("estimator.P has wrong dimension");
    if (cmd == "energy") {
        need_modes(c, "energy");
        on_grid(c.estimator.t_ladder.back(), c.path.n_steps, c.estimator.t_ladder, "estimator.t_ladder");
    } else if (cmd == "observable") {
        const auto& q = c.estimator.quantity;
        if (q == "expN" || q == "weyl" || q == "green") need_modes(c, "observable " + q);
        if (q == "expN" || q == "weyl")
            for (double t : c.path.t) on_grid(2 * t, c.path.n_steps, {t}, "path.t");
        if (q == "green") {
            const auto& e = c.estimator;
            on_grid(e.green_t.back(), c.path.n_steps, e.green_t, "estimator.green_t");
            bool any = false;
            for (double th : e.green_theta) any = any || th != 0.0;
            if (any && e.f.empty()) throw config_error("estimator.green_theta needs estimator.f_re");
        }
        if (q == "weyl" && c.estimator.f.empty()) throw config_error("observable weyl needs estimator.f_re");
    } else if (cmd == "compare-oracle") {
        need_modes(c, "compare-oracle");
        on_grid(2 * c.estimator.t_obs, c.path.n_steps, {c.estimator.t_obs}, "estimator.t_obs");
    } else if (cmd == "oracle") {
        need_modes(c, "oracle");
    } else if (cmd == "kernel-table") {
        if (c.model.kind != "continuum") throw config_error("kernel-table needs model.kind = continuum");
    }
}

inline std::size_t fock_size(const ExperimentConfig& c, const ModeSet& m, int extra = 0)
{
    return FockBasis::expected_size(int(m.size()) * (m.dim() - 1), c.oracle.n_max + extra);
}

inline void check_fock_size(const ExperimentConfig& c, const ModeSet& m, int extra)
{
    if (fock_size(c, m, extra) > 6000)
        throw config_error("truncated Fock space too large for dense diagonalization (" +
                           std::to_string(fock_size(c, m, extra)) + " states); lower oracle.n_max");
}

}  // namespace detail

inline Artifacts cmd_energy(const ExperimentConfig& c, const Model& m)
{
    Artifacts a;
    const EnsembleSpec spec = detail::ensemble(c);
    Csv csv(p_header(c.model.dim) + ",e,t1,t2,E_hat,stderr,n_paths,n_steps");
    a.results = ojson::array();
    for (const auto& P : c.estimator.P)
        for (double e : c.e) {
            const auto est = ground_energy(P, e, c.estimator.t_ladder, *m.kernel, spec);
            for (const auto& r : est.pairs)
                csv.row(p_cells(P), e, r.metadata["t1"].get<double>(), r.metadata["t2"].get<double>(),
                        r.mean.real(), r.std_error, spec.n_paths, spec.n_steps);
            ojson z = ojson::array();
            for (std::size_t i = 0; i < est.Z.size(); ++i)
                z.push_back({{"t", est.ladder[i]}, {"Z", est.Z[i].mean.real()}, {"stderr", est.Z[i].std_error}});
            a.results.push_back({{"P", vec_json(P)}, {"e", e}, {"E_hat", est.energy.mean.real()},
                                 {"stderr", est.energy.std_error}, {"Z", z},
                                 {"note", "two-point estimator, biased at finite t; compare rungs for a plateau"}});
        }
    a.files.push_back({".csv", csv.str()});
    return a;
}

inline Artifacts cmd_observable(const ExperimentConfig& c, const Model& m)
{
    Artifacts a;
    const EnsembleSpec spec = detail::ensemble(c);
    const auto& q = c.estimator.quantity;
    const int d = c.model.dim;
    a.results = ojson::array();
    if (q == "expN") {
        Csv csv("beta," + p_header(d) + ",e,t,value,stderr");
        for (double beta : c.estimator.beta)
            for (const auto& P : c.estimator.P)
                for (double e : c.e)
                    for (double t : c.path.t) {
                        const auto r = expectation_expN(beta, P, e, t, *m.kernel, spec);
                        csv.row(beta, p_cells(P), e, t, r.mean.real(), r.std_error);
                        a.results.push_back(ordered(r.metadata));
                        a.results.back()["value"] = r.mean.real();
                        a.results.back()["stderr"] = r.std_error;
                    }
        a.files.push_back({".csv", csv.str()});
    } else if (q == "partition" || q == "weyl") {
        Csv csv(p_header(d) + ",e,t,re,im,stderr");
        std::optional<KFunction> f;
        if (q == "weyl") f = detail::test_function(c, *m.modes);
        for (const auto& P : c.estimator.P)
            for (double e : c.e)
                for (double t : c.path.t) {
                    const auto r = q == "weyl" ? expectation_weyl(*f, P, e, t, *m.modes, m.ff, spec)
                                               : partition(P, t, e, *m.kernel, spec);
                    csv.row(p_cells(P), e, t, r.mean.real(), r.mean.imag(), r.std_error);
                    a.results.push_back(ordered(r.metadata));
                    a.results.back()["re"] = r.mean.real();
                    a.results.back()["im"] = r.mean.imag();
                    a.results.back()["stderr"] = r.std_error;
                }
        a.files.push_back({".csv", csv.str()});
    } else {
        const auto& es = c.estimator;
        std::optional<KFunction> f;
        if (!es.f.empty()) f = detail::test_function(c, *m.modes);
        std::vector<GreenBlock> sched;
        for (std::size_t j = 0; j < es.green_t.size(); ++j) {
            GreenBlock b;
            b.s = es.green_s[j];
            b.t = es.green_t[j];
            b.P = es.P.size() == 1 ? es.P[0] : es.P[j];
            if (es.green_theta[j] != 0.0) b.insertions.push_back({*f, es.green_theta[j]});
            sched.push_back(b);
        }
        Csv csv("e,blocks,re,im,stderr");
        for (double e : c.e) {
            const auto r = green_n_point(sched, e, *m.modes, m.ff, spec);
            csv.row(e, int(sched.size()), r.mean.real(), r.mean.imag(), r.std_error);
            a.results.push_back(ordered(r.metadata));
            a.results.back()["re"] = r.mean.real();
            a.results.back()["im"] = r.mean.imag();
            a.results.back()["stderr"] = r.std_error;
        }
        a.files.push_back({".csv", csv.str()});
    }
    return a;
}

/**
 * MC against the Fock oracle: partition over path.t, then expN (each beta) and
 * weyl (when f is given) at t_obs against ground-state values.
 */
inline Artifacts cmd_compare_oracle(const ExperimentConfig& c, const Model& m)
{
    Artifacts a;
    const EnsembleSpec spec = detail::ensemble(c);
    const int d = c.model.dim;
    const FockModel fm(*m.modes, m.ff, m.pb, c.oracle.n_max);
    std::optional<KFunction> f;
    if (!c.estimator.f.empty()) f = detail::test_function(c, *m.modes);

    Csv csv(std::string("quantity,") + p_header(d) + ",e,t,beta,mc_re,mc_im,stderr,oracle_re,oracle_im,sigma_dev,rel_dev");
    double max_sigma = 0, max_rel = 0;
    auto rows = ojson::array();
    auto record = [&](const std::string& qty, const Eigen::VectorXd& P, double e, double t, double beta,
                      const EstimateResult& r, cplx exact) {
        const double dev = std::abs(r.mean - exact);
        const double sig = r.std_error > 0 ? dev / r.std_error : (dev == 0 ? 0.0 : INFINITY);
        const double rel = dev / std::abs(exact);
        max_sigma = std::max(max_sigma, sig);
        max_rel = std::max(max_rel, rel);
        csv.row(qty, p_cells(P), e, t, beta, r.mean.real(), r.mean.imag(), r.std_error, exact.real(), exact.imag(),
                sig, rel);
        rows.push_back({{"quantity", qty}, {"P", vec_json(P)}, {"e", e}, {"t", t}, {"beta", beta},
                        {"mc", {r.mean.real(), r.mean.imag()}}, {"stderr", r.std_error},
                        {"oracle", {exact.real(), exact.imag()}}, {"sigma_dev", sig}, {"rel_dev", rel}});
    };

    const Eigen::VectorXcd vac = fm.vacuum();
    for (double e : c.e)
        for (const auto& P : c.estimator.P) {
            const Spectrum sp = spectrum(fm.build_H(P, e));
            for (double t : c.path.t)
                record("partition", P, e, t, 0.0, partition(P, t, e, *m.kernel, spec),
                       semigroup_element(vac, vac, sp, t));
            const Eigen::VectorXd g = ground_vector(sp);
            const double tobs = c.estimator.t_obs;
            for (double beta : c.estimator.beta)
                record("expN", P, e, tobs, beta, expectation_expN(beta, P, e, tobs, *m.kernel, spec),
                       number_weight(fm, g, beta));
            if (f) {
                const Eigen::MatrixXcd W = fm.weyl_operator(*f, -1.0);
                const cplx exact = g.cast<cplx>().dot(W * g.cast<cplx>());
                record("weyl", P, e, tobs, 0.0, expectation_weyl(*f, P, e, tobs, *m.modes, m.ff, spec), exact);
            }
        }
    a.files.push_back({".csv", csv.str()});
    a.results = {{"rows", rows}, {"max_sigma_deviation", max_sigma}, {"max_rel_deviation", max_rel},
                 {"n_max", c.oracle.n_max}, {"fock_dimension", fm.basis().size()},
                 {"note", "expN and weyl compare finite-t ratios with ground-state values"}};
    return a;
}

inline Artifacts cmd_oracle(const ExperimentConfig& c, const Model& m, const std::vector<std::string>& checks,
                            std::uint64_t seed)
{
    Artifacts a;
    const int d = c.model.dim;
    const FockModel fm(*m.modes, m.ff, m.pb, c.oracle.n_max);
    const Eigen::VectorXd P0 = Eigen::VectorXd::Zero(d);
    auto has = [&](const char* k) { return std::find(checks.begin(), checks.end(), k) != checks.end(); };
    a.results["fock_dimension"] = fm.basis().size();
    a.results["n_max"] = c.oracle.n_max;

    if (has("spectra")) {
        Csv csv(p_header(d) + ",e,level,eigenvalue");
        for (const auto& P : c.estimator.P)
            for (double e : c.e) {
                const Spectrum sp = spectrum(fm.build_H(P, e), false);
                for (int l = 0; l < std::min<int>(c.oracle.levels, int(sp.values.size())); ++l)
                    csv.row(p_cells(P), e, l, sp.values(l));
            }
        a.files.push_back({".csv", csv.str()});
    }
    auto energy = [&](const Eigen::VectorXd& P, double e2) {
        return spectrum(fm.build_H(P, std::sqrt(e2)), false).values(0);
    };
    if (has("energy_curves")) {
        Csv csv(p_header(d) + ",e2,E");
        auto curves = ojson::array();
        for (const auto& P : c.estimator.P) {
            auto pts = ojson::array();
            for (double e2 : c.oracle.e2_grid) {
                const double E = energy(P, e2);
                csv.row(p_cells(P), e2, E);
                pts.push_back({{"e2", e2}, {"E", E}});
            }
            curves.push_back({{"P", vec_json(P)}, {"points", pts}});
        }
        a.files.push_back({"_energy_curves.csv", csv.str()});
        a.results["energy_curves"] = curves;
    }
    if (has("concavity")) {
        const auto& x = c.oracle.e2_grid;
        std::vector<double> E;
        for (double e2 : x) E.push_back(energy(P0, e2));
        auto table = ojson::array();
        double max_d2 = -INFINITY;
        bool monotone = true;
        for (std::size_t i = 0; i + 1 < E.size(); ++i) monotone = monotone && E[i + 1] >= E[i] - 1e-12;
        for (std::size_t i = 1; i + 1 < E.size(); ++i) {
            // second divided difference scaled by h^2, i.e. E[i+1] - 2E[i] + E[i-1] on a uniform grid
            const double h1 = x[i] - x[i - 1], h2 = x[i + 1] - x[i], h = 0.5 * (h1 + h2);
            const double d2 = ((E[i + 1] - E[i]) / h2 - (E[i] - E[i - 1]) / h1) * h;
            max_d2 = std::max(max_d2, d2);
            table.push_back({{"e2", x[i]}, {"second_difference", d2}});
        }
        a.results["concavity"] = {{"E", E}, {"e2", x}, {"second_differences", table},
                                  {"max_second_difference", max_d2}, {"monotone", monotone},
                                  {"concave", max_d2 <= 1e-9}};
    }
    if (has("multiplicity")) {
        const FockModel fm2(*m.modes, m.ff, m.pb, c.oracle.n_max + 2);
        auto rows = ojson::array();
        for (double e : c.e) {
            const Spectrum s1 = spectrum(fm.build_H(P0, e)), s2 = spectrum(fm2.build_H(P0, e));
            const GroundState g1 = ground_state(s1), g2 = ground_state(s2);
            const Eigen::VectorXd v1 = ground_vector(s1), v2 = ground_vector(s2);
            const double n1 = v1.dot(fm.number().cwiseProduct(v1)), n2 = v2.dot(fm2.number().cwiseProduct(v2));
            const double dE = std::abs(g2.energy - g1.energy) / std::max(std::abs(g2.energy), 1e-300);
            const double dN = std::abs(n2 - n1) / std::max(std::abs(n2), 1e-300);
            rows.push_back({{"e", e}, {"E0", g1.energy}, {"multiplicity", g1.multiplicity}, {"gap", g1.gap},
                            {"E0_next", g2.energy}, {"multiplicity_next", g2.multiplicity},
                            {"N0", n1}, {"N0_next", n2}, {"drift_E0", dE}, {"drift_N0", dN}});
        }
        a.results["multiplicity"] = rows;
    }
    if (has("positivity")) {
        auto rows = ojson::array();
        for (double e : c.e) {
            const auto r = positivity_check(c.oracle.positivity_t, e, c.oracle.positivity_grid,
                                            c.oracle.positivity_n_max);
            rows.push_back({{"e", e}, {"t", c.oracle.positivity_t}, {"min_entry", r.min_entry},
                            {"interior_min", r.interior_min}, {"max_imag", r.max_imag}, {"tail", r.tail},
                            {"verdict", r.verdict}, {"n_max", r.n_max}, {"grid", r.grid}, {"L", r.L}});
        }
        a.results["positivity"] = rows;
    }
    if (has("relative-bound")) {
        const auto r = relative_bound_check(fm, c.oracle.trials, seed);
        a.results["relative_bound"] = {{"trials", r.trials}, {"violations", r.violations},
                                       {"max_violation", r.max_violation}, {"max_ratio", r.max_ratio}};
    }
    return a;
}

/** Max residuals of the polarization identities over random (k, phi) and rotations. */
inline ojson polarization_report(const std::string& construction, long samples, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    auto rand_unit = [&] {
        Vec3 v(z(rng), z(rng), z(rng));
        return Vec3(v.normalized());
    };
    ojson out = ojson::object();
    std::vector<std::pair<std::string, PolarizationBasis>> bases;
    if (construction == "meridian" || construction == "both") bases.push_back({"meridian", PolarizationBasis::meridian()});
    if (construction == "axis-cross" || construction == "both") {
        bases.push_back({"axis-cross", PolarizationBasis::axis_cross(rand_unit())});
    }
    for (const auto& [name, b] : bases) {
        double tr = 0, on = 0, co = 0, coh = 0, th = 0, proj_eig = 0;
        long resampled = 0;
        for (long n = 0; n < samples; ++n) {
            Vec3 k;
            for (;;) {
                k = rand_unit() * std::exp(z(rng));
                // stay off the excluded axis and the rotated image of k
                if (k.normalized().cross(b.axis).norm() > 1e-3) break;
                ++resampled;
            }
            const double phi = u(rng);
            const FrameCheck f = check_frame(k, b(k));
            tr = std::max(tr, f.transversality);
            on = std::max(on, f.orthonormality);
            co = std::max(co, f.completeness);
            coh = std::max(coh, coherence_residual(b, k, phi));
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(transverse_projector(k));
            const Eigen::Vector3d want(0, 1, 1);
            proj_eig = std::max(proj_eig, (es.eigenvalues() - want).cwiseAbs().maxCoeff());
            Mat3 R;
            Vec3 rk;
            do {
                R = rotation_matrix(rand_unit(), u(rng));
                rk = R * k;
            } while (rk.normalized().cross(b.axis).norm() <= 1e-3);
            th = std::max(th, theta_angle(R, k, b).residual);
        }
        out[name] = {{"axis", {b.axis(0), b.axis(1), b.axis(2)}}, {"winding", b.winding},
                     {"samples", samples}, {"resampled", resampled},
                     {"transversality", tr}, {"orthonormality", on}, {"completeness", co},
                     {"projector_eigenvalues", proj_eig}, {"coherence", coh}, {"theta_residual", th},
                     {"pass", tr <= 1e-12 && on <= 1e-12 && co <= 1e-12 && proj_eig <= 1e-12 && coh <= 1e-10 &&
                                  th <= 1e-10}};
    }
    return out;
}

namespace detail {

inline std::string env(const char* name)
{
    const char* v = std::getenv(name);
    return v ? v : "";
}

inline void apply_overrides(ExperimentConfig& c, const Options& o)
{
    // flags win over the environment, which wins over the file
    const std::string es = env("FIBERPATH_SEED"), et = env("FIBERPATH_THREADS");
    if (o.seed >= 0) {
        c.path.seed = std::uint64_t(o.seed);
    } else if (!es.empty()) {
        try {
            std::size_t n = 0;
            const unsigned long long v = std::stoull(es, &n);
            if (n != es.size()) throw std::invalid_argument(es);
            c.path.seed = v;
        } catch (const std::exception&) {
            throw config_error("FIBERPATH_SEED must be a nonnegative integer");
        }
    }
    if (o.threads > 0) {
        c.path.threads = o.threads;
    } else if (!et.empty()) {
        try {
            std::size_t n = 0;
            const int v = std::stoi(et, &n);
            if (n != et.size() || v < 1) throw std::invalid_argument(et);
            c.path.threads = v;
        } catch (const std::exception&) {
            throw config_error("FIBERPATH_THREADS must be a positive integer");
        }
    }
    if (!o.out.empty()) c.output.dir = o.out;
}

inline std::vector<std::string> split_checks(const std::string& s)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s + ",") {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (ch != ' ') {
            cur += ch;
        }
    }
    return out;
}

inline void write_file(const std::filesystem::path& p, const std::string& bytes)
{
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os) throw std::runtime_error("cannot write " + p.string());
}

}  // namespace detail

/**
 * Parse argv, run one subcommand, write CSV + JSON summary. Exit 0 on success,
 * 2 on validation errors (nothing written), 3 on statistical failures (summary
 * written with the error).
 */
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    CLI::App app{"path-integral Monte Carlo for Pauli-Fierz fiber Hamiltonians", "fiberpath"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(FIBERPATH_VERSION));
    Options o;
    auto common = [&](CLI::App* s, bool need_config) {
        auto* opt = s->add_option("--config", o.config, "experiment config (TOML subset)");
        if (need_config) opt->required();
        s->add_option("--out", o.out, "output directory (overrides output.dir)");
        s->add_option("--seed", o.seed, "RNG seed (overrides FIBERPATH_SEED and path.seed)")->check(CLI::NonNegativeNumber);
        s->add_option("--threads", o.threads, "worker threads (overrides FIBERPATH_THREADS)")->check(CLI::PositiveNumber);
    };
    auto* energy = app.add_subcommand("energy", "ground energy E(P, e^2) from a t-ladder");
    common(energy, true);
    auto* observable = app.add_subcommand("observable", "partition | expN | weyl | green at finite t");
    common(observable, true);
    auto* compare = app.add_subcommand("compare-oracle", "MC estimators against the Fock-space oracle");
    common(compare, true);
    auto* oracle = app.add_subcommand("oracle", "spectra, energy curves, concavity, multiplicity, positivity, relative bound");
    common(oracle, true);
    oracle->add_option("--checks", o.checks, "comma-separated checks (overrides oracle.checks)");
    auto* pol = app.add_subcommand("check-polarization", "residuals of the polarization identities as JSON");
    common(pol, false);
    pol->add_option("--construction", o.construction, "meridian | axis-cross | both")
        ->check(CLI::IsMember({"meridian", "axis-cross", "both"}));
    pol->add_option("--samples", o.samples, "random (k, phi) samples")->check(CLI::PositiveNumber);
    auto* table = app.add_subcommand("kernel-table", "build or inspect a continuum kernel cache");
    common(table, false);
    table->add_option("--inspect", o.inspect, "print the header of an existing cache and verify it against --config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return ok;
    } catch (const CLI::CallForVersion& e) {
        out << FIBERPATH_VERSION << '\n';
        return ok;
    } catch (const CLI::ParseError& e) {
        err << ojson{{"error", e.what()}, {"exit", int(validation)}}.dump() << '\n';
        return validation;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();

    ojson summary = {{"schema_version", schema_version}, {"version", FIBERPATH_VERSION}, {"subcommand", cmd}};
    ExperimentConfig c;
    std::optional<Model> model;
    std::vector<std::string> checks;
    try {
        if (!o.config.empty())
            c = load_config(o.config);
        else if (cmd != "check-polarization" && cmd != "kernel-table")
            throw config_error("--config is required");
        else if (cmd == "kernel-table" && o.inspect.empty())
            throw config_error("kernel-table needs --config to build a cache");
        detail::apply_overrides(c, o);
        detail::validate(cmd, c);
        checks = o.checks.empty() ? c.oracle.checks : detail::split_checks(o.checks);
        for (const auto& k : checks)
            if (!std::set<std::string>{"spectra", "energy_curves", "concavity", "multiplicity", "positivity",
                                       "relative-bound"}
                     .count(k))
                throw config_error("unknown oracle check '" + k + "'");
        if (std::filesystem::exists(c.output.dir) && !std::filesystem::is_directory(c.output.dir))
            throw config_error("output.dir '" + c.output.dir + "' is not a directory");
        if (cmd != "check-polarization" && !(cmd == "kernel-table" && !o.inspect.empty() && o.config.empty())) {
            const double tmax = *std::max_element(c.path.t.begin(), c.path.t.end());
            if (cmd != "kernel-table") {
                model = build_model(c.model, 2 * tmax, 10.0 * std::sqrt(2 * tmax));
                if (model->modes && (cmd == "oracle" || cmd == "compare-oracle")) {
                    const int extra = std::find(checks.begin(), checks.end(), "multiplicity") != checks.end() && cmd == "oracle" ? 2 : 0;
                    detail::check_fock_size(c, *model->modes, extra);
                }
            }
        }
    } catch (const domain_error& e) {
        err << ojson{{"error", e.what()}, {"exit", int(validation)}}.dump() << '\n';
        return validation;
    }

    summary["seed"] = c.path.seed;
    summary["threads"] = c.path.threads;
    summary["config"] = c.echo;
    summary["errors"] = ojson::array();
    Artifacts art;
    int code = ok;
    try {
        if (cmd == "energy") {
            art = cmd_energy(c, *model);
        } else if (cmd == "observable") {
            art = cmd_observable(c, *model);
        } else if (cmd == "compare-oracle") {
            art = cmd_compare_oracle(c, *model);
        } else if (cmd == "oracle") {
            art = cmd_oracle(c, *model, checks, c.path.seed);
        } else if (cmd == "check-polarization") {
            art.results = polarization_report(o.construction, o.samples, c.path.seed);
            out << art.results.dump(2) << '\n';
            if (o.out.empty() && o.config.empty()) return ok;
        } else if (cmd == "kernel-table") {
            if (!o.inspect.empty()) {
                FormFactor ff = c.model.form_factor == "table"
                                    ? FormFactor::table(c.model.table_k, c.model.table_v, 3)
                                    : FormFactor::sharp(c.model.cutoff, 3);
                const RadialTable t = RadialTable::load(o.inspect, ff);
                art.results = {{"file", o.inspect}, {"form_factor", ff.kind_name()}, {"cutoff", ff.cutoff},
                               {"tau_max", t.tau_max()}, {"n_tau", t.n_tau()}, {"r_max", t.r_max()},
                               {"n_r", t.n_r()}, {"A00", t.A_at(0, 0)}, {"B00", t.B_at(0, 0)},
                               {"format_version", RadialTable::format_version}};
                out << art.results.dump(2) << '\n';
                return ok;
            }
            const double tmax = *std::max_element(c.path.t.begin(), c.path.t.end());
            const double tau = c.model.tau_max > 0 ? c.model.tau_max : tmax;
            const double r = c.model.r_max > 0 ? c.model.r_max : 10.0 * std::sqrt(tmax);
            const FormFactor ff = c.model.form_factor == "table" ? FormFactor::table(c.model.table_k, c.model.table_v, 3)
                                                                 : FormFactor::sharp(c.model.cutoff, 3);
            const RadialTable t = RadialTable::build(ff, tau, r);
            std::ostringstream bytes(std::ios::binary);
            t.save(bytes);
            art.files.push_back({".fpk", bytes.str()});
            art.results = {{"tau_max", tau}, {"n_tau", t.n_tau()}, {"r_max", r}, {"n_r", t.n_r()},
                           {"A00", t.A_at(0, 0)}, {"B00", t.B_at(0, 0)}};
        }
    } catch (const statistical_failure& e) {
        summary["errors"].push_back({{"kind", "statistical"}, {"message", e.what()}});
        art.files.clear();
        code = statistical;
    } catch (const domain_error& e) {
        err << ojson{{"error", e.what()}, {"exit", int(validation)}}.dump() << '\n';
        return validation;
    } catch (const std::exception& e) {
        summary["errors"].push_back({{"kind", "internal"}, {"message", e.what()}});
        art.files.clear();
        code = internal;
    }
    summary["results"] = art.results;
    summary["exit"] = code;
    if (!o.config.empty() || !o.out.empty()) {
        try {
            const std::filesystem::path dir(c.output.dir);
            std::filesystem::create_directories(dir);
            for (const auto& [suffix, bytes] : art.files) detail::write_file(dir / (c.output.prefix + suffix), bytes);
            detail::write_file(dir / (c.output.prefix + ".json"), summary.dump(2) + "\n");
        } catch (const std::exception& e) {
            err << ojson{{"error", e.what()}, {"exit", int(internal)}}.dump() << '\n';
            return internal;
        }
    }
    if (code != ok) err << summary["errors"].dump() << '\n';
    return code;
}

}  // namespace fiberpath::cli
