#pragma once

#include "fiberpath/action.hpp"
#include "fiberpath/field_model.hpp"
#include "fiberpath/form_factor.hpp"
#include "fiberpath/polarization.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fiberpath {

/** Anything wrong with a configuration; always raised before compute starts. */
struct config_error : domain_error {
    using domain_error::domain_error;
};

using ojson = nlohmann::ordered_json;

namespace toml {

/**
 * Parser for the subset of TOML the configs use: [table] and [a.b] headers,
 * key = value, basic strings, integers, floats, booleans, and (nested, possibly
 * multi-line) arrays. Comments start with '#'. Duplicate keys are errors.
 */
class Parser {
public:
    explicit Parser(std::string text) : s_(std::move(text)) {}

    ojson parse()
    {
        ojson root = ojson::object();
        ojson* table = &root;
        while (true) {
            skip_ws_comments(true);
            if (eof()) break;
            if (peek() == '[') {
                ++i_;
                table = &root;
                for (const auto& part : dotted_key(']')) {
                    if (!table->contains(part)) (*table)[part] = ojson::object();
                    table = &(*table)[part];
                    if (!table->is_object()) fail("'" + part + "' is not a table");
                }
                expect(']');
                end_of_line();
                continue;
            }
            const auto key = dotted_key('=');
            expect('=');
            skip_ws_comments(false);
            ojson v = value();
            ojson* t = table;
            for (std::size_t k = 0; k + 1 < key.size(); ++k) {
                if (!t->contains(key[k])) (*t)[key[k]] = ojson::object();
                t = &(*t)[key[k]];
                if (!t->is_object()) fail("'" + key[k] + "' is not a table");
            }
            if (t->contains(key.back())) fail("duplicate key '" + key.back() + "'");
            (*t)[key.back()] = std::move(v);
            end_of_line();
        }
        return root;
    }

private:
    [[noreturn]] void fail(const std::string& what) const
    {
        int line = 1;
        for (std::size_t k = 0; k < i_ && k < s_.size(); ++k) line += s_[k] == '\n';
        throw config_error("config line " + std::to_string(line) + ": " + what);
    }

    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[i_]; }

    void skip_ws_comments(bool newlines)
    {
        while (!eof()) {
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n')) {
                ++i_;
            } else if (c == '#') {
                while (!eof() && peek() != '\n') ++i_;
            } else {
                break;
            }
        }
    }

    void expect(char c)
    {
        skip_ws_comments(false);
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++i_;
    }

    void end_of_line()
    {
        skip_ws_comments(false);
        if (!eof() && peek() != '\n') fail("unexpected trailing characters");
    }

    std::vector<std::string> dotted_key(char stop)
    {
        std::vector<std::string> parts;
        while (true) {
            skip_ws_comments(false);
            std::string k;
            if (peek() == '"') {
                k = string_value();
            } else {
                while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
                    k += s_[i_++];
            }
            if (k.empty()) fail("expected a key");
            parts.push_back(k);
            skip_ws_comments(false);
            if (peek() == '.') {
                ++i_;
                continue;
            }
            if (peek() != stop) fail(std::string("expected '") + stop + "' after key");
            return parts;
        }
    }

    std::string string_value()
    {
        ++i_;  // opening quote
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = s_[i_++];
            if (c == '"') return out;
            if (c == '\\') {
                if (eof()) fail("bad escape");
                const char e = s_[i_++];
                switch (e) {
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                default: fail(std::string("unsupported escape \\") + e);
                }
                continue;
            }
            out += c;
        }
    }

    ojson value()
    {
        const char c = peek();
        if (c == '"') return string_value();
        if (c == '[') {
            ++i_;
            ojson a = ojson::array();
            while (true) {
                skip_ws_comments(true);
                if (peek() == ']') {
                    ++i_;
                    return a;
                }
                a.push_back(value());
                skip_ws_comments(true);
                if (peek() == ',') {
                    ++i_;
                    continue;
                }
                if (peek() != ']') fail("expected ',' or ']' in array");
            }
        }
        std::string tok;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || std::string("+-._").find(peek()) != std::string::npos))
            tok += s_[i_++];
        if (tok == "true") return true;
        if (tok == "false") return false;
        if (tok.empty()) fail("expected a value");
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        const bool is_int = clean.find_first_of(".eE") == std::string::npos;
        try {
            std::size_t used = 0;
            if (is_int) {
                const long long v = std::stoll(clean, &used);
                if (used == clean.size()) return v;
            } else {
                const double v = std::stod(clean, &used);
                if (used == clean.size() && std::isfinite(v)) return v;
            }
        } catch (const std::exception&) {
        }
        fail("cannot read value '" + tok + "'");
    }

    std::string s_;
    std::size_t i_ = 0;
};

inline ojson parse(const std::string& text) { return Parser(text).parse(); }

inline ojson parse_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw config_error("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace toml

struct ModelSpec {
    std::string kind = "reference";  // reference | modes | quadrature | continuum
    std::string form_factor = "sharp-cutoff";
    double cutoff = 1.0;
    int dim = 3;
    std::vector<double> table_k, table_v;
    std::vector<Eigen::VectorXd> modes_k;  // one member of each +-k pair
    std::vector<double> modes_w;
    std::vector<int> quadrature{4, 4, 4};  // n_r, n_theta, n_phi
    std::string polarization = "axis-cross";
    Vec3 axis = Vec3::UnitX();
    double tau_max = 0, r_max = 0;  // continuum table extent; 0 = derive from the path block
};

struct PathSpec {
    std::vector<double> t{1.0};
    int n_steps = 128;
    long n_paths = 10000;
    std::uint64_t seed = 1;
    int threads = 1;
    int n_batches = 32;
    bool antithetic = true;
    DiagonalRule rule = DiagonalRule::deterministic_qv;
};

struct EstimatorSpec {
    std::string quantity = "partition";  // partition | expN | weyl | green
    std::vector<Eigen::VectorXd> P;
    std::vector<double> beta{1.0};
    std::vector<Eigen::VectorXcd> f;  // +k values, one per pair
    std::vector<double> t_ladder{2.0, 4.0};
    double t_obs = 3.0;  // horizon for ground-state observables
    std::vector<double> green_s, green_t, green_theta;
};

struct OracleSpec {
    int n_max = 8;
    std::vector<std::string> checks{"spectra"};
    int levels = 6;
    std::vector<double> e2_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    int trials = 1000;
    double positivity_t = 1.0;
    int positivity_grid = 64;
    int positivity_n_max = 14;
};

struct OutputSpec {
    std::string dir = ".";
    std::string prefix = "fiberpath";
};

struct ExperimentConfig {
    ModelSpec model;
    PathSpec path;
    std::vector<double> e{0.0};
    EstimatorSpec estimator;
    OracleSpec oracle;
    OutputSpec output;
    ojson echo = ojson::object();
};

namespace detail {

inline void only_keys(const ojson& t, const std::string& where, std::initializer_list<const char*> allowed)
{
    if (!t.is_object()) throw config_error("'" + where + "' must be a table");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : t.items())
        if (!ok.count(k)) throw config_error("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

inline double num(const ojson& v, const std::string& key)
{
    if (!v.is_number()) throw config_error("'" + key + "' must be a number");
    return v.get<double>();
}

inline long integer(const ojson& v, const std::string& key)
{
    if (!v.is_number_integer()) throw config_error("'" + key + "' must be an integer");
    return v.get<long>();
}

inline std::string str(const ojson& v, const std::string& key)
{
    if (!v.is_string()) throw config_error("'" + key + "' must be a string");
    return v.get<std::string>();
}

inline std::vector<double> nums(const ojson& v, const std::string& key)
{
    if (v.is_number()) return {v.get<double>()};
    if (!v.is_array()) throw config_error("'" + key + "' must be a number or an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) out.push_back(num(x, key));
    return out;
}

inline std::vector<Eigen::VectorXd> vectors(const ojson& v, const std::string& key, int d)
{
    if (!v.is_array()) throw config_error("'" + key + "' must be an array");
    // a single vector may be written flat
    if (!v.empty() && v.front().is_number()) {
        ojson wrapped = ojson::array();
        wrapped.push_back(v);
        return vectors(wrapped, key, d);
    }
    std::vector<Eigen::VectorXd> out;
    for (const auto& row : v) {
        const auto x = nums(row, key);
        if (int(x.size()) != d) throw config_error("'" + key + "' entries must have " + std::to_string(d) + " components");
        out.push_back(Eigen::Map<const Eigen::VectorXd>(x.data(), d));
    }
    return out;
}

inline void finite(double x, const std::string& key)
{
    if (!std::isfinite(x)) throw config_error("'" + key + "' must be finite");
}

inline void positive(double x, const std::string& key)
{
    if (!(x > 0) || !std::isfinite(x)) throw config_error("'" + key + "' must be positive");
}

}  // namespace detail

/** Validate a parsed document; every check runs before any compute. */
inline ExperimentConfig make_config(const ojson& doc)
{
    using namespace detail;
    ExperimentConfig c;
    c.echo = doc;
    only_keys(doc, "", {"model", "path", "e", "estimator", "oracle", "output"});

    if (doc.contains("model")) {
        const auto& m = doc["model"];
        only_keys(m, "model", {"kind", "form_factor", "cutoff", "dim", "table_k", "table_v", "modes_k", "modes_w",
                               "quadrature", "polarization", "axis", "tau_max", "r_max"});
        auto& s = c.model;
        if (m.contains("kind")) s.kind = str(m["kind"], "model.kind");
        if (!std::set<std::string>{"reference", "modes", "quadrature", "continuum"}.count(s.kind))
            throw config_error("model.kind must be reference, modes, quadrature or continuum");
        if (m.contains("form_factor")) s.form_factor = str(m["form_factor"], "model.form_factor");
        if (s.form_factor != "sharp-cutoff" && s.form_factor != "table")
            throw config_error("model.form_factor must be sharp-cutoff or table");
        if (m.contains("cutoff")) s.cutoff = num(m["cutoff"], "model.cutoff");
        positive(s.cutoff, "model.cutoff");
        if (m.contains("dim")) s.dim = int(integer(m["dim"], "model.dim"));
        if (s.dim < 2 || s.dim > 8) throw config_error("model.dim must be in [2, 8]");
        if (m.contains("table_k")) s.table_k = nums(m["table_k"], "model.table_k");
        if (m.contains("table_v")) s.table_v = nums(m["table_v"], "model.table_v");
        if (s.form_factor == "table") {
            try {
                FormFactor::table(s.table_k, s.table_v, s.dim);
            } catch (const domain_error& e) {
                throw config_error(std::string("model.table_k/table_v: ") + e.what());
            }
        }
        if (m.contains("modes_k")) s.modes_k = vectors(m["modes_k"], "model.modes_k", s.dim);
        if (m.contains("modes_w")) s.modes_w = nums(m["modes_w"], "model.modes_w");
        if (s.kind == "modes") {
            if (s.modes_k.empty()) throw config_error("model.kind = modes needs model.modes_k");
            if (s.modes_w.empty()) s.modes_w.assign(s.modes_k.size(), 1.0);
            if (s.modes_w.size() != s.modes_k.size()) throw config_error("model.modes_w must match model.modes_k");
            for (double w : s.modes_w) positive(w, "model.modes_w");
            for (const auto& k : s.modes_k)
                if (!(k.norm() > 0)) throw config_error("model.modes_k entries must be nonzero");
        }
        if (m.contains("quadrature")) {
            const auto q = nums(m["quadrature"], "model.quadrature");
            if (q.size() != 3) throw config_error("model.quadrature must be [n_r, n_theta, n_phi]");
            s.quadrature.clear();
            for (double x : q) {
                if (x < 1 || x != std::floor(x)) throw config_error("model.quadrature entries must be integers >= 1");
                s.quadrature.push_back(int(x));
            }
        }
        if ((s.kind == "quadrature" || s.kind == "continuum") && s.dim != 3)
            throw config_error("model.kind = " + s.kind + " requires dim = 3");
        if (m.contains("polarization")) s.polarization = str(m["polarization"], "model.polarization");
        if (s.polarization != "axis-cross" && s.polarization != "meridian")
            throw config_error("model.polarization must be axis-cross or meridian");
        if (m.contains("axis")) {
            const auto a = nums(m["axis"], "model.axis");
            if (a.size() != 3) throw config_error("model.axis must have 3 components");
            s.axis = Vec3(a[0], a[1], a[2]);
            if (!(s.axis.norm() > 0)) throw config_error("model.axis must be nonzero");
            s.axis.normalize();
        }
        if (m.contains("tau_max")) s.tau_max = num(m["tau_max"], "model.tau_max");
        if (m.contains("r_max")) s.r_max = num(m["r_max"], "model.r_max");
        if (s.tau_max < 0 || s.r_max < 0) throw config_error("model.tau_max and model.r_max must be >= 0");
    }
    if (c.model.kind == "reference") c.model.dim = 3;

    if (doc.contains("path")) {
        const auto& p = doc["path"];
        only_keys(p, "path", {"t", "n_steps", "n_paths", "seed", "threads", "n_batches", "antithetic", "diagonal_rule"});
        auto& s = c.path;
        if (p.contains("t")) s.t = nums(p["t"], "path.t");
        if (p.contains("n_steps")) s.n_steps = int(integer(p["n_steps"], "path.n_steps"));
        if (p.contains("n_paths")) s.n_paths = integer(p["n_paths"], "path.n_paths");
        if (p.contains("seed")) {
            const long v = integer(p["seed"], "path.seed");
            if (v < 0) throw config_error("'path.seed' must be >= 0");
            s.seed = std::uint64_t(v);
        }
        if (p.contains("threads")) s.threads = int(integer(p["threads"], "path.threads"));
        if (p.contains("n_batches")) s.n_batches = int(integer(p["n_batches"], "path.n_batches"));
        if (p.contains("antithetic")) {
            if (!p["antithetic"].is_boolean()) throw config_error("'path.antithetic' must be a boolean");
            s.antithetic = p["antithetic"].get<bool>();
        }
        if (p.contains("diagonal_rule")) {
            const auto r = str(p["diagonal_rule"], "path.diagonal_rule");
            if (r == "deterministic-qv")
                s.rule = DiagonalRule::deterministic_qv;
            else if (r == "realized-increments")
                s.rule = DiagonalRule::realized_increments;
            else
                throw config_error("path.diagonal_rule must be deterministic-qv or realized-increments");
        }
    }
    {
        const auto& s = c.path;
        if (s.t.empty()) throw config_error("path.t must not be empty");
        for (double t : s.t) positive(t, "path.t");
        if (s.n_steps < 1) throw config_error("path.n_steps must be >= 1");
        if (s.n_batches < 16) throw config_error("path.n_batches must be >= 16");
        if (s.n_paths < 2L * s.n_batches) throw config_error("path.n_paths must be at least 2 n_batches");
        if (s.antithetic && s.n_paths % 2) throw config_error("path.n_paths must be even with antithetic pairing");
        if (s.threads < 1) throw config_error("path.threads must be >= 1");
    }

    if (doc.contains("e")) c.e = nums(doc["e"], "e");
    if (c.e.empty()) throw config_error("'e' must not be empty");
    for (double x : c.e) finite(x, "e");

    c.estimator.P = {Eigen::VectorXd::Zero(c.model.dim)};
    if (doc.contains("estimator")) {
        const auto& m = doc["estimator"];
        only_keys(m, "estimator", {"quantity", "P", "beta", "f_re", "f_im", "t_ladder", "t_obs", "green_s", "green_t",
                                   "green_theta"});
        auto& s = c.estimator;
        if (m.contains("quantity")) s.quantity = str(m["quantity"], "estimator.quantity");
        if (!std::set<std::string>{"partition", "expN", "weyl", "green"}.count(s.quantity))
            throw config_error("estimator.quantity must be partition, expN, weyl or green");
        if (m.contains("P")) s.P = vectors(m["P"], "estimator.P", c.model.dim);
        if (s.P.empty()) throw config_error("estimator.P must not be empty");
        for (const auto& P : s.P)
            for (Eigen::Index a = 0; a < P.size(); ++a) finite(P(a), "estimator.P");
        if (m.contains("beta")) s.beta = nums(m["beta"], "estimator.beta");
        for (double b : s.beta)
            if (!(b >= 0) || !std::isfinite(b)) throw config_error("estimator.beta must be >= 0");
        std::vector<Eigen::VectorXd> fr, fi;
        if (m.contains("f_re")) fr = vectors(m["f_re"], "estimator.f_re", c.model.dim);
        if (m.contains("f_im")) fi = vectors(m["f_im"], "estimator.f_im", c.model.dim);
        if (!fi.empty() && fi.size() != fr.size()) throw config_error("estimator.f_im must match estimator.f_re");
        for (std::size_t q = 0; q < fr.size(); ++q) {
            Eigen::VectorXcd v = fr[q].cast<cplx>();
            if (!fi.empty()) v += cplx(0, 1) * fi[q].cast<cplx>();
            s.f.push_back(v);
        }
        if (m.contains("t_ladder")) s.t_ladder = nums(m["t_ladder"], "estimator.t_ladder");
        if (s.t_ladder.size() < 2) throw config_error("estimator.t_ladder needs at least 2 horizons");
        for (std::size_t i = 0; i < s.t_ladder.size(); ++i)
            if (!(s.t_ladder[i] > (i ? s.t_ladder[i - 1] : 0.0)))
                throw config_error("estimator.t_ladder must be positive and increasing");
        if (m.contains("t_obs")) s.t_obs = num(m["t_obs"], "estimator.t_obs");
        positive(s.t_obs, "estimator.t_obs");
        if (m.contains("green_s")) s.green_s = nums(m["green_s"], "estimator.green_s");
        if (m.contains("green_t")) s.green_t = nums(m["green_t"], "estimator.green_t");
        if (m.contains("green_theta")) s.green_theta = nums(m["green_theta"], "estimator.green_theta");
        if (s.quantity == "green") {
            const std::size_t n = s.green_t.size();
            if (n == 0) throw config_error("estimator.green_t must not be empty");
            if (s.green_s.empty()) s.green_s.assign(n, 0.0);
            if (s.green_theta.empty()) s.green_theta.assign(n, 0.0);
            if (s.green_s.size() != n || s.green_theta.size() != n)
                throw config_error("estimator.green_s, green_t and green_theta must have equal length");
            if (s.P.size() != 1 && s.P.size() != n)
                throw config_error("estimator.P must hold one momentum or one per green block");
            for (std::size_t j = 0; j < n; ++j) {
                if (!(s.green_t[j] > (j ? s.green_t[j - 1] : 0.0)))
                    throw config_error("estimator.green_t must be positive and strictly increasing");
                if (s.green_s[j] < (j ? s.green_s[j - 1] : 0.0))
                    throw config_error("estimator.green_s must be nonnegative and nondecreasing");
            }
        }
    }

    if (doc.contains("oracle")) {
        const auto& m = doc["oracle"];
        only_keys(m, "oracle", {"n_max", "checks", "levels", "e2_grid", "trials", "positivity_t", "positivity_grid",
                                "positivity_n_max"});
        auto& s = c.oracle;
        if (m.contains("n_max")) s.n_max = int(integer(m["n_max"], "oracle.n_max"));
        if (m.contains("checks")) {
            s.checks.clear();
            if (!m["checks"].is_array()) throw config_error("oracle.checks must be an array of strings");
            for (const auto& x : m["checks"]) s.checks.push_back(str(x, "oracle.checks"));
        }
        if (m.contains("levels")) s.levels = int(integer(m["levels"], "oracle.levels"));
        if (m.contains("e2_grid")) s.e2_grid = nums(m["e2_grid"], "oracle.e2_grid");
        if (m.contains("trials")) s.trials = int(integer(m["trials"], "oracle.trials"));
        if (m.contains("positivity_t")) s.positivity_t = num(m["positivity_t"], "oracle.positivity_t");
        if (m.contains("positivity_grid")) s.positivity_grid = int(integer(m["positivity_grid"], "oracle.positivity_grid"));
        if (m.contains("positivity_n_max"))
            s.positivity_n_max = int(integer(m["positivity_n_max"], "oracle.positivity_n_max"));
    }
    {
        const auto& s = c.oracle;
        if (s.n_max < 1 || s.n_max > 40) throw config_error("oracle.n_max must be in [1, 40]");
        const std::set<std::string> known{"spectra", "energy_curves", "concavity", "multiplicity", "positivity",
                                          "relative-bound"};
        for (const auto& k : s.checks)
            if (!known.count(k)) throw config_error("unknown oracle check '" + k + "'");
        if (s.levels < 1) throw config_error("oracle.levels must be >= 1");
        for (double x : s.e2_grid)
            if (!(x >= 0) || !std::isfinite(x)) throw config_error("oracle.e2_grid entries must be >= 0");
        if (s.trials < 1) throw config_error("oracle.trials must be >= 1");
        positive(s.positivity_t, "oracle.positivity_t");
        if (s.positivity_grid < 2) throw config_error("oracle.positivity_grid must be >= 2");
        if (s.positivity_n_max < 1) throw config_error("oracle.positivity_n_max must be >= 1");
    }

    if (doc.contains("output")) {
        const auto& m = doc["output"];
        only_keys(m, "output", {"dir", "prefix"});
        if (m.contains("dir")) c.output.dir = str(m["dir"], "output.dir");
        if (m.contains("prefix")) c.output.prefix = str(m["prefix"], "output.prefix");
        if (c.output.prefix.empty() || c.output.prefix.find('/') != std::string::npos)
            throw config_error("output.prefix must be a plain file stem");
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) { return make_config(toml::parse_file(path)); }

/** The realized model: form factor, optional mode set, pair kernel and polarization. */
struct Model {
    FormFactor ff;
    std::optional<ModeSet> modes;
    std::optional<PairKernel> kernel;
    PolarizationBasis pb;
};

/** The one +-pair model the oracle comparisons use: k = +-(0,0,1), w = 1, phi = 1. */
inline Model reference_model()
{
    Model m;
    m.ff = FormFactor::table({0.0, 1.5}, {1.0, 1.0}, 3);
    Eigen::VectorXd k(3);
    k << 0, 0, 1;
    m.modes = ModeSet::from_half(3, {k}, {1.0});
    m.kernel = PairKernel::mode_sum(*m.modes, m.ff);
    m.pb = PolarizationBasis::axis_cross(Vec3::UnitX());
    return m;
}

/** Build the model; the continuum table spans the horizons the paths will need. */
inline Model build_model(const ModelSpec& s, double tau_need = 1.0, double r_need = 10.0)
{
    if (s.kind == "reference") return reference_model();
    Model m;
    m.ff = s.form_factor == "table" ? FormFactor::table(s.table_k, s.table_v, s.dim)
                                    : FormFactor::sharp(s.cutoff, s.dim);
    m.pb = s.polarization == "meridian" ? PolarizationBasis::meridian() : PolarizationBasis::axis_cross(s.axis);
    if (s.kind == "modes") {
        m.modes = ModeSet::from_half(s.dim, s.modes_k, s.modes_w);
    } else if (s.kind == "quadrature") {
        const double kmax = m.ff.breakpoints().back();
        m.modes = ModeSet::spherical_quadrature(kmax, s.quadrature[0], s.quadrature[1], s.quadrature[2]);
    }
    if (m.modes) {
        m.kernel = PairKernel::mode_sum(*m.modes, m.ff);
    } else {
        const double tau = s.tau_max > 0 ? s.tau_max : tau_need;
        const double r = s.r_max > 0 ? s.r_max : r_need;
        m.kernel = PairKernel::continuum(m.ff, tau, r);
    }
    return m;
}

}  // namespace fiberpath
