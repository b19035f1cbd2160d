#pragma once

#include "fiberpath/philox.hpp"
#include "fiberpath/polarization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

namespace fiberpath {

struct PathGrid {
    double t_end = 1.0;
    int n_steps = 1;

    PathGrid() = default;
    PathGrid(double t, int n) : t_end(t), n_steps(n)
    {
        if (n < 1) throw domain_error("PathGrid: n_steps must be >= 1");
        if (!(t > 0.0) || !std::isfinite(t)) throw domain_error("PathGrid: t_end must be positive");
    }

    double dt() const { return t_end / n_steps; }
    double time(int i) const { return i * t_end / n_steps; }

    /** Grid index of time t; throws when t is not a grid point. */
    int index_of(double t) const
    {
        const double x = t * n_steps / t_end;
        const double r = std::round(x);
        if (std::abs(x - r) > 1e-9 * std::max(1.0, std::abs(x)) || r < 0 || r > n_steps)
            throw domain_error("time " + std::to_string(t) + " is not on the path grid");
        return int(r);
    }
};

/**
 * Discretized d-dimensional Brownian path. Increments are stored step-major
 * (step i, coordinate mu); positions are their running sums with b(0) = 0.
 */
class BrownianPath {
public:
    BrownianPath() = default;
    BrownianPath(PathGrid g, int dim, std::vector<double> increments)
        : grid_(g), dim_(dim), inc_(std::move(increments))
    {
        if (dim < 1) throw domain_error("BrownianPath: dim must be >= 1");
        if (inc_.size() != std::size_t(g.n_steps) * dim)
            throw domain_error("BrownianPath: increment array has wrong size");
        rebuild_positions();
    }

    const PathGrid& grid() const { return grid_; }
    int dim() const { return dim_; }
    int n_steps() const { return grid_.n_steps; }

    double increment(int i, int mu) const { return inc_[std::size_t(i) * dim_ + mu]; }
    double position(int i, int mu) const { return pos_[std::size_t(i) * dim_ + mu]; }
    const double* increment_row(int i) const { return inc_.data() + std::size_t(i) * dim_; }
    const double* position_row(int i) const { return pos_.data() + std::size_t(i) * dim_; }
    const std::vector<double>& increments() const { return inc_; }

    // provenance for seed-coupled refinement
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::uint32_t level = 0;
    bool negated = false;

private:
    void rebuild_positions()
    {
        pos_.assign(std::size_t(grid_.n_steps + 1) * dim_, 0.0);
        for (int i = 0; i < grid_.n_steps; ++i)
            for (int mu = 0; mu < dim_; ++mu)
                pos_[std::size_t(i + 1) * dim_ + mu] =
                    pos_[std::size_t(i) * dim_ + mu] + inc_[std::size_t(i) * dim_ + mu];
    }

    PathGrid grid_;
    int dim_ = 0;
    std::vector<double> inc_;
    std::vector<double> pos_;
};

inline BrownianPath sample_path(const PathGrid& grid, int dim, std::uint64_t stream_id,
                                std::uint64_t seed)
{
    NormalStream z(seed, stream_id, 0);
    const double sd = std::sqrt(grid.dt());
    std::vector<double> inc(std::size_t(grid.n_steps) * dim);
    for (double& x : inc) x = sd * z();
    BrownianPath p(grid, dim, std::move(inc));
    p.seed = seed;
    p.stream = stream_id;
    return p;
}

inline BrownianPath antithetic(const BrownianPath& p)
{
    std::vector<double> inc = p.increments();
    for (double& x : inc) x = -x;
    BrownianPath q(p.grid(), p.dim(), std::move(inc));
    q.seed = p.seed;
    q.stream = p.stream;
    q.level = p.level;
    q.negated = !p.negated;
    return q;
}

/**
 * Halve every step by inserting Brownian-bridge midpoints. The bridge noise for
 * refinement level L comes from lane L of the same (seed, stream), so the coarse
 * path is exactly a subsequence of the fine one.
 */
inline BrownianPath refine_midpoints(const BrownianPath& p)
{
    const int n = p.n_steps(), d = p.dim();
    const std::uint32_t lvl = p.level + 1;
    NormalStream z(p.seed, p.stream, lvl);
    const double sd = 0.5 * std::sqrt(p.grid().dt());
    const double sign = p.negated ? -1.0 : 1.0;
    std::vector<double> inc(std::size_t(2 * n) * d);
    for (int i = 0; i < n; ++i)
        for (int mu = 0; mu < d; ++mu) {
            const double half = 0.5 * p.increment(i, mu);
            const double w = sign * sd * z();
            inc[std::size_t(2 * i) * d + mu] = half + w;
            inc[std::size_t(2 * i + 1) * d + mu] = half - w;
        }
    BrownianPath q(PathGrid(p.grid().t_end, 2 * n), d, std::move(inc));
    q.seed = p.seed;
    q.stream = p.stream;
    q.level = lvl;
    q.negated = p.negated;
    return q;
}

/** Debug dump: one increment row per step. */
inline void dump_path(std::ostream& os, const BrownianPath& p)
{
    char buf[32];
    for (int i = 0; i < p.n_steps(); ++i) {
        for (int mu = 0; mu < p.dim(); ++mu) {
            std::snprintf(buf, sizeof buf, "%.17g", p.increment(i, mu));
            os << (mu ? " " : "") << buf;
        }
        os << '\n';
    }
}

}  // namespace fiberpath
