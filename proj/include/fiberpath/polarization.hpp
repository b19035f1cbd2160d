#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace fiberpath {

struct domain_error : std::domain_error {
    using std::domain_error::domain_error;
};

struct degenerate_direction : domain_error {
    using domain_error::domain_error;
};

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/** I - k k^T / |k|^2 in any dimension. */
inline Eigen::MatrixXd transverse_projector(const Eigen::VectorXd& k)
{
    const double n2 = k.squaredNorm();
    if (!(n2 > 0.0) || !std::isfinite(n2))
        throw domain_error("transverse_projector: k must be nonzero and finite");
    const auto d = k.size();
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(d, d);
    p.noalias() -= (k * k.transpose()) / n2;
    return p;
}

/** Axis-angle rotation, right-handed about n. */
inline Mat3 rotation_matrix(const Vec3& n, double phi)
{
    if (std::abs(n.norm() - 1.0) > 1e-12)
        throw domain_error("rotation_matrix: axis must be a unit vector");
    const double c = std::cos(phi), s = std::sin(phi);
    Mat3 cross;
    cross << 0.0, -n.z(), n.y(),
             n.z(), 0.0, -n.x(),
             -n.y(), n.x(), 0.0;
    return c * Mat3::Identity() + s * cross + (1.0 - c) * (n * n.transpose());
}

using Frame = std::pair<Vec3, Vec3>;

namespace detail {
inline Vec3 unit_or_throw(const Vec3& k, const char* who)
{
    const double nk = k.norm();
    if (!(nk > 0.0) || !std::isfinite(nk))
        throw domain_error(std::string(who) + ": k must be nonzero and finite");
    return k / nk;
}
}  // namespace detail

// Seeds live on the meridian {(sqrt(1-z^2), 0, z)}; the seed pair is
// e1 = (0,1,0), e2 = k0 x e1. Transport by R(n_z, phi) then mix by phi,
// which gives winding 1 about n_z.
inline Frame basis_meridian(const Vec3& k)
{
    const Vec3 kh = detail::unit_or_throw(k, "basis_meridian");
    const double rho = std::hypot(kh.x(), kh.y());
    if (rho < 1e-12)
        throw degenerate_direction("basis_meridian: k is parallel to n_z");
    const double z = kh.z();
    const double phi = std::atan2(kh.y(), kh.x());
    const Vec3 s1(0.0, 1.0, 0.0);
    const Vec3 s2(-z, 0.0, rho);
    const Mat3 r = rotation_matrix(Vec3::UnitZ(), phi);
    const Vec3 r1 = r * s1, r2 = r * s2;
    const double c = std::cos(phi), s = std::sin(phi);
    return {c * r1 - s * r2, s * r1 + c * r2};
}

inline Frame basis_axis_cross(const Vec3& k, const Vec3& n)
{
    const Vec3 kh = detail::unit_or_throw(k, "basis_axis_cross");
    if (std::abs(n.norm() - 1.0) > 1e-12)
        throw domain_error("basis_axis_cross: axis must be a unit vector");
    const Vec3 c = kh.cross(n);
    const double sn = c.norm();
    if (sn < 1e-12)
        throw degenerate_direction("basis_axis_cross: k is parallel to the axis");
    const Vec3 e1 = c / sn;
    return {e1, kh.cross(e1)};
}

enum class Generator { meridian_transport, axis_cross };

inline const char* to_string(Generator g)
{
    return g == Generator::meridian_transport ? "meridian" : "axis-cross";
}

/**
 * A coherent polarization choice. Property (P) holds with (axis, winding):
 * meridian transport has (n_z, 1), the axis-cross frame has (n, 0).
 */
struct PolarizationBasis {
    Generator generator = Generator::axis_cross;
    Vec3 axis = Vec3::UnitZ();
    int winding = 0;

    static PolarizationBasis meridian()
    {
        return {Generator::meridian_transport, Vec3::UnitZ(), 1};
    }
    static PolarizationBasis axis_cross(const Vec3& n)
    {
        return {Generator::axis_cross, n, 0};
    }

    Frame operator()(const Vec3& k) const
    {
        if (generator == Generator::meridian_transport) return basis_meridian(k);
        return basis_axis_cross(k, axis);
    }
};

struct FrameCheck {
    double transversality = 0;   // max |k.e_j| / |k|
    double orthonormality = 0;   // max |e_i.e_j - delta_ij|
    double completeness = 0;     // max entry of sum e e^T - projector
};

inline FrameCheck check_frame(const Vec3& k, const Frame& f)
{
    FrameCheck c;
    const Vec3 kh = k.normalized();
    c.transversality = std::max(std::abs(kh.dot(f.first)), std::abs(kh.dot(f.second)));
    c.orthonormality = std::max({std::abs(f.first.squaredNorm() - 1.0),
                                 std::abs(f.second.squaredNorm() - 1.0),
                                 std::abs(f.first.dot(f.second))});
    const Mat3 sum = f.first * f.first.transpose() + f.second * f.second.transpose();
    c.completeness = (sum - Mat3(transverse_projector(k))).cwiseAbs().maxCoeff();
    return c;
}

/** Entrywise residual of property (P) at (k, phi) for the declared (n, w). */
inline double coherence_residual(const PolarizationBasis& b, const Vec3& k, double phi)
{
    const Mat3 r = rotation_matrix(b.axis, phi);
    const Frame at_k = b(k);
    const Frame at_rk = b(r * k);
    const double c = std::cos(phi * b.winding), s = std::sin(phi * b.winding);
    const Vec3 r1 = r * at_k.first, r2 = r * at_k.second;
    const Vec3 d1 = at_rk.first - (c * r1 - s * r2);
    const Vec3 d2 = at_rk.second - (s * r1 + c * r2);
    return std::max(d1.cwiseAbs().maxCoeff(), d2.cwiseAbs().maxCoeff());
}

struct ThetaAngle {
    double theta = 0;      // arccos(Re(k,1).e(Rk,1)), in [0, pi]
    int orientation = 1;   // sign of Re(k,1).e(Rk,2)
    double residual = 0;   // basis-change residual with the signed angle

    double signed_theta() const { return orientation * theta; }
};

inline ThetaAngle theta_angle(const Mat3& r, const Vec3& k, const PolarizationBasis& b)
{
    const Frame at_k = b(k);
    const Vec3 rk = r * k;
    const Frame at_rk = b(rk);
    const Vec3 r1 = r * at_k.first, r2 = r * at_k.second;

    // arccos(c) evaluated as |atan2(s, c)|: same value, no precision loss near 0 and pi
    const double cc = r1.dot(at_rk.first), ss = r1.dot(at_rk.second);
    ThetaAngle out;
    out.theta = std::abs(std::atan2(ss, cc));
    out.orientation = ss < 0.0 ? -1 : 1;

    const double t = out.signed_theta();
    const double c = std::cos(t), s = std::sin(t);
    const Vec3 d1 = at_rk.first - (c * r1 - s * r2);
    const Vec3 d2 = at_rk.second - (s * r1 + c * r2);
    const Vec3 d3 = rk.normalized() - r * k.normalized();
    out.residual = std::max({d1.cwiseAbs().maxCoeff(), d2.cwiseAbs().maxCoeff(),
                             d3.cwiseAbs().maxCoeff()});
    return out;
}

}  // namespace fiberpath
