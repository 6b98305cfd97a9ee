// BlueROV2-class underwater vehicle: 12-state rigid-body model with added
// mass, quadratic drag, restoring forces and an 8-thruster allocation, plus
// the discrete-time linearization used by the controller and an RK4
// integrator used as the simulation plant.
//
// State x = [eta; nu]: eta = (p_X, p_Y, p_Z, q_X, q_Y, q_Z) position and
// ZYX Euler orientation in the global frame, nu = (v_x, v_y, v_z, w_x, w_y,
// w_z) linear and angular velocity in the body frame. Units are SI
// throughout (m, rad, m/s, rad/s, N, kg).

#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "qdmpc/errors.hpp"

namespace qdmpc {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct AuvParams {
    double mass = 11.0;  // kg, rigid body (applied to all six axes)
    // added-mass coefficients (negative, Fossen sign convention)
    double added_surge = -2.8;   // X_{v̇x}
    double added_sway = -3.0;    // Y_{v̇y}
    double added_heave = -3.2;   // Z_{v̇z}
    double added_roll = -0.05;   // K_{ω̇x}
    double added_pitch = -1.0;   // M_{ω̇y}
    double added_yaw = -0.3;     // N_{ω̇z}
    // quadratic drag coefficients
    double drag_linear = 10.0;   // surge/sway/heave, N s^2/m^2
    double drag_angular = 4.0;   // roll/pitch/yaw, N m s^2
    double weight = 107.8;       // W, N
    double buoyancy = 107.8;     // B, N (neutral with ballast)
    double tilt = M_PI / 3.0;    // horizontal-thruster tilt angle, rad
    double lever_surge = 0.18;   // l1: horizontal thrusters to C.G., m
    double lever_sway = 0.12;    // l2: vertical thrusters to body X-axis, m
    double lever_heave = 0.22;   // l3: vertical thrusters to body Y-axis, m
    double sample_time = 0.1;    // s

    Mat6 mass_matrix() const {
        Vec6 rigid = Vec6::Constant(mass);
        Vec6 added;
        added << added_surge, added_sway, added_heave, added_roll, added_pitch,
            added_yaw;
        const Vec6 total = rigid - added;  // M_a = -diag(coefficients)
        if ((total.array() <= 0.0).any())
            throw DomainError("total mass matrix must be positive definite");
        return total.asDiagonal();
    }

    /// 6x8 thrust allocation: columns 1-4 are the tilted horizontal
    /// thrusters, columns 5-8 the vertical ones.
    Eigen::Matrix<double, 6, 8> allocation_matrix() const {
        const double s = std::sin(tilt), c = std::cos(tilt);
        Eigen::Matrix<double, 6, 8> tau;
        tau << s, s, s, s, 0, 0, 0, 0,
            -c, c, c, -c, 0, 0, 0, 0,
            0, 0, 0, 0, 1, 1, 1, 1,
            0, 0, 0, 0, lever_heave, -lever_heave, lever_heave, -lever_heave,
            0, 0, 0, 0, lever_sway, lever_sway, -lever_sway, -lever_sway,
            lever_surge, -lever_surge, lever_surge, -lever_surge, 0, 0, 0, 0;
        return tau;
    }
};

inline Vec6 thrust_allocation(const AuvParams& p, const Vec8& u) {
    if (!u.allFinite()) throw NonFiniteInput("thruster command is not finite");
    return p.allocation_matrix() * u;
}

/// Added-mass/velocity Coriolis matrix; skew-symmetric for every velocity.
inline Mat6 coriolis(const AuvParams& p, const Vec6& nu) {
    const Vec6 m = p.mass_matrix().diagonal();
    const double mx = m[0], my = m[1], mz = m[2];
    const double mwx = m[3], mwy = m[4], mwz = m[5];
    const double vx = nu[0], vy = nu[1], vz = nu[2];
    const double wx = nu[3], wy = nu[4], wz = nu[5];
    Mat6 C = Mat6::Zero();
    C(0, 4) = mz * vz;   C(0, 5) = -my * vy;
    C(1, 3) = -mz * vz;  C(1, 5) = mx * vx;
    C(2, 3) = my * vy;   C(2, 4) = -mx * vx;
    C(3, 1) = mz * vz;   C(3, 2) = -my * vy;
    C(3, 4) = mwx * wz;  C(3, 5) = -mwy * wy;
    C(4, 0) = -mz * vz;  C(4, 2) = mx * vx;
    C(4, 3) = -mwx * wz; C(4, 5) = mwz * wx;
    C(5, 0) = my * vy;   C(5, 1) = -mx * vx;
    C(5, 3) = mwy * wy;  C(5, 4) = -mwz * wx;
    return C;
}

/// Diagonal quadratic drag.
inline Mat6 damping(const AuvParams& p, const Vec6& nu) {
    Vec6 d;
    d << p.drag_linear * std::abs(nu[0]), p.drag_linear * std::abs(nu[1]),
        p.drag_linear * std::abs(nu[2]), p.drag_angular * std::abs(nu[3]),
        p.drag_angular * std::abs(nu[4]), p.drag_angular * std::abs(nu[5]);
    return d.asDiagonal();
}

/// Gravity/buoyancy generalized force; identically zero when W = B.
inline Vec6 restoring(const AuvParams& p, const Vec6& eta) {
    const double wb = p.weight - p.buoyancy;
    const double qy = eta[4], qz = eta[5];
    Vec6 g;
    g << wb * qy, -wb * std::cos(qy) * std::sin(qz),
        -wb * std::cos(qy) * std::cos(qz), 0.0, 0.0, 0.0;
    return g;
}

namespace detail {

inline constexpr double kPitchMargin = 1e-6;

inline Eigen::Matrix3d rotation_zyx(double roll, double pitch, double yaw) {
    return (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
            Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
        .toRotationMatrix();
}

inline Eigen::Matrix3d euler_rate_matrix(double roll, double pitch) {
    const double cr = std::cos(roll), sr = std::sin(roll);
    const double cp = std::cos(pitch), tp = std::tan(pitch);
    Eigen::Matrix3d W;
    W << 1.0, sr * tp, cr * tp,
        0.0, cr, -sr,
        0.0, sr / cp, cr / cp;
    return W;
}

}  // namespace detail

/// Continuous-time dynamics xdot = f(x, u).
inline Vec12 dynamics(const AuvParams& p, const Vec12& x, const Vec8& u) {
    if (!x.allFinite()) throw NonFiniteState("state is not finite");
    const Vec6 eta = x.head<6>();
    const Vec6 nu = x.tail<6>();
    if (std::abs(eta[4]) >= M_PI / 2.0 - detail::kPitchMargin)
        throw KinematicSingularity("pitch too close to +-pi/2");
    Vec12 xdot;
    const Eigen::Matrix3d R = detail::rotation_zyx(eta[3], eta[4], eta[5]);
    const Eigen::Matrix3d W = detail::euler_rate_matrix(eta[3], eta[4]);
    xdot.head<3>() = R * nu.head<3>();
    xdot.segment<3>(3) = W * nu.tail<3>();
    const Mat6 Minv = p.mass_matrix().inverse();
    xdot.tail<6>() = Minv * (thrust_allocation(p, u) - coriolis(p, nu) * nu -
                             damping(p, nu) * nu - restoring(p, eta));
    return xdot;
}

struct LinearModel {
    Eigen::Matrix<double, 12, 12> A;
    Eigen::Matrix<double, 12, 8> B;
    double sample_time = 0.0;
};

/// Discrete-time linearization at the origin: double-integrator kinematics
/// over the sample time, with inputs entering through the inverse total mass
/// and the allocation matrix. Verified controllable.
inline LinearModel linearize_discretize(const AuvParams& p) {
    if (p.sample_time <= 0.0) throw DomainError("sample time must be positive");
    LinearModel m;
    m.sample_time = p.sample_time;
    m.A.setIdentity();
    m.A.topRightCorner<6, 6>() = p.sample_time * Mat6::Identity();
    m.B.setZero();
    m.B.bottomRows<6>() = p.sample_time * p.mass_matrix().inverse() *
                          p.allocation_matrix();
    // controllability: rank of [B, AB, ..., A^11 B]
    Eigen::Matrix<double, 12, 96> ctrb;
    Eigen::Matrix<double, 12, 8> blk = m.B;
    for (int k = 0; k < 12; ++k) {
        ctrb.middleCols<8>(8 * k) = blk;
        blk = m.A * blk;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ctrb);
    if (lu.rank() != 12)
        throw NotControllable("discrete pair (A, B) is not controllable");
    return m;
}

/// One zero-order-hold RK4 step of the nonlinear dynamics.
inline Vec12 integrate(const AuvParams& p, const Vec12& x, const Vec8& u,
                       double dt, int substeps = 1) {
    if (dt <= 0.0 || substeps < 1) throw DomainError("bad integration step");
    Vec12 s = x;
    const double h = dt / substeps;
    for (int step = 0; step < substeps; ++step) {
        const Vec12 k1 = dynamics(p, s, u);
        const Vec12 k2 = dynamics(p, s + 0.5 * h * k1, u);
        const Vec12 k3 = dynamics(p, s + 0.5 * h * k2, u);
        const Vec12 k4 = dynamics(p, s + h * k3, u);
        s += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!s.allFinite()) throw NonFiniteState("integration diverged");
    }
    return s;
}

}  // namespace qdmpc
