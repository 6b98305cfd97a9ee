// Centralized reference solver for the assembled QP
//     min_z  z' H z + c' z   s.t.  z_i in C_i  for every agent,
// used wherever ground truth is needed at run time: sub-optimality logging,
// drift (rho) estimation, and initial-solution computation. It is not part
// of the distributed message exchange.
//
// Method: ADMM with the agents' equality constraints folded into the x-update
// KKT system (factored once per structure) and the box parts handled by
// clamping in the w-update, followed by an active-set polish that solves the
// equality-constrained KKT on the free components to push the residual to
// near machine precision. Constraint sets with general halfspace members fall
// back to FISTA over the sets' own projections.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qdmpc/errors.hpp"
#include "qdmpc/problem.hpp"

namespace qdmpc {

struct OracleOptions {
    double tolerance = 1e-10;      // primal/dual residual target (relative)
    int max_iterations = 50000;    // ADMM / FISTA budget
    double over_relaxation = 1.6;
    bool polish = true;
};

class CentralizedQpSolver {
public:
    explicit CentralizedQpSolver(const DistributedProblem& problem,
                                 OracleOptions options = {})
        : problem_(problem), opt_(options) {
        const int n = problem_.global_dimension();
        lower_ = Vec::Constant(n, -std::numeric_limits<double>::infinity());
        upper_ = Vec::Constant(n, std::numeric_limits<double>::infinity());
        general_sets_ = false;
        eq_rows_ = 0;
        for (int i = 0; i < problem_.agent_count(); ++i) {
            const auto& set = problem_.constraint(i);
            switch (set.kind()) {
                case ConstraintKind::box:
                case ConstraintKind::affine_box:
                case ConstraintKind::affine_box_ellipsoid:
                    lower_.segment(problem_.offset_of(i), problem_.size_of(i)) = set.lower();
                    upper_.segment(problem_.offset_of(i), problem_.size_of(i)) = set.upper();
                    break;
                case ConstraintKind::polytope:
                    general_sets_ = true;
                    break;
            }
            if (set.has_equalities()) eq_rows_ += static_cast<int>(set.equality_matrix().rows());
            if (set.kind() == ConstraintKind::affine_box_ellipsoid) has_ellipsoid_ = true;
        }
        if (!general_sets_) build_kkt();
    }

    /// Solve with the problem's current parameters.
    Vec solve(const Vec* warm_start = nullptr) const {
        return solve_with_linear(problem_.global_linear_term(), warm_start);
    }

    Vec solve_with_linear(const Vec& c, const Vec* warm_start = nullptr) const {
        if (general_sets_) return fista(c, warm_start);
        return admm(c, warm_start);
    }

private:
    void build_kkt() {
        const int n = problem_.global_dimension();
        const auto& md = problem_.metadata();
        rho_ = std::sqrt(md.lipschitz * md.strong_convexity);
        Mat kkt = Mat::Zero(n + eq_rows_, n + eq_rows_);
        kkt.topLeftCorner(n, n) = 2.0 * problem_.global_hessian();
        kkt.topLeftCorner(n, n).diagonal().array() += rho_;
        int row = n;
        for (int i = 0; i < problem_.agent_count(); ++i) {
            const auto& set = problem_.constraint(i);
            if (!set.has_equalities()) continue;
            const auto& A = set.equality_matrix();
            kkt.block(row, problem_.offset_of(i), A.rows(), A.cols()) = A;
            kkt.block(problem_.offset_of(i), row, A.cols(), A.rows()) = A.transpose();
            row += static_cast<int>(A.rows());
        }
        kkt_lu_.compute(kkt);
    }

    Vec stacked_equality_rhs() const {
        Vec beq(eq_rows_);
        int row = 0;
        for (int i = 0; i < problem_.agent_count(); ++i) {
            const auto& set = problem_.constraint(i);
            if (!set.has_equalities()) continue;
            beq.segment(row, set.equality_rhs().size()) = set.equality_rhs();
            row += static_cast<int>(set.equality_rhs().size());
        }
        return beq;
    }

    Vec clamp_sets(const Vec& v) const {
        Vec w = v.cwiseMax(lower_).cwiseMin(upper_);
        if (!has_ellipsoid_) return w;
        for (int i = 0; i < problem_.agent_count(); ++i) {
            const auto& set = problem_.constraint(i);
            if (set.kind() != ConstraintKind::affine_box_ellipsoid) continue;
            Vec seg = w.segment(problem_.offset_of(i), problem_.size_of(i));
            for (int sweep = 0; sweep < 50; ++sweep) {
                const Vec prev = seg;
                seg = seg.cwiseMax(set.lower()).cwiseMin(set.upper());
                seg = ellipsoid_scale(set, seg);
                if ((seg - prev).norm() <= 1e-12) break;
            }
            w.segment(problem_.offset_of(i), problem_.size_of(i)) = seg;
        }
        return w;
    }

    static Vec ellipsoid_scale(const ConstraintSet& set, const Vec& v) {
        const Vec r = v.segment(set.ellipsoid_offset(), set.ellipsoid_center().size()) -
                      set.ellipsoid_center();
        const double q = r.dot(set.ellipsoid_shape() * r);
        if (q <= set.ellipsoid_level()) return v;
        Vec out = v;
        out.segment(set.ellipsoid_offset(), set.ellipsoid_center().size()) =
            set.ellipsoid_center() + r * std::sqrt(set.ellipsoid_level() / q);
        return out;
    }

    Vec admm(const Vec& c, const Vec* warm_start) const {
        const int n = problem_.global_dimension();
        const Vec beq = stacked_equality_rhs();
        Vec w = warm_start ? clamp_sets(*warm_start) : clamp_sets(Vec::Zero(n));
        Vec u = Vec::Zero(n);
        Vec rhs(n + eq_rows_);
        Vec x = w;
        const double scale = std::max(1.0, c.norm());
        for (int it = 0; it < opt_.max_iterations; ++it) {
            rhs.head(n) = rho_ * (w - u) - c;
            rhs.tail(eq_rows_) = beq;
            const Vec sol = kkt_lu_.solve(rhs);
            x = sol.head(n);
            const Vec x_relaxed = opt_.over_relaxation * x + (1.0 - opt_.over_relaxation) * w;
            const Vec w_prev = w;
            w = clamp_sets(x_relaxed + u);
            u += x_relaxed - w;
            const double primal = (x - w).norm();
            const double dual = rho_ * (w - w_prev).norm();
            if (primal <= opt_.tolerance * scale && dual <= opt_.tolerance * scale) break;
        }
        Vec z = w;
        if (opt_.polish) {
            if (const auto polished = polish(c, beq, z)) z = *polished;
        }
        return z;
    }

    /// Fix box-active components, solve the reduced equality KKT on the rest,
    /// and accept the result when it is feasible and stationary.
    std::optional<Vec> polish(const Vec& c, const Vec& beq, const Vec& z0) const {
        const int n = problem_.global_dimension();
        const double act_tol = 1e-7 * std::max(1.0, z0.norm());
        Vec z = z0;
        for (int round = 0; round < 12; ++round) {
            std::vector<int> free_idx, active_idx;
            Vec bound_val(n);
            for (int i = 0; i < n; ++i) {
                if (std::isfinite(lower_[i]) && z[i] - lower_[i] <= act_tol) {
                    active_idx.push_back(i);
                    bound_val[i] = lower_[i];
                } else if (std::isfinite(upper_[i]) && upper_[i] - z[i] <= act_tol) {
                    active_idx.push_back(i);
                    bound_val[i] = upper_[i];
                } else {
                    free_idx.push_back(i);
                }
            }
            const int nf = static_cast<int>(free_idx.size());
            const Mat H2 = 2.0 * problem_.global_hessian();
            Mat Aeq = Mat::Zero(eq_rows_, n);
            int row = 0;
            for (int i = 0; i < problem_.agent_count(); ++i) {
                const auto& set = problem_.constraint(i);
                if (!set.has_equalities()) continue;
                Aeq.block(row, problem_.offset_of(i), set.equality_matrix().rows(),
                          set.equality_matrix().cols()) = set.equality_matrix();
                row += static_cast<int>(set.equality_matrix().rows());
            }
            Mat kkt = Mat::Zero(nf + eq_rows_, nf + eq_rows_);
            Vec rhs = Vec::Zero(nf + eq_rows_);
            for (int a = 0; a < nf; ++a) {
                for (int b = 0; b < nf; ++b) kkt(a, b) = H2(free_idx[a], free_idx[b]);
                double r = -c[free_idx[a]];
                for (int idx : active_idx) r -= H2(free_idx[a], idx) * bound_val[idx];
                rhs[a] = r;
            }
            for (int r = 0; r < eq_rows_; ++r) {
                for (int a = 0; a < nf; ++a) {
                    kkt(nf + r, a) = Aeq(r, free_idx[a]);
                    kkt(a, nf + r) = Aeq(r, free_idx[a]);
                }
                double b = beq[r];
                for (int idx : active_idx) b -= Aeq(r, idx) * bound_val[idx];
                rhs[nf + r] = b;
            }
            Eigen::PartialPivLU<Mat> lu(kkt);
            const Vec sol = lu.solve(rhs);
            Vec zp = Vec(n);
            for (int idx : active_idx) zp[idx] = bound_val[idx];
            for (int a = 0; a < nf; ++a) zp[free_idx[a]] = sol[a];
            const Vec nu = sol.tail(eq_rows_);

            // bound feasibility of free components
            bool ok = true;
            for (int a = 0; a < nf && ok; ++a) {
                const int i = free_idx[a];
                if (zp[i] < lower_[i] - act_tol || zp[i] > upper_[i] + act_tol) ok = false;
            }
            // multiplier signs at active bounds
            if (ok) {
                const Vec grad = H2 * zp + c + Aeq.transpose() * nu;
                for (int idx : active_idx) {
                    const bool at_lower = bound_val[idx] == lower_[idx];
                    if (at_lower && grad[idx] < -1e-7) { ok = false; break; }
                    if (!at_lower && grad[idx] > 1e-7) { ok = false; break; }
                }
            }
            if (ok) {
                zp = zp.cwiseMax(lower_).cwiseMin(upper_);
                return zp;
            }
            z = zp.cwiseMax(lower_).cwiseMin(upper_);  // try again from clamped guess
        }
        return std::nullopt;
    }

    Vec fista(const Vec& c, const Vec* warm_start) const {
        const int n = problem_.global_dimension();
        const double lips = problem_.metadata().lipschitz;
        auto project_all = [&](const Vec& v) {
            Vec out(n);
            for (int i = 0; i < problem_.agent_count(); ++i)
                out.segment(problem_.offset_of(i), problem_.size_of(i)) =
                    problem_.constraint(i).project(
                        v.segment(problem_.offset_of(i), problem_.size_of(i)));
            return out;
        };
        Vec z = project_all(warm_start ? *warm_start : Vec::Zero(n));
        Vec y = z;
        double tk = 1.0;
        const Mat H2 = 2.0 * problem_.global_hessian();
        for (int it = 0; it < opt_.max_iterations; ++it) {
            const Vec g = H2 * y + c;
            const Vec zn = project_all(y - g / lips);
            const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
            Vec yn = zn + ((tk - 1.0) / tn) * (zn - z);
            if ((zn - z).dot(yn - zn) > 0.0) {  // restart
                yn = zn;
                tk = 1.0;
            } else {
                tk = tn;
            }
            const double dz = (zn - z).norm();
            z = zn;
            y = yn;
            if (dz <= 1e-13 * std::max(1.0, z.norm()) && it > 2) break;
        }
        return z;
    }

    const DistributedProblem& problem_;
    OracleOptions opt_;
    Vec lower_, upper_;
    bool general_sets_ = false;
    bool has_ellipsoid_ = false;
    int eq_rows_ = 0;
    double rho_ = 1.0;
    Eigen::PartialPivLU<Mat> kkt_lu_;
};

}  // namespace qdmpc
