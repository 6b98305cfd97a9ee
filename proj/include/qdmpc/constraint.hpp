// Per-agent convex constraint sets and Euclidean projections onto them.
//
// Four shapes cover everything the toolkit builds: plain boxes, halfspace
// polytopes, an affine subspace intersected with a box (sparse MPC stage
// constraints), and the same with an additional ellipsoidal terminal set.
// Boxes project by clamping; everything else runs Dykstra's alternating
// projection over the member sets. The affine member uses a cached
// factorization of Aeq*Aeq^T, so repeated projections against the same
// equality structure (the hot path) cost two thin matrix products and a
// triangular solve per sweep.
//
// The ellipsoid member scales radially in its own P-metric, which lands on
// the boundary but is not the exact Euclidean projection; terminal sets are
// the only users and accept that approximation.

#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "qdmpc/errors.hpp"
#include "qdmpc/quantizer.hpp"  // Vec/Mat aliases

namespace qdmpc {

struct ProjectionOptions {
    double tolerance = 1e-9;
    int max_sweeps = 500;
};

enum class ConstraintKind { box, polytope, affine_box, affine_box_ellipsoid };

class ConstraintSet {
public:
    static ConstraintSet box(Vec lower, Vec upper) {
        ConstraintSet c;
        c.kind_ = ConstraintKind::box;
        c.dim_ = lower.size();
        c.lower_ = std::move(lower);
        c.upper_ = std::move(upper);
        c.check_box();
        return c;
    }

    static ConstraintSet polytope(Mat g, Vec h) {
        if (g.rows() != h.size())
            throw DimensionMismatch("polytope: row count mismatch");
        ConstraintSet c;
        c.kind_ = ConstraintKind::polytope;
        c.dim_ = g.cols();
        c.G_ = std::move(g);
        c.h_ = std::move(h);
        c.row_norms_ = c.G_.rowwise().squaredNorm();
        c.check_nonempty();
        return c;
    }

    static ConstraintSet affine_box(Mat aeq, Vec beq, Vec lower, Vec upper) {
        ConstraintSet c;
        c.kind_ = ConstraintKind::affine_box;
        c.dim_ = aeq.cols();
        c.Aeq_ = std::move(aeq);
        c.beq_ = std::move(beq);
        c.lower_ = std::move(lower);
        c.upper_ = std::move(upper);
        c.init_affine();
        c.check_box();
        c.check_nonempty();
        return c;
    }

    /// Ellipsoid {s : (s - center)' shape (s - center) <= level} over the
    /// vector slice starting at slice_offset with the center's length.
    static ConstraintSet affine_box_ellipsoid(Mat aeq, Vec beq, Vec lower, Vec upper,
                                              Vec center, Mat shape, double level,
                                              Eigen::Index slice_offset = 0) {
        ConstraintSet c;
        c.kind_ = ConstraintKind::affine_box_ellipsoid;
        c.dim_ = aeq.cols();
        c.Aeq_ = std::move(aeq);
        c.beq_ = std::move(beq);
        c.lower_ = std::move(lower);
        c.upper_ = std::move(upper);
        c.center_ = std::move(center);
        c.shape_ = std::move(shape);
        c.level_ = level;
        c.slice_offset_ = slice_offset;
        if (c.level_ <= 0.0) throw DomainError("ellipsoid level must be positive");
        if (c.shape_.rows() != c.center_.size() || c.shape_.cols() != c.center_.size())
            throw DimensionMismatch("ellipsoid shape/center size mismatch");
        if (slice_offset < 0 || slice_offset + c.center_.size() > c.dim_)
            throw DimensionMismatch("ellipsoid slice exceeds the variable");
        c.init_affine();
        c.check_box();
        c.check_nonempty();
        return c;
    }

    ConstraintKind kind() const { return kind_; }
    Eigen::Index dimension() const { return dim_; }
    const Vec& lower() const { return lower_; }
    const Vec& upper() const { return upper_; }
    const Mat& equality_matrix() const { return Aeq_; }
    const Vec& equality_rhs() const { return beq_; }
    const Vec& ellipsoid_center() const { return center_; }
    const Mat& ellipsoid_shape() const { return shape_; }
    double ellipsoid_level() const { return level_; }
    Eigen::Index ellipsoid_offset() const { return slice_offset_; }

    bool has_equalities() const {
        return kind_ == ConstraintKind::affine_box ||
               kind_ == ConstraintKind::affine_box_ellipsoid;
    }

    /// Replace the equality right-hand side (parametric constraints, e.g. the
    /// current measured state in an MPC stage set). Structure is unchanged so
    /// cached factorizations stay valid.
    void set_equality_rhs(Vec beq) {
        if (!has_equalities())
            throw LayoutError("constraint set has no equality part");
        if (beq.size() != beq_.size())
            throw DimensionMismatch("equality rhs size changed");
        beq_ = std::move(beq);
    }

    /// Largest violation across all member constraints; 0 when feasible.
    double violation(const Vec& z) const {
        if (z.size() != dim_) throw DimensionMismatch("violation: bad dimension");
        double v = 0.0;
        if (lower_.size() > 0) {
            v = std::max(v, (lower_ - z).maxCoeff());
            v = std::max(v, (z - upper_).maxCoeff());
        }
        if (G_.rows() > 0) v = std::max(v, (G_ * z - h_).maxCoeff());
        if (Aeq_.rows() > 0) v = std::max(v, (Aeq_ * z - beq_).cwiseAbs().maxCoeff());
        if (kind_ == ConstraintKind::affine_box_ellipsoid) {
            const Vec r = z.segment(slice_offset_, center_.size()) - center_;
            v = std::max(v, r.dot(shape_ * r) - level_);
        }
        return std::max(v, 0.0);
    }

    bool contains(const Vec& z, double tol = 1e-9) const { return violation(z) <= tol; }

    /// Euclidean projection (see file comment for the ellipsoid caveat).
    Vec project(const Vec& v, const ProjectionOptions& opt = {}) const {
        if (v.size() != dim_) throw DimensionMismatch("project: bad dimension");
        switch (kind_) {
            case ConstraintKind::box:
                return clamp_box(v);
            case ConstraintKind::polytope:
                return dykstra(v, opt, /*with_affine=*/false, /*with_box=*/false,
                               /*with_halfspaces=*/true, /*with_ellipsoid=*/false);
            case ConstraintKind::affine_box:
                return dykstra(v, opt, true, true, false, false);
            case ConstraintKind::affine_box_ellipsoid:
                return dykstra(v, opt, true, true, false, true);
        }
        throw LayoutError("unknown constraint kind");
    }

private:
    ConstraintSet() = default;

    void check_box() {
        if (lower_.size() != dim_ || upper_.size() != dim_)
            throw DimensionMismatch("box bounds size mismatch");
        if ((lower_.array() > upper_.array()).any())
            throw EmptyConstraintSet("box has lower > upper");
    }

    void init_affine() {
        if (Aeq_.rows() != beq_.size())
            throw DimensionMismatch("equality row count mismatch");
        if (Aeq_.rows() > 0) {
            gram_llt_.compute(Aeq_ * Aeq_.transpose());
            if (gram_llt_.info() != Eigen::Success)
                throw NotStronglyConvex("equality rows are linearly dependent");
        }
    }

    void check_nonempty() const {
        // Feasibility probe: project an arbitrary point with a generous budget
        // and require the residual to vanish.
        ProjectionOptions opt;
        opt.max_sweeps = 2000;
        Vec probe = Vec::Zero(dim_);
        if (has_equalities()) probe = affine_project(probe);
        try {
            const Vec p = project(probe, opt);
            if (violation(p) > 1e-6)
                throw EmptyConstraintSet("feasibility probe failed to converge");
        } catch (const ProjectionBudgetExceeded&) {
            throw EmptyConstraintSet("feasibility probe exhausted its budget");
        }
    }

    Vec clamp_box(const Vec& v) const {
        return v.cwiseMax(lower_).cwiseMin(upper_);
    }

    Vec affine_project(const Vec& v) const {
        if (Aeq_.rows() == 0) return v;
        return v - Aeq_.transpose() * gram_llt_.solve(Aeq_ * v - beq_);
    }

    Vec ellipsoid_scale(const Vec& v) const {
        const Vec r = v.segment(slice_offset_, center_.size()) - center_;
        const double q = r.dot(shape_ * r);
        if (q <= level_) return v;
        Vec out = v;
        out.segment(slice_offset_, center_.size()) =
            center_ + r * std::sqrt(level_ / q);
        return out;
    }

    Vec dykstra(const Vec& v, const ProjectionOptions& opt, bool with_affine,
                bool with_box, bool with_halfspaces, bool with_ellipsoid) const {
        struct Member {
            int id;  // 0 affine, 1 box, 2 ellipsoid, 3.. halfspace row
        };
        std::vector<Member> members;
        if (with_affine) members.push_back({0});
        if (with_box) members.push_back({1});
        if (with_ellipsoid) members.push_back({2});
        if (with_halfspaces)
            for (Eigen::Index r = 0; r < G_.rows(); ++r)
                members.push_back({3 + static_cast<int>(r)});

        Vec x = v;
        std::vector<Vec> incr(members.size(), Vec::Zero(dim_));
        const double scale = std::max(1.0, v.norm());
        for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
            double change = 0.0;
            for (std::size_t s = 0; s < members.size(); ++s) {
                const Vec y = x + incr[s];
                Vec p;
                switch (members[s].id) {
                    case 0: p = affine_project(y); break;
                    case 1: p = clamp_box(y); break;
                    case 2: p = ellipsoid_scale(y); break;
                    default: {
                        const Eigen::Index r = members[s].id - 3;
                        const double g = G_.row(r) * y - h_[r];
                        p = (g > 0.0 && row_norms_[r] > 0.0)
                                ? (y - (g / row_norms_[r]) * G_.row(r).transpose()).eval()
                                : y;
                        break;
                    }
                }
                incr[s] = y - p;
                change = std::max(change, (p - x).norm());
                x = p;
            }
            if (change <= opt.tolerance * scale && violation(x) <= opt.tolerance * scale) {
                // Finish with a clamp so box members hold exactly.
                if (with_box) x = clamp_box(x);
                return x;
            }
        }
        throw ProjectionBudgetExceeded(
            "dykstra failed to reach tolerance; residual " + std::to_string(violation(x)));
    }

    ConstraintKind kind_ = ConstraintKind::box;
    Eigen::Index dim_ = 0;
    Vec lower_, upper_;
    Mat G_;
    Vec h_;
    Vec row_norms_;
    Mat Aeq_;
    Vec beq_;
    Eigen::LLT<Mat> gram_llt_;
    Vec center_;
    Mat shape_;
    double level_ = 0.0;
    Eigen::Index slice_offset_ = 0;
};

/// Projection of `point` onto `set`.
inline Vec project(const ConstraintSet& set, const Vec& point,
                   const ProjectionOptions& opt = {}) {
    return set.project(point, opt);
}

}  // namespace qdmpc
