// Multi-agent formation-control MPC condensed into the graph-structured QP
// consumed by the distributed solver.
//
// Per agent the decision variable stacks the full predicted trajectory,
//     z_i = [x_i(0), ..., x_i(N), u_i(0), ..., u_i(N-1)],
// keeping the dynamics as equality constraints (sparse, non-eliminated
// form), so the per-agent constraint set is an affine subspace intersected
// with the state/input boxes and projections stay local and cheap.
//
// Costs: stage tracking ||x - x_r||_Q^2 + ||u - u_r||_R^2 for l = 0..N-1,
// terminal ||x(N) - x_r||_P^2, and per-edge formation costs
// ||(p_i - p_j) - (p_ri - p_rj)||_S^2 on the position components for
// l = 0..N-1, counted once per undirected edge and split evenly between the
// two incident agents so the sum of local costs equals the global cost.
//
// The time-varying parameter vector of agent i stacks
//     [measured x_i(t); x_ref_i; u_ref_i; x_ref_j for each neighbour j],
// neighbour references included because the formation cost's linear part
// needs them. The measured state drives only the initial-state equality row
// block, never the cost.
//
// State boxes apply to stages 1..N: stage 0 is pinned by the initial-state
// equality, and boxing it as well would render the set empty the moment a
// disturbance pushes the measured state outside its box.

#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qdmpc/auv.hpp"
#include "qdmpc/errors.hpp"
#include "qdmpc/problem.hpp"

namespace qdmpc {

/// Index bookkeeping for a condensed per-agent variable.
struct TrajectoryLayout {
    int state_dim = 12;
    int input_dim = 8;
    int horizon = 0;  // N

    int variable_size() const { return state_dim * (horizon + 1) + input_dim * horizon; }
    int state_offset(int l) const {
        if (l < 0 || l > horizon) throw LayoutError("stage out of range");
        return state_dim * l;
    }
    int input_offset(int l) const {
        if (l < 0 || l >= horizon) throw LayoutError("input stage out of range");
        return state_dim * (horizon + 1) + input_dim * l;
    }
};

enum class TerminalWeight { riccati, stage };  // P from the DARE, or P = Q

struct DmpcSpec {
    int horizon = 5;
    Mat state_weight;        // Q_i (12x12), positive definite
    Mat input_weight;        // R_i (8x8), positive definite
    Mat formation_weight;    // S_ij (3x3), positive definite
    TerminalWeight terminal = TerminalWeight::riccati;
    Vec state_lower, state_upper;  // 12-dim box, stages 1..N
    Vec input_lower, input_upper;  // 8-dim box
    bool terminal_set = false;     // optional ellipsoidal terminal constraint
    double terminal_level = 0.0;   // alpha_i, required when terminal_set

    void validate() const {
        if (horizon < 1) throw DomainError("horizon must be at least 1");
        if (state_weight.rows() != 12 || state_weight.cols() != 12 ||
            input_weight.rows() != 8 || input_weight.cols() != 8 ||
            formation_weight.rows() != 3 || formation_weight.cols() != 3)
            throw DimensionMismatch("weight matrices have wrong sizes");
        if (terminal_set && terminal_level <= 0.0)
            throw DomainError("terminal set needs a positive level");
    }
};

/// Reference states from a leader setpoint and per-agent position offsets
/// relative to the leader (offset of the leader itself is zero). Velocity,
/// orientation and input references are zero.
inline std::vector<Vec> formation_references(
    const Eigen::Vector3d& leader_setpoint,
    const std::vector<Eigen::Vector3d>& offsets_from_leader) {
    std::vector<Vec> refs;
    refs.reserve(offsets_from_leader.size());
    for (const auto& off : offsets_from_leader) {
        Vec x = Vec::Zero(12);
        x.head<3>() = leader_setpoint - off;
        refs.push_back(std::move(x));
    }
    return refs;
}

/// Discrete algebraic Riccati fixed point for the terminal weight.
inline Mat riccati_terminal(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                            double tolerance = 1e-12, int max_iterations = 100000) {
    if (A.rows() != A.cols() || B.rows() != A.rows() || Q.rows() != A.rows() ||
        R.rows() != B.cols())
        throw DimensionMismatch("riccati: inconsistent dimensions");
    Mat P = Q;
    for (int it = 0; it < max_iterations; ++it) {
        const Mat BtP = B.transpose() * P;
        const Mat gain = (BtP * B + R).ldlt().solve(BtP * A);
        const Mat Pn = Q + A.transpose() * P * A -
                       A.transpose() * P * B * gain;
        const double diff = (Pn - P).norm();
        P = 0.5 * (Pn + Pn.transpose());
        if (!P.allFinite()) throw RiccatiDivergence("riccati iteration diverged");
        if (diff <= tolerance * std::max(1.0, P.norm())) return P;
    }
    throw RiccatiDivergence("riccati iteration exhausted its budget");
}

inline double dare_residual(const Mat& A, const Mat& B, const Mat& Q, const Mat& R,
                            const Mat& P) {
    const Mat BtP = B.transpose() * P;
    const Mat res = A.transpose() * P * A - P -
                    A.transpose() * P * B * (BtP * B + R).ldlt().solve(BtP * A) + Q;
    return res.norm();
}

class DmpcProblem {
public:
    DmpcProblem(Graph graph, DmpcSpec spec, LinearModel model,
                std::vector<Vec> state_references)
        : graph_(std::move(graph)), spec_(std::move(spec)), model_(model),
          x_refs_(std::move(state_references)) {
        spec_.validate();
        const int M = graph_.vertex_count();
        if (static_cast<int>(x_refs_.size()) != M)
            throw DimensionMismatch("need one reference per agent");
        layout_ = TrajectoryLayout{12, 8, spec_.horizon};
        u_ref_ = Vec::Zero(8);
        terminal_weight_ = spec_.terminal == TerminalWeight::riccati
                               ? riccati_terminal(model_.A, model_.B,
                                                  spec_.state_weight,
                                                  spec_.input_weight)
                               : spec_.state_weight;
    }

    const TrajectoryLayout& layout() const { return layout_; }
    const Graph& graph() const { return graph_; }
    const Mat& terminal_weight() const { return terminal_weight_; }
    const std::vector<Vec>& state_references() const { return x_refs_; }

    /// Build the distributed QP for the given measured states.
    DistributedProblem build(const std::vector<Vec12>& measured) const {
        const int M = graph_.vertex_count();
        if (static_cast<int>(measured.size()) != M)
            throw DimensionMismatch("need one measured state per agent");
        std::vector<LocalCost> costs;
        std::vector<ConstraintSet> sets;
        costs.reserve(M);
        sets.reserve(M);
        for (int i = 0; i < M; ++i) {
            costs.push_back(local_cost(i, measured[static_cast<std::size_t>(i)]));
            sets.push_back(constraint_set(i, measured[static_cast<std::size_t>(i)]));
        }
        return DistributedProblem(graph_, std::move(costs), std::move(sets));
    }

    /// Per-step refresh: new measured states enter the initial-state equality
    /// rows and the parameter vectors; everything else is reused.
    void update_measured_states(DistributedProblem& problem,
                                const std::vector<Vec12>& measured) const {
        const int M = graph_.vertex_count();
        if (static_cast<int>(measured.size()) != M)
            throw DimensionMismatch("need one measured state per agent");
        for (int i = 0; i < M; ++i) {
            Vec zeta = problem.cost(i).parameter;
            zeta.head<12>() = measured[static_cast<std::size_t>(i)];
            problem.set_parameter(i, std::move(zeta));
            Vec beq = problem.constraint(i).equality_rhs();
            beq.head<12>() = measured[static_cast<std::size_t>(i)];
            problem.constraint(i).set_equality_rhs(std::move(beq));
        }
    }

    /// First input block of agent i from a global solution vector.
    Vec8 extract_control(const DistributedProblem& problem, const Vec& solution,
                         int i) const {
        if (solution.size() != problem.global_dimension())
            throw LayoutError("solution vector has wrong size");
        return solution.segment(problem.offset_of(i) + layout_.input_offset(0), 8);
    }

    /// Predicted state of agent i at stage l from a global solution vector.
    Vec12 extract_state(const DistributedProblem& problem, const Vec& solution,
                        int i, int l) const {
        return solution.segment(problem.offset_of(i) + layout_.state_offset(l), 12);
    }

private:
    // Neighbourhood coordinate offset of agent j's block inside z_Ni.
    int hood_offset(int i, int j) const {
        int off = 0;
        for (int member : graph_.closed_neighbourhood(i)) {
            if (member == j) return off;
            off += layout_.variable_size();
        }
        throw LayoutError("agent not in neighbourhood");
    }

    LocalCost local_cost(int i, const Vec12& measured) const {
        const auto hood = graph_.closed_neighbourhood(i);
        const int nv = layout_.variable_size();
        const int dim = nv * static_cast<int>(hood.size());
        const int N = spec_.horizon;

        LocalCost cost;
        cost.hessian = Mat::Zero(dim, dim);
        // parameter: [measured(12); x_ref_i(12); u_ref_i(8); x_ref_j ...]
        const int n_nbr = static_cast<int>(hood.size()) - 1;
        const int zdim = 32 + 12 * n_nbr;
        cost.parameter_map = Mat::Zero(zdim, dim);
        cost.parameter = Vec::Zero(zdim);

        cost.parameter.head<12>() = measured;
        cost.parameter.segment<12>(12) = x_refs_[static_cast<std::size_t>(i)];
        cost.parameter.segment<8>(24) = u_ref_;

        const int own = hood_offset(i, i);
        for (int l = 0; l < N; ++l) {
            const int xo = own + layout_.state_offset(l);
            cost.hessian.block<12, 12>(xo, xo) += spec_.state_weight;
            // row block of x_ref_i: -2 Q x(l)
            cost.parameter_map.block<12, 12>(12, xo) -= 2.0 * spec_.state_weight;
            const int uo = own + layout_.input_offset(l);
            cost.hessian.block<8, 8>(uo, uo) += spec_.input_weight;
            cost.parameter_map.block<8, 8>(24, uo) -= 2.0 * spec_.input_weight;
        }
        const int xN = own + layout_.state_offset(N);
        cost.hessian.block<12, 12>(xN, xN) += terminal_weight_;
        cost.parameter_map.block<12, 12>(12, xN) -= 2.0 * terminal_weight_;

        // formation terms, half per incident agent
        int nbr_row = 32;
        for (int j : graph_.neighbours(i)) {
            const int other = hood_offset(i, j);
            const Mat& S = spec_.formation_weight;
            for (int l = 0; l < N; ++l) {
                const int pi = own + layout_.state_offset(l);    // position rows of x_i(l)
                const int pj = other + layout_.state_offset(l);  // position rows of x_j(l)
                cost.hessian.block<3, 3>(pi, pi) += 0.5 * S;
                cost.hessian.block<3, 3>(pj, pj) += 0.5 * S;
                cost.hessian.block<3, 3>(pi, pj) -= 0.5 * S;
                cost.hessian.block<3, 3>(pj, pi) -= 0.5 * S;
                // linear part: -(pr_i - pr_j)' S (p_i - p_j), written on the
                // reference rows so it stays parameter-driven
                cost.parameter_map.block<3, 3>(12, pi) -= S;
                cost.parameter_map.block<3, 3>(12, pj) += S;
                cost.parameter_map.block<3, 3>(nbr_row, pi) += S;
                cost.parameter_map.block<3, 3>(nbr_row, pj) -= S;
            }
            cost.parameter.segment<12>(nbr_row) = x_refs_[static_cast<std::size_t>(j)];
            nbr_row += 12;
        }
        return cost;
    }

    ConstraintSet constraint_set(int i, const Vec12& measured) const {
        const int N = spec_.horizon;
        const int nv = layout_.variable_size();
        const int eq_rows = 12 * (N + 1);
        Mat aeq = Mat::Zero(eq_rows, nv);
        Vec beq = Vec::Zero(eq_rows);
        aeq.block<12, 12>(0, layout_.state_offset(0)).setIdentity();
        beq.head<12>() = measured;
        for (int l = 0; l < N; ++l) {
            const int row = 12 * (l + 1);
            aeq.block<12, 12>(row, layout_.state_offset(l + 1)).setIdentity();
            aeq.block<12, 12>(row, layout_.state_offset(l)) = -model_.A;
            aeq.block<12, 8>(row, layout_.input_offset(l)) = -model_.B;
        }
        Vec lower = Vec::Constant(nv, -std::numeric_limits<double>::infinity());
        Vec upper = Vec::Constant(nv, std::numeric_limits<double>::infinity());
        for (int l = 1; l <= N; ++l) {
            lower.segment<12>(layout_.state_offset(l)) = spec_.state_lower;
            upper.segment<12>(layout_.state_offset(l)) = spec_.state_upper;
        }
        for (int l = 0; l < N; ++l) {
            lower.segment<8>(layout_.input_offset(l)) = spec_.input_lower;
            upper.segment<8>(layout_.input_offset(l)) = spec_.input_upper;
        }
        if (!spec_.terminal_set)
            return ConstraintSet::affine_box(std::move(aeq), std::move(beq),
                                             std::move(lower), std::move(upper));
        return ConstraintSet::affine_box_ellipsoid(
            std::move(aeq), std::move(beq), std::move(lower), std::move(upper),
            x_refs_[static_cast<std::size_t>(i)], terminal_weight_,
            spec_.terminal_level, layout_.state_offset(N));
    }

    Graph graph_;
    DmpcSpec spec_;
    LinearModel model_;
    std::vector<Vec> x_refs_;
    Vec u_ref_;
    TrajectoryLayout layout_;
    Mat terminal_weight_;
};

}  // namespace qdmpc
