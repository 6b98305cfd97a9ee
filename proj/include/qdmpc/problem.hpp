// Graph-structured parametric QP over a communication graph.
//
// Each agent i owns a variable z_i of size m_i and a cost
//     f_i(z_Ni, zeta_i) = z_Ni' H_i z_Ni + zeta_i' h_i z_Ni
// over its neighbourhood vector z_Ni, the concatenation of its own variable
// followed by its neighbours' variables in ascending agent order. Gradients
// follow the z'Hz + c'z convention everywhere: grad = 2 H z + c, and the
// Lipschitz / convexity constants are computed from 2H so the same numbers
// feed the step-size rule and the design bound without stray factors of two.
//
// Selection bookkeeping: E_i maps global coordinates to neighbourhood
// coordinates (an index list), and the block of agent j's neighbourhood
// vector holding z_i is located by block_offset_of(j, i).

#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "qdmpc/constraint.hpp"
#include "qdmpc/errors.hpp"
#include "qdmpc/graph.hpp"

namespace qdmpc {

struct LocalCost {
    Mat hessian;        // H_i, symmetric PSD over z_Ni coordinates
    Mat parameter_map;  // h_i, rows = dim(zeta_i), cols = dim(z_Ni)
    Vec parameter;      // zeta_i, time-varying

    Vec linear_term() const { return parameter_map.transpose() * parameter; }
};

struct ConvexityMetadata {
    double lipschitz = 0.0;        // L, of the global gradient
    double lipschitz_local = 0.0;  // max_i L_i
    double strong_convexity = 0.0; // sigma_f
    double condition_ratio = 0.0;  // gamma = sigma_f / L, in (0, 1]
};

class DistributedProblem {
public:
    DistributedProblem(Graph graph, std::vector<LocalCost> costs,
                       std::vector<ConstraintSet> constraints)
        : graph_(std::move(graph)), costs_(std::move(costs)),
          constraints_(std::move(constraints)) {
        const int M = graph_.vertex_count();
        if (static_cast<int>(costs_.size()) != M ||
            static_cast<int>(constraints_.size()) != M)
            throw DimensionMismatch("need one cost and one constraint set per agent");

        sizes_.resize(M);
        for (int i = 0; i < M; ++i) {
            sizes_[i] = static_cast<int>(constraints_[static_cast<std::size_t>(i)].dimension());
            if (sizes_[i] <= 0) throw DimensionMismatch("agent variable must be non-empty");
        }
        offsets_.assign(static_cast<std::size_t>(M) + 1, 0);
        for (int i = 0; i < M; ++i) offsets_[i + 1] = offsets_[i] + sizes_[i];

        hoods_.resize(M);
        selectors_.resize(M);
        for (int i = 0; i < M; ++i) {
            hoods_[i] = graph_.closed_neighbourhood(i);
            auto& sel = selectors_[i];
            for (int j : hoods_[i])
                for (int c = 0; c < sizes_[j]; ++c)
                    sel.push_back(offsets_[j] + c);
            const auto& H = costs_[static_cast<std::size_t>(i)].hessian;
            if (H.rows() != H.cols() ||
                H.rows() != static_cast<Eigen::Index>(sel.size()))
                throw DimensionMismatch("H_i must be square over the neighbourhood");
            const auto& hmap = costs_[static_cast<std::size_t>(i)].parameter_map;
            if (hmap.cols() != static_cast<Eigen::Index>(sel.size()))
                throw DimensionMismatch("h_i column count must match the neighbourhood");
            if (costs_[static_cast<std::size_t>(i)].parameter.size() != hmap.rows())
                throw DimensionMismatch("zeta_i size must match h_i rows");
        }

        assemble_hessian();
        compute_metadata();
    }

    const Graph& graph() const { return graph_; }
    int agent_count() const { return graph_.vertex_count(); }
    int size_of(int i) const { return sizes_[i]; }
    int max_size() const {
        int m = 0;
        for (int s : sizes_) m = std::max(m, s);
        return m;
    }
    int global_dimension() const { return offsets_.back(); }
    int offset_of(int i) const { return offsets_[i]; }

    const std::vector<int>& neighbourhood(int i) const { return hoods_[i]; }
    int neighbourhood_dimension(int i) const {
        return static_cast<int>(selectors_[i].size());
    }

    const ConstraintSet& constraint(int i) const {
        return constraints_[static_cast<std::size_t>(i)];
    }
    ConstraintSet& constraint(int i) {
        return constraints_[static_cast<std::size_t>(i)];
    }
    const LocalCost& cost(int i) const { return costs_[static_cast<std::size_t>(i)]; }

    void set_parameter(int i, Vec zeta) {
        auto& c = costs_[static_cast<std::size_t>(i)];
        if (zeta.size() != c.parameter_map.rows())
            throw DimensionMismatch("zeta size mismatch");
        c.parameter = std::move(zeta);
    }

    /// Neighbourhood selection z_Ni = E_i z.
    Vec select_neighbourhood(int i, const Vec& z) const {
        check_global(z);
        const auto& sel = selectors_[i];
        Vec out(static_cast<Eigen::Index>(sel.size()));
        for (std::size_t k = 0; k < sel.size(); ++k) out[static_cast<Eigen::Index>(k)] = z[sel[k]];
        return out;
    }

    /// Offset of z_j's block inside z_Ni; j must be i or one of its neighbours.
    int block_offset_of(int i, int j) const {
        int off = 0;
        for (int member : hoods_[i]) {
            if (member == j) return off;
            off += sizes_[member];
        }
        throw LayoutError("agent is not in that neighbourhood");
    }

    /// F_ji applied to a neighbourhood vector of agent j: the z_i block.
    Vec select_member(int j, int i, const Vec& z_Nj) const {
        if (z_Nj.size() != neighbourhood_dimension(j))
            throw DimensionMismatch("neighbourhood vector has wrong size");
        return z_Nj.segment(block_offset_of(j, i), sizes_[i]);
    }

    /// Gradient of f_i with respect to z_Ni at the given neighbourhood point.
    Vec local_gradient(int i, const Vec& z_Ni) const {
        if (z_Ni.size() != neighbourhood_dimension(i))
            throw DimensionMismatch("neighbourhood vector has wrong size");
        const auto& c = costs_[static_cast<std::size_t>(i)];
        return 2.0 * (c.hessian * z_Ni) + c.linear_term();
    }

    /// Gradient of the global cost at z (sum of lifted local gradients).
    Vec global_gradient(const Vec& z) const {
        check_global(z);
        Vec g = Vec::Zero(global_dimension());
        for (int i = 0; i < agent_count(); ++i)
            scatter_add(i, local_gradient(i, select_neighbourhood(i, z)), g);
        return g;
    }

    double global_cost(const Vec& z) const {
        check_global(z);
        double f = 0.0;
        for (int i = 0; i < agent_count(); ++i) {
            const Vec zn = select_neighbourhood(i, z);
            const auto& c = costs_[static_cast<std::size_t>(i)];
            f += zn.dot(c.hessian * zn) + c.linear_term().dot(zn);
        }
        return f;
    }

    /// Lift a neighbourhood-sized vector of agent i into global coordinates.
    Vec lift(int i, const Vec& v_Ni) const {
        Vec out = Vec::Zero(global_dimension());
        scatter_add(i, v_Ni, out);
        return out;
    }

    const Mat& global_hessian() const { return global_hessian_; }

    /// Assembled global linear term for the current parameters.
    Vec global_linear_term() const {
        Vec c = Vec::Zero(global_dimension());
        for (int i = 0; i < agent_count(); ++i)
            scatter_add(i, costs_[static_cast<std::size_t>(i)].linear_term(), c);
        return c;
    }

    const ConvexityMetadata& metadata() const { return metadata_; }

private:
    void check_global(const Vec& z) const {
        if (z.size() != global_dimension())
            throw DimensionMismatch("global vector has wrong size");
    }

    void scatter_add(int i, const Vec& v_Ni, Vec& out) const {
        const auto& sel = selectors_[i];
        if (v_Ni.size() != static_cast<Eigen::Index>(sel.size()))
            throw DimensionMismatch("neighbourhood vector has wrong size");
        for (std::size_t k = 0; k < sel.size(); ++k)
            out[sel[k]] += v_Ni[static_cast<Eigen::Index>(k)];
    }

    void assemble_hessian() {
        const int n = global_dimension();
        global_hessian_ = Mat::Zero(n, n);
        for (int i = 0; i < agent_count(); ++i) {
            const auto& sel = selectors_[i];
            const auto& H = costs_[static_cast<std::size_t>(i)].hessian;
            for (std::size_t r = 0; r < sel.size(); ++r)
                for (std::size_t c = 0; c < sel.size(); ++c)
                    global_hessian_(sel[r], sel[c]) +=
                        H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        }
        global_hessian_ = 0.5 * (global_hessian_ + global_hessian_.transpose()).eval();
    }

    void compute_metadata() {
        Eigen::SelfAdjointEigenSolver<Mat> es(global_hessian_,
                                              Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        if (lo <= 1e-10 * std::max(1.0, hi))
            throw NotStronglyConvex("global Hessian is not positive definite");
        metadata_.lipschitz = 2.0 * hi;
        metadata_.strong_convexity = 2.0 * lo;
        metadata_.condition_ratio = lo / hi;
        double lmax = 0.0;
        for (const auto& c : costs_) {
            Eigen::SelfAdjointEigenSolver<Mat> esl(c.hessian, Eigen::EigenvaluesOnly);
            lmax = std::max(lmax, 2.0 * esl.eigenvalues().maxCoeff());
        }
        metadata_.lipschitz_local = lmax;
    }

    Graph graph_;
    std::vector<LocalCost> costs_;
    std::vector<ConstraintSet> constraints_;
    std::vector<int> sizes_;
    std::vector<int> offsets_;
    std::vector<std::vector<int>> hoods_;
    std::vector<std::vector<int>> selectors_;
    Mat global_hessian_;
    ConvexityMetadata metadata_;
};

inline DistributedProblem build_problem(Graph graph, std::vector<LocalCost> costs,
                                        std::vector<ConstraintSet> constraints) {
    return DistributedProblem(std::move(graph), std::move(costs), std::move(constraints));
}

inline ConvexityMetadata convexity_metadata(const DistributedProblem& p) {
    return p.metadata();
}

}  // namespace qdmpc
