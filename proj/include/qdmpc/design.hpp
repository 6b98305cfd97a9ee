// Offline quantization design: evaluates the sub-optimality bound of the
// progressively refined distributed gradient method and searches the
// (kappa, n, K, C_alpha, C_beta) space for the design with the smallest
// certified bound under a per-step bit budget.
//
// For fixed (kappa, n, K) the bound constraints are linear in
// (eps, C_alpha, C_beta): the iteration-count condition
//     K >= ceil(log_kappa(eps(1-k) / (rho + delta + (1-k)(eps + delta)))) - 1
// is equivalent (kappa < 1, positive denominator) to
//     (1-k)(1 - k^{K+1}) eps >= k^{K+1} (rho + (2-k) delta),
// and delta is linear in the initial intervals. Each grid candidate is
// therefore an exact 3-variable LP, solved here by vertex enumeration.
//
// Two conventions are switchable:
//  * CoefficientReading: the closed-form coefficient blocks are ratios of
//    their two printed factors (default) or literal products (for
//    side-by-side comparison; the product reading is degenerate).
//  * ContractionMargin: the damping factor in the refinement-error
//    amplification denominators, either (1 - kappa) (default; reproduces the
//    reference design tables) or (1 - gamma).

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "qdmpc/errors.hpp"
#include "qdmpc/problem.hpp"

namespace qdmpc {

struct BoundParams {
    int agents = 0;                 // M
    int degree = 0;                 // d
    int max_local_size = 0;         // m_max
    double lipschitz = 0.0;         // L
    double lipschitz_local = 0.0;   // L_max
    double strong_convexity = 0.0;  // sigma_f
    double drift = 0.0;             // rho
    double step_size = 0.0;         // tau
    std::int64_t bit_budget = 0;    // T, bits per scalar channel per step

    double condition_ratio() const { return strong_convexity / lipschitz; }

    void validate() const {
        if (agents < 1 || degree < 1 || max_local_size < 1)
            throw DomainError("bound parameters need positive sizes");
        if (lipschitz <= 0.0 || lipschitz_local <= 0.0 || strong_convexity <= 0.0)
            throw DomainError("curvature constants must be positive");
        if (condition_ratio() <= 0.0 || condition_ratio() > 1.0)
            throw DomainError("condition ratio must lie in (0, 1]");
        if (drift < 0.0) throw DomainError("drift bound must be non-negative");
        if (bit_budget < 1) throw DomainError("bit budget must be at least 1");
    }

    static BoundParams from_problem(const DistributedProblem& p, double drift,
                                    double step_size, std::int64_t bit_budget) {
        const auto& md = p.metadata();
        BoundParams b;
        b.agents = p.agent_count();
        b.degree = p.graph().degree();
        b.max_local_size = p.max_size();
        b.lipschitz = md.lipschitz;
        b.lipschitz_local = md.lipschitz_local;
        b.strong_convexity = md.strong_convexity;
        b.drift = drift;
        b.step_size = step_size;
        b.bit_budget = bit_budget;
        return b;
    }
};

struct QuantizationDesign {
    double shrinkage = 0.0;          // kappa
    int bits = 0;                    // n
    int iterations = 0;              // K (the loop runs K+1 rounds)
    double interval_variable = 0.0;  // C_alpha
    double interval_gradient = 0.0;  // C_beta
    double certified_bound = 0.0;    // eps
    bool feasible = false;

    std::int64_t bits_nominal() const {  // n*K, the enumeration convention
        return static_cast<std::int64_t>(bits) * iterations;
    }
    std::int64_t bits_transmitted() const {  // n*(K+1), actual send rounds
        return static_cast<std::int64_t>(bits) * (iterations + 1);
    }
};

enum class CoefficientReading { ratio, product };
enum class ContractionMargin { shrinkage, condition };

struct DesignOptions {
    double grid_resolution = 0.01;  // lambda; kappa grid 1-gamma+j*lambda
    CoefficientReading reading = CoefficientReading::ratio;
    ContractionMargin margin = ContractionMargin::shrinkage;
    bool enumerate_all_iteration_counts = false;  // also K < floor(T/n)
    int max_bits = 0;  // 0 = up to bit budget
};

struct AppendixCoefficients {
    double a1, a2, a3, b1, b2, b3;
};

namespace detail {

inline double margin_factor(double kappa, double gamma, ContractionMargin m) {
    return m == ContractionMargin::shrinkage ? (1.0 - kappa) : (1.0 - gamma);
}

inline void check_domain(const BoundParams& p, double kappa) {
    const double gamma = p.condition_ratio();
    if (gamma >= 1.0)
        throw DomainError("coefficients require condition ratio below 1");
    if (kappa + gamma - 1.0 <= 0.0 || kappa >= 1.0)
        throw DomainError("shrinkage must lie in (1 - gamma, 1)");
}

}  // namespace detail

/// The six coefficient blocks of the no-saturation conditions.
inline AppendixCoefficients coefficients(const BoundParams& p, double kappa,
                                         const DesignOptions& opt = {}) {
    p.validate();
    detail::check_domain(p, kappa);
    const double g = p.condition_ratio();
    const double L = p.lipschitz;
    const double Lm = p.lipschitz_local;
    const double M = p.agents;
    const double d = p.degree;
    const double sm = std::sqrt(static_cast<double>(p.max_local_size));
    const double sdm = std::sqrt(d * p.max_local_size);
    const double mar = detail::margin_factor(kappa, g, opt.margin);
    const double den3 = L * (kappa + g - 1.0) * mar;
    const double denk = L * kappa * (kappa + g - 1.0) * mar;

    const double a1n = kappa + 1.0;
    const double a2n = M * sm * kappa * (kappa + 1.0) * (d * Lm + std::sqrt(L)) +
                       M * sm * L * (kappa + g - 1.0) * mar;
    const double a3n = M * sdm * (kappa + 1.0);
    const double b1n = Lm * (kappa + 1.0);
    const double b2n = Lm * M * sm * kappa * (kappa + 1.0) * (d * Lm + std::sqrt(L)) +
                       Lm * d * sm * L * (kappa + 1.0) * (kappa + g - 1.0) * mar;
    const double b3n = Lm * M * sdm * kappa * (kappa + 1.0) +
                       L * sdm * (kappa + g - 1.0) * mar;

    if (opt.reading == CoefficientReading::ratio)
        return {a1n / kappa, a2n / denk, a3n / den3,
                b1n / kappa, b2n / denk, b3n / denk};
    return {a1n * kappa, a2n * denk, a3n * den3,
            b1n * kappa, b2n * denk, b3n * denk};
}

/// delta as a linear function of the initial intervals:
/// delta = pa * C_alpha + pb * C_beta.
inline std::pair<double, double> delta_coefficients(const BoundParams& p,
                                                    double kappa, int bits,
                                                    const DesignOptions& opt = {}) {
    p.validate();
    detail::check_domain(p, kappa);
    if (bits < 1) throw DomainError("bits must be at least 1");
    const double g = p.condition_ratio();
    const double mar = detail::margin_factor(kappa, g, opt.margin);
    const double s = kappa * p.agents *
                     std::sqrt(static_cast<double>(p.max_local_size)) /
                     (std::ldexp(1.0, bits + 1) * p.lipschitz * (kappa + g - 1.0) * mar);
    return {s * (p.lipschitz_local * p.degree + std::sqrt(p.lipschitz)),
            s * std::sqrt(static_cast<double>(p.degree))};
}

inline double delta(const BoundParams& p, double kappa, int bits, double c_alpha,
                    double c_beta, const DesignOptions& opt = {}) {
    const auto [pa, pb] = delta_coefficients(p, kappa, bits, opt);
    return pa * c_alpha + pb * c_beta;
}

/// Smallest iteration count K that certifies the accuracy eps, clamped at 0.
inline int min_iterations(double eps, double drift, double delta_value, double kappa) {
    if (eps <= 0.0) throw DomainError("accuracy target must be positive");
    if (kappa <= 0.0 || kappa >= 1.0) throw DomainError("shrinkage must lie in (0, 1)");
    if (drift < 0.0 || delta_value < 0.0)
        throw DomainError("drift and delta must be non-negative");
    const double den = drift + delta_value + (1.0 - kappa) * (eps + delta_value);
    const double arg = eps * (1.0 - kappa) / den;
    if (!(arg > 0.0)) throw Infeasible("iteration-count condition has empty domain");
    // K is the smallest integer with kappa^{K+1} <= arg.
    int k = static_cast<int>(std::ceil(std::log(arg) / std::log(kappa))) - 1;
    k = std::max(k, 0);
    while (std::pow(kappa, k + 1) > arg) ++k;        // guard rounding
    while (k > 0 && std::pow(kappa, k) <= arg) --k;  // tighten
    return k;
}

struct SubproblemSolution {
    double c_alpha = 0.0;
    double c_beta = 0.0;
    double bound = 0.0;  // eps
};

/// Exact solution of the fixed-(kappa, n, K) subproblem, or nullopt when the
/// constraint polytope is empty.
inline std::optional<SubproblemSolution> solve_subproblem(
    const BoundParams& p, double kappa, int bits, int iterations,
    const DesignOptions& opt = {}) {
    p.validate();
    detail::check_domain(p, kappa);
    if (bits < 1 || iterations < 1)
        throw DomainError("bits and iteration count must be positive");

    const auto co = coefficients(p, kappa, opt);
    const auto [pa, pb] = delta_coefficients(p, kappa, bits, opt);
    const double pw = std::ldexp(1.0, bits + 1);  // 2^{n+1}
    const double kp = std::pow(kappa, iterations + 1);
    const double rho = p.drift;

    // rows: g . x <= h with x = (eps, C_alpha, C_beta)
    std::array<std::array<double, 4>, 6> rows = {{
        {-(1.0 - kappa) * (1.0 - kp), kp * (2.0 - kappa) * pa,
         kp * (2.0 - kappa) * pb, -kp * rho},
        {co.a1, co.a2 / pw - 0.5, co.a3 / pw, -co.a1 * rho},
        {co.b1, co.b2 / pw, co.b3 / pw - 0.5, -co.b1 * rho},
        {-1.0, 0.0, 0.0, 0.0},
        {0.0, -1.0, 0.0, 0.0},
        {0.0, 0.0, -1.0, 0.0},
    }};
    // normalize rows for scale-free feasibility checks
    for (auto& r : rows) {
        const double s = std::max({std::abs(r[0]), std::abs(r[1]), std::abs(r[2]),
                                   std::abs(r[3]), 1e-300});
        for (double& v : r) v /= s;
    }

    std::optional<SubproblemSolution> best;
    for (int a = 0; a < 6; ++a)
        for (int b = a + 1; b < 6; ++b)
            for (int c = b + 1; c < 6; ++c) {
                Eigen::Matrix3d A;
                Eigen::Vector3d rhs;
                A << rows[a][0], rows[a][1], rows[a][2],
                     rows[b][0], rows[b][1], rows[b][2],
                     rows[c][0], rows[c][1], rows[c][2];
                rhs << rows[a][3], rows[b][3], rows[c][3];
                if (std::abs(A.determinant()) < 1e-13) continue;
                const Eigen::Vector3d x = A.fullPivLu().solve(rhs);
                if (!x.allFinite()) continue;
                const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
                bool feasible = true;
                for (const auto& r : rows) {
                    if (r[0] * x[0] + r[1] * x[1] + r[2] * x[2] > r[3] + 1e-9 * scale) {
                        feasible = false;
                        break;
                    }
                }
                if (!feasible) continue;
                if (!best || x[0] < best->bound)
                    best = SubproblemSolution{x[1], x[2], x[0]};
            }
    return best;
}

struct GridEntry {
    double shrinkage;
    int bits;
    int iterations;
    bool feasible;
    double c_alpha;
    double c_beta;
    double bound;
};

struct DesignReport {
    QuantizationDesign best;
    std::vector<GridEntry> grid;
    std::vector<double> kappa_grid;
};

/// Enumerate the full (kappa, n, K) grid, solve each subproblem, and keep the
/// feasible design with smallest bound. Ties break to smaller eps, then
/// smaller n, then smaller kappa.
inline DesignReport design_grid(const BoundParams& p, const DesignOptions& opt = {}) {
    p.validate();
    if (opt.grid_resolution <= 0.0 || opt.grid_resolution >= 1.0)
        throw DomainError("grid resolution must lie in (0, 1)");
    const double gamma = p.condition_ratio();
    if (gamma >= 1.0 - 2.0 * opt.grid_resolution)
        throw DomainError("condition ratio leaves no room for the kappa grid");

    DesignReport report;
    for (double k = 1.0 - gamma + opt.grid_resolution; k < 1.0 - opt.grid_resolution + 1e-12;
         k += opt.grid_resolution)
        report.kappa_grid.push_back(k);

    const int max_bits =
        opt.max_bits > 0
            ? std::min<std::int64_t>(opt.max_bits, p.bit_budget)
            : static_cast<int>(std::min<std::int64_t>(p.bit_budget, 1 << 20));
    bool found = false;
    for (int n = 1; n <= max_bits; ++n) {
        const int k_top = static_cast<int>(p.bit_budget / n);
        if (k_top < 1) continue;
        const int k_low = opt.enumerate_all_iteration_counts ? 1 : k_top;
        for (int K = k_low; K <= k_top; ++K) {
            for (double kappa : report.kappa_grid) {
                const auto sol = solve_subproblem(p, kappa, n, K, opt);
                GridEntry e{kappa, n, K, sol.has_value(),
                            sol ? sol->c_alpha : 0.0, sol ? sol->c_beta : 0.0,
                            sol ? sol->bound : std::numeric_limits<double>::infinity()};
                report.grid.push_back(e);
                if (!sol) continue;
                const auto& b = report.best;
                const bool better =
                    !found || sol->bound < b.certified_bound ||
                    (sol->bound == b.certified_bound &&
                     (n < b.bits || (n == b.bits && kappa < b.shrinkage)));
                if (better) {
                    report.best = QuantizationDesign{kappa, n, K, sol->c_alpha,
                                                     sol->c_beta, sol->bound, true};
                    found = true;
                }
            }
        }
    }
    if (!found) throw NoFeasibleDesign("no feasible design on the grid");
    return report;
}

inline QuantizationDesign optimize_design(const BoundParams& p,
                                          const DesignOptions& opt = {}) {
    return design_grid(p, opt).best;
}

}  // namespace qdmpc
