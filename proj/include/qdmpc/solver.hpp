// Distributed projected-gradient solver with warm starting and progressive
// quantization refinement.
//
// One call to inner_solve runs K+1 synchronous rounds (k = 0..K). Per round
// and agent: quantize and broadcast the local variable, project the received
// neighbourhood copy onto the product of the members' constraint sets,
// evaluate the local gradient there, quantize and broadcast it, then take a
// projected gradient step assembled from the decoded neighbour gradients
// (own blocks included, also in quantized form). All inter-agent data flows
// through QuantizedMessage values; each agent keeps mirrored decoder states
// for its neighbours' channels, synchronised purely by the messages.
//
// Mid-value handling across time steps: channels keep their last quantized
// value as the next mid-value (MidpointPolicy::carry, default), which is the
// only choice receivers can track from traffic alone. The alternative
// (::reset) re-centres on the new warm start each step; it matches a literal
// reading of the per-step initialization but assumes the warm start is shared
// out of band, so it is offered for experiments only.
//
// Pass-through mode replaces both channels with full-precision payloads and
// zero bit accounting; it serves as the unquantized reference configuration.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qdmpc/design.hpp"
#include "qdmpc/errors.hpp"
#include "qdmpc/problem.hpp"
#include "qdmpc/quantizer.hpp"

namespace qdmpc {

enum class MidpointPolicy { carry, reset };

struct SolverConfig {
    double step_size = 0.0;  // tau, must satisfy tau < 1/L
    QuantizationDesign design;
    bool passthrough = false;
    MidpointPolicy midpoint_policy = MidpointPolicy::carry;
    ProjectionOptions projection{};
    std::int64_t per_step_bit_budget = 0;  // 0 disables the check

    void validate(const ConvexityMetadata& md) const {
        if (!(step_size > 0.0) || !(step_size < 1.0 / md.lipschitz))
            throw DomainError("step size must lie in (0, 1/L)");
        if (design.iterations < 0) throw DomainError("iteration count must be >= 0");
        if (!passthrough) {
            const double gamma = md.condition_ratio;
            if (!(design.shrinkage > 1.0 - gamma) || !(design.shrinkage < 1.0))
                throw DomainError("shrinkage must lie in (1 - gamma, 1)");
            if (design.bits < 1 || design.bits > kMaxWireBits)
                throw DomainError("bits per scalar out of range");
            if (design.interval_variable <= 0.0 || design.interval_gradient <= 0.0)
                throw DomainError("initial intervals must be positive");
            if (per_step_bit_budget > 0) {
                const std::int64_t used =
                    static_cast<std::int64_t>(design.bits) * (design.iterations + 1);
                if (used > per_step_bit_budget)
                    throw BudgetViolation("n(K+1) exceeds the per-step bit budget");
            }
        }
    }
};

struct SolveReport {
    Vec iterate;  // z^{t,K+1}, global coordinates
    int rounds = 0;
    std::vector<std::int64_t> variable_bits;  // per agent, payload bits sent
    std::vector<std::int64_t> gradient_bits;
    int saturation_count = 0;
    std::optional<double> sub_optimality;  // filled by callers with an oracle

    std::int64_t total_bits() const {
        std::int64_t t = 0;
        for (auto b : variable_bits) t += b;
        for (auto b : gradient_bits) t += b;
        return t;
    }
};

class DistributedSolver {
public:
    /// Observers: every message in transit (mutable, so tests can tamper with
    /// traffic) and every per-agent iterate after each round.
    using MessageTap = std::function<void(QuantizedMessage&)>;
    using IterateObserver = std::function<void(int iteration, int agent, const Vec&)>;

    DistributedSolver(const DistributedProblem& problem, SolverConfig config)
        : problem_(problem), config_(std::move(config)) {
        config_.validate(problem_.metadata());
        const int M = problem_.agent_count();
        var_channel_.resize(M);
        grad_channel_.resize(M);
        var_mirror_.resize(M);
        grad_mirror_.resize(M);
        for (int i = 0; i < M; ++i) {
            var_mirror_[i].resize(problem_.neighbourhood(i).size());
            grad_mirror_[i].resize(problem_.neighbourhood(i).size());
        }
    }

    void set_message_tap(MessageTap tap) { tap_ = std::move(tap); }
    void set_iterate_observer(IterateObserver obs) { observer_ = std::move(obs); }

    /// Reset all channel states for a fresh deployment at the given warm
    /// start (the offline stage shares this vector with every agent).
    void initialize(const Vec& warm_start) {
        init_channels(warm_start);
        initialized_ = true;
    }

    /// Run one time step: exactly K+1 rounds from the given warm start, using
    /// the problem's current parameters. The returned iterate is the next
    /// warm start (the caller owns that chaining).
    SolveReport inner_solve(const Vec& warm_start) {
        if (warm_start.size() != problem_.global_dimension())
            throw DimensionMismatch("warm start has wrong dimension");
        if (!initialized_ || config_.midpoint_policy == MidpointPolicy::reset)
            initialize(warm_start);

        const int M = problem_.agent_count();
        const int K = config_.design.iterations;

        std::vector<Vec> z(M);
        for (int i = 0; i < M; ++i)
            z[i] = warm_start.segment(problem_.offset_of(i), problem_.size_of(i));

        SolveReport report;
        report.variable_bits.assign(M, 0);
        report.gradient_bits.assign(M, 0);
        report.rounds = K + 1;

        std::vector<Vec> decoded_grad(M);
        for (int k = 0; k <= K; ++k) {
            // variable channel broadcast
            std::vector<QuantizedMessage> var_msgs(M);
            std::vector<Vec> own_quant(M);
            for (int i = 0; i < M; ++i) {
                auto [q, msg] = var_channel_[i].transmit(z[i], k, i, Channel::variable);
                own_quant[i] = std::move(q);
                report.variable_bits[i] += msg.payload_bits();
                report.saturation_count += count_flags(msg);
                if (tap_) tap_(msg);
                var_msgs[i] = std::move(msg);
            }

            // neighbourhood assembly, projection, local gradient, gradient broadcast
            std::vector<QuantizedMessage> grad_msgs(M);
            std::vector<Vec> own_quant_grad(M);
            for (int i = 0; i < M; ++i) {
                const auto& hood = problem_.neighbourhood(i);
                Vec z_hat(problem_.neighbourhood_dimension(i));
                int pos = 0;
                for (std::size_t s = 0; s < hood.size(); ++s) {
                    const int j = hood[s];
                    const Vec block =
                        (j == i) ? own_quant[i]
                                 : var_mirror_[i][s].receive(var_msgs[j], k);
                    z_hat.segment(pos, block.size()) = block;
                    pos += static_cast<int>(block.size());
                }
                const Vec z_tilde = project_neighbourhood(i, z_hat);
                const Vec grad = problem_.local_gradient(i, z_tilde);
                auto [qg, msg] = grad_channel_[i].transmit(grad, k, i, Channel::gradient);
                own_quant_grad[i] = std::move(qg);
                report.gradient_bits[i] += msg.payload_bits();
                report.saturation_count += count_flags(msg);
                if (tap_) tap_(msg);
                grad_msgs[i] = std::move(msg);
            }

            // projected gradient update from decoded gradients
            for (int i = 0; i < M; ++i) {
                const auto& hood = problem_.neighbourhood(i);
                Vec direction = Vec::Zero(problem_.size_of(i));
                for (std::size_t s = 0; s < hood.size(); ++s) {
                    const int j = hood[s];
                    const Vec gj = (j == i) ? own_quant_grad[i]
                                            : grad_mirror_[i][s].receive(grad_msgs[j], k);
                    direction += gj.segment(problem_.block_offset_of(j, i),
                                            problem_.size_of(i));
                }
                z[i] = problem_.constraint(i).project(
                    z[i] - config_.step_size * direction, config_.projection);
                if (observer_) observer_(k, i, z[i]);
            }
        }

        report.iterate = Vec(problem_.global_dimension());
        for (int i = 0; i < M; ++i)
            report.iterate.segment(problem_.offset_of(i), problem_.size_of(i)) = z[i];
        return report;
    }

private:
    static int count_flags(const QuantizedMessage& msg) {
        int c = 0;
        for (char f : msg.saturation_flags) c += (f != 0);
        return c;
    }

    Vec project_neighbourhood(int i, const Vec& z_hat) const {
        const auto& hood = problem_.neighbourhood(i);
        Vec out(z_hat.size());
        int pos = 0;
        for (int j : hood) {
            const int mj = problem_.size_of(j);
            out.segment(pos, mj) = problem_.constraint(j).project(
                z_hat.segment(pos, mj), config_.projection);
            pos += mj;
        }
        return out;
    }

    void init_channels(const Vec& warm_start) {
        const int M = problem_.agent_count();
        RefinementSchedule var_sched{config_.design.interval_variable,
                                     config_.design.shrinkage};
        RefinementSchedule grad_sched{config_.design.interval_gradient,
                                      config_.design.shrinkage};
        const int bits = config_.passthrough ? 0 : config_.design.bits;

        std::vector<Vec> grad_mid(M);
        for (int i = 0; i < M; ++i) {
            const Vec z0_Ni = problem_.select_neighbourhood(i, warm_start);
            const Vec z0_proj = project_neighbourhood(i, z0_Ni);
            grad_mid[i] = problem_.local_gradient(i, z0_proj);
        }
        for (int i = 0; i < M; ++i) {
            const Vec z0_i =
                warm_start.segment(problem_.offset_of(i), problem_.size_of(i));
            var_channel_[i] = ProgressiveQuantizer(var_sched, bits, z0_i,
                                                   config_.passthrough);
            grad_channel_[i] = ProgressiveQuantizer(grad_sched, bits, grad_mid[i],
                                                    config_.passthrough);
            const auto& hood = problem_.neighbourhood(i);
            for (std::size_t s = 0; s < hood.size(); ++s) {
                const int j = hood[s];
                const Vec z0_j =
                    warm_start.segment(problem_.offset_of(j), problem_.size_of(j));
                var_mirror_[i][s] = ProgressiveQuantizer(var_sched, bits, z0_j,
                                                         config_.passthrough);
                grad_mirror_[i][s] = ProgressiveQuantizer(grad_sched, bits, grad_mid[j],
                                                          config_.passthrough);
            }
        }
    }

    const DistributedProblem& problem_;
    SolverConfig config_;
    bool initialized_ = false;
    std::vector<ProgressiveQuantizer> var_channel_, grad_channel_;
    std::vector<std::vector<ProgressiveQuantizer>> var_mirror_, grad_mirror_;
    MessageTap tap_;
    IterateObserver observer_;
};

}  // namespace qdmpc
