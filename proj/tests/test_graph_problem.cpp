#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <set>

#include "qdmpc/graph.hpp"
#include "qdmpc/problem.hpp"
#include "support/builders.hpp"
#include "support/jacobi_eig.hpp"

using namespace qdmpc;
using test_support::random_spd;
using test_support::random_vec;

namespace {

// Reachability oracle: repeated relaxation over the raw edge list.
bool brute_force_connected(int m, const std::vector<std::pair<int, int>>& edges) {
    std::vector<int> comp(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) comp[static_cast<std::size_t>(i)] = i;
    bool changed = true;
    while (changed) {
        changed = false;
        for (auto [a, b] : edges) {
            const int lo = std::min(comp[a], comp[b]);
            if (comp[a] != lo || comp[b] != lo) {
                comp[a] = comp[b] = lo;
                changed = true;
            }
        }
    }
    for (int i = 0; i < m; ++i)
        if (comp[static_cast<std::size_t>(i)] != comp[0]) return false;
    return true;
}

// Both agents contribute 0.5 I over the full variable, so the assembled
// global Hessian is exactly the identity.
DistributedProblem two_agent_identity() {
    Graph g(2, {{0, 1}});
    std::vector<LocalCost> costs(2);
    std::vector<ConstraintSet> sets;
    for (int i = 0; i < 2; ++i) {
        costs[i].hessian = 0.5 * Mat::Identity(2, 2);
        costs[i].parameter_map = Mat::Zero(2, 2);
        costs[i].parameter = Vec::Zero(2);
        sets.push_back(ConstraintSet::box(Vec::Constant(1, -10.0), Vec::Constant(1, 10.0)));
    }
    return DistributedProblem(std::move(g), std::move(costs), std::move(sets));
}

}  // namespace

TEST_CASE("graph validation") {
    SECTION("single vertex is trivially connected") {
        Graph g(1, {});
        REQUIRE(g.vertex_count() == 1);
        REQUIRE(g.degree() == 1);
        REQUIRE(g.closed_neighbourhood(0) == std::vector<int>{0});
    }
    SECTION("self-loops rejected") {
        REQUIRE_THROWS_AS(Graph(2, {{0, 0}, {0, 1}}), DimensionMismatch);
    }
    SECTION("disconnected graphs rejected") {
        REQUIRE_THROWS_AS(Graph(3, {{0, 1}}), DisconnectedGraph);
        REQUIRE_THROWS_AS(Graph(2, {}), DisconnectedGraph);
    }
    SECTION("out-of-range endpoints rejected") {
        REQUIRE_THROWS_AS(Graph(2, {{0, 2}}), DimensionMismatch);
    }
    SECTION("neighbourhoods are sorted and symmetric") {
        Graph g(4, {{2, 0}, {0, 1}, {3, 0}});
        REQUIRE(g.neighbours(0) == std::vector<int>{1, 2, 3});
        REQUIRE(g.neighbours(2) == std::vector<int>{0});
        REQUIRE(g.degree() == 3);
        REQUIRE(g.closed_neighbourhood(0) == std::vector<int>{0, 1, 2, 3});
    }
}

TEST_CASE("connectivity agrees with brute-force reachability") {
    std::mt19937 rng(42);
    for (int trial = 0; trial < 300; ++trial) {
        const int m = 2 + static_cast<int>(rng() % 7);  // M <= 8
        std::vector<std::pair<int, int>> edges;
        const int ecount = static_cast<int>(rng() % (2u * static_cast<unsigned>(m)));
        std::uniform_int_distribution<int> pick(0, m - 1);
        for (int e = 0; e < ecount; ++e) {
            int a = pick(rng), b = pick(rng);
            if (a != b) edges.emplace_back(a, b);
        }
        const bool expect = brute_force_connected(m, edges);
        if (expect) {
            REQUIRE_NOTHROW(Graph(m, edges));
        } else {
            REQUIRE_THROWS_AS(Graph(m, edges), DisconnectedGraph);
        }
    }
}

TEST_CASE("problem assembly and bookkeeping") {
    SECTION("two agents, identity Hessians") {
        auto p = two_agent_identity();
        REQUIRE(p.global_dimension() == 2);
        REQUIRE(p.max_size() == 1);
        REQUIRE(p.metadata().condition_ratio == Catch::Approx(1.0));
    }
    SECTION("six agents on a cycle, two locals each: global dimension 12") {
        Graph g(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}});
        REQUIRE(g.degree() == 2);
        std::mt19937 rng(1);
        std::vector<LocalCost> costs;
        std::vector<ConstraintSet> sets;
        for (int i = 0; i < 6; ++i) {
            LocalCost c;
            c.hessian = random_spd(6, rng);
            c.parameter_map = Mat::Zero(1, 6);
            c.parameter = Vec::Zero(1);
            costs.push_back(std::move(c));
            sets.push_back(ConstraintSet::box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)));
        }
        DistributedProblem p(std::move(g), std::move(costs), std::move(sets));
        REQUIRE(p.global_dimension() == 12);
        REQUIRE(p.max_size() == 2);
        REQUIRE(p.neighbourhood_dimension(0) == 6);
    }
    SECTION("indefinite costs are rejected") {
        Graph g(2, {{0, 1}});
        std::vector<LocalCost> costs(2);
        std::vector<ConstraintSet> sets;
        for (int i = 0; i < 2; ++i) {
            costs[i].hessian = Mat::Zero(2, 2);
            costs[i].parameter_map = Mat::Zero(1, 2);
            costs[i].parameter = Vec::Zero(1);
            sets.push_back(ConstraintSet::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)));
        }
        REQUIRE_THROWS_AS(
            DistributedProblem(std::move(g), std::move(costs), std::move(sets)),
            NotStronglyConvex);
    }
    SECTION("dimension mismatches are rejected") {
        Graph g(2, {{0, 1}});
        std::vector<LocalCost> costs(2);
        std::vector<ConstraintSet> sets;
        costs[0].hessian = Mat::Identity(3, 3);  // wrong: neighbourhood is 2
        costs[0].parameter_map = Mat::Zero(1, 3);
        costs[0].parameter = Vec::Zero(1);
        costs[1].hessian = Mat::Identity(2, 2);
        costs[1].parameter_map = Mat::Zero(1, 2);
        costs[1].parameter = Vec::Zero(1);
        for (int i = 0; i < 2; ++i)
            sets.push_back(ConstraintSet::box(Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)));
        REQUIRE_THROWS_AS(
            DistributedProblem(std::move(g), std::move(costs), std::move(sets)),
            DimensionMismatch);
    }
}

TEST_CASE("selector consistency") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = test_support::random_box_instance(2 + static_cast<int>(rng() % 5), 2, rng);
        const Vec z = random_vec(p.global_dimension(), rng);
        for (const auto& [i, j] : p.graph().edges()) {
            const Vec znj = p.select_neighbourhood(j, z);
            const Vec via_selector = p.select_member(j, i, znj);
            const Vec direct = z.segment(p.offset_of(i), p.size_of(i));
            REQUIRE((via_selector - direct).norm() == 0.0);
        }
    }
}

TEST_CASE("gradients") {
    std::mt19937 rng(11);
    SECTION("centered quadratic has zero gradient at zero") {
        auto p = two_agent_identity();
        REQUIRE(p.global_gradient(Vec::Zero(2)).norm() == 0.0);
    }
    SECTION("lifted local gradients sum to the global gradient") {
        for (int trial = 0; trial < 10; ++trial) {
            auto p = test_support::random_box_instance(4, 2, rng);
            const Vec z = random_vec(p.global_dimension(), rng);
            Vec sum = Vec::Zero(p.global_dimension());
            for (int i = 0; i < p.agent_count(); ++i)
                sum += p.lift(i, p.local_gradient(i, p.select_neighbourhood(i, z)));
            const Vec g = p.global_gradient(z);
            REQUIRE((sum - g).norm() <= 1e-12 * std::max(1.0, g.norm()));
        }
    }
    SECTION("central finite differences match the gradient") {
        auto p = test_support::random_box_instance(3, 2, rng);
        const Vec z = random_vec(p.global_dimension(), rng);
        const Vec g = p.global_gradient(z);
        const double eps = 1e-5;
        for (int k = 0; k < p.global_dimension(); ++k) {
            Vec zp = z, zm = z;
            zp[k] += eps;
            zm[k] -= eps;
            const double fd = (p.global_cost(zp) - p.global_cost(zm)) / (2.0 * eps);
            REQUIRE(std::abs(fd - g[k]) <= 1e-6 * std::max(1.0, std::abs(g[k])));
        }
    }
}

TEST_CASE("convexity metadata") {
    std::mt19937 rng(13);
    SECTION("identity Hessian: L equals sigma_f and gamma is one") {
        auto p = two_agent_identity();
        const auto md = p.metadata();
        REQUIRE(md.lipschitz == Catch::Approx(2.0));  // gradient of z'z is 2z
        REQUIRE(md.strong_convexity == Catch::Approx(2.0));
        REQUIRE(md.condition_ratio == Catch::Approx(1.0));
    }
    SECTION("random SPD Hessian matches an independent eigensolver") {
        for (int trial = 0; trial < 10; ++trial) {
            Graph g(1, {});
            std::vector<LocalCost> costs(1);
            costs[0].hessian = random_spd(4, rng);
            costs[0].parameter_map = Mat::Zero(1, 4);
            costs[0].parameter = Vec::Zero(1);
            std::vector<ConstraintSet> sets;
            sets.push_back(ConstraintSet::box(Vec::Constant(4, -1.0), Vec::Constant(4, 1.0)));
            const Mat H = costs[0].hessian;
            DistributedProblem p(std::move(g), std::move(costs), std::move(sets));
            const auto ev = test_support::jacobi_eigenvalues(H);
            REQUIRE(p.metadata().strong_convexity ==
                    Catch::Approx(2.0 * ev.front()).epsilon(1e-10));
            REQUIRE(p.metadata().lipschitz ==
                    Catch::Approx(2.0 * ev.back()).epsilon(1e-10));
        }
    }
    SECTION("gamma lies in (0, 1] and is below one off the identity ray") {
        for (int trial = 0; trial < 10; ++trial) {
            auto p = test_support::random_box_instance(3, 2, rng);
            const auto md = p.metadata();
            REQUIRE(md.condition_ratio > 0.0);
            REQUIRE(md.condition_ratio <= 1.0);
        }
        Graph g(1, {});
        std::vector<LocalCost> costs(1);
        costs[0].hessian = (Mat(2, 2) << 1.0, 0.0, 0.0, 2.0).finished();
        costs[0].parameter_map = Mat::Zero(1, 2);
        costs[0].parameter = Vec::Zero(1);
        std::vector<ConstraintSet> sets;
        sets.push_back(ConstraintSet::box(Vec::Constant(2, -1.0), Vec::Constant(2, 1.0)));
        DistributedProblem p(std::move(g), std::move(costs), std::move(sets));
        REQUIRE(p.metadata().condition_ratio == Catch::Approx(0.5));
    }
}
