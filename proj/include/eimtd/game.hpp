#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "eimtd/io.hpp"
#include "eimtd/tensor.hpp"

namespace eimtd {

// Row-major K x M payoff table in percentage points.
struct PayoffMatrix {
    std::vector<std::string> leader_actions;
    std::vector<std::string> follower_actions;
    std::vector<Vec> leader;    // R_L, leader[i][j]
    std::vector<Vec> follower;  // R_F

    std::size_t rows() const { return leader_actions.size(); }
    std::size_t cols() const { return follower_actions.size(); }
    void validate() const;
};

struct FollowerType {
    std::string id;
    double probability = 1.0;
    PayoffMatrix payoff;
};

struct BayesGame {
    double alpha = 0.0;
    std::vector<FollowerType> types;

    std::size_t leader_actions() const { return types.empty() ? 0 : types.front().payoff.rows(); }
    void validate() const;
};

// Legitimate users with probability 1 - alpha, the adversary with probability alpha.
BayesGame two_type_game(PayoffMatrix legitimate, PayoffMatrix adversary, double alpha);

struct Equilibrium {
    Vec s;                             // leader mixed strategy over K actions
    std::vector<std::size_t> q;        // follower pure response per type
    Vec v;                             // follower value per type
    double leader_value = 0.0;
};

struct TypeOutcome {
    double follower_value = 0.0;       // v = max_j sum_i R_F(i, j) s_i
    std::size_t best_response = 0;     // smallest maximizing j
    double leader_payoff = 0.0;        // sum_i R_L(i, j) s_i at that response
    double leader_contribution = 0.0;  // probability * leader_payoff
};

std::vector<TypeOutcome> expected_payoffs(const BayesGame& game, std::span<const double> s);

// Exact leader-optimal commitment: every combination of follower pure responses
// is solved as an LP over the simplex with incentive constraints; the best
// feasible combination wins, ties going to the lexicographically smallest.
Equilibrium solve(const BayesGame& game);

// Grid search over the simplex lattice with spacing grid_step; each type answers
// with its exact best response (ties to the smallest index).
Equilibrium brute_force(const BayesGame& game, double grid_step);

// Largest violation of the equilibrium conditions (simplex, v consistency,
// follower optimality of q). Zero means the triple is exactly consistent.
double equilibrium_violation(const BayesGame& game, const Equilibrium& eq);

json game_to_json(const BayesGame& game);
BayesGame game_from_json(const json& doc);
BayesGame load_game(const std::string& path);
json equilibrium_to_json(const BayesGame& game, const Equilibrium& eq);

}  // namespace eimtd
