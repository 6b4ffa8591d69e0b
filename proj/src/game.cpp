#include "eimtd/game.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eimtd/error.hpp"
#include "eimtd/lp.hpp"

namespace eimtd {

namespace {

constexpr double kIncentiveTol = 1e-9;

void require_table(const std::vector<Vec>& m, std::size_t rows, std::size_t cols, const std::string& name) {
    require(m.size() == rows, name + " has " + std::to_string(m.size()) + " rows, expected " + std::to_string(rows));
    for (const Vec& r : m) {
        require(r.size() == cols, name + " row length does not match the follower actions");
        for (double v : r) require(std::isfinite(v), name + " has a non-finite entry");
    }
}

}  // namespace

void PayoffMatrix::validate() const {
    require(rows() >= 1, "payoff matrix needs at least one leader action");
    require(cols() >= 1, "payoff matrix needs at least one follower action");
    require_table(leader, rows(), cols(), "R_L");
    require_table(follower, rows(), cols(), "R_F");
}

void BayesGame::validate() const {
    require(!types.empty(), "game has no follower types");
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
    double total = 0.0;
    for (const FollowerType& t : types) {
        t.payoff.validate();
        require(t.payoff.rows() == types.front().payoff.rows(),
                "type '" + t.id + "' disagrees on the number of leader actions");
        require(t.probability >= 0.0, "type '" + t.id + "' has a negative probability");
        total += t.probability;
    }
    require(std::abs(total - 1.0) <= 1e-12, "type probabilities must sum to 1");
}

BayesGame two_type_game(PayoffMatrix legitimate, PayoffMatrix adversary, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0,1]");
    BayesGame g;
    g.alpha = alpha;
    g.types.push_back({"legitimate", 1.0 - alpha, std::move(legitimate)});
    g.types.push_back({"adversary", alpha, std::move(adversary)});
    g.validate();
    return g;
}

std::vector<TypeOutcome> expected_payoffs(const BayesGame& game, std::span<const double> s) {
    const std::size_t k = game.leader_actions();
    require(s.size() == k, "strategy has length " + std::to_string(s.size()) + ", game has " + std::to_string(k) +
                               " leader actions");
    std::vector<TypeOutcome> out;
    out.reserve(game.types.size());
    for (const FollowerType& t : game.types) {
        const PayoffMatrix& p = t.payoff;
        TypeOutcome o;
        o.follower_value = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < p.cols(); ++j) {
            double f = 0.0;
            for (std::size_t i = 0; i < k; ++i) f += p.follower[i][j] * s[i];
            if (f > o.follower_value) {
                o.follower_value = f;
                o.best_response = j;
            }
        }
        for (std::size_t i = 0; i < k; ++i) o.leader_payoff += p.leader[i][o.best_response] * s[i];
        o.leader_contribution = t.probability * o.leader_payoff;
        out.push_back(o);
    }
    return out;
}

Equilibrium solve(const BayesGame& game) {
    game.validate();
    const std::size_t k = game.leader_actions();
    const std::size_t c = game.types.size();

    std::vector<std::size_t> combo(c, 0);
    bool have = false;
    Equilibrium best;
    for (;;) {
        LinearProgram lp;
        lp.objective.assign(k, 0.0);
        for (std::size_t t = 0; t < c; ++t) {
            const PayoffMatrix& p = game.types[t].payoff;
            for (std::size_t i = 0; i < k; ++i) lp.objective[i] += game.types[t].probability * p.leader[i][combo[t]];
            for (std::size_t alt = 0; alt < p.cols(); ++alt) {
                if (alt == combo[t]) continue;
                Vec row(k);
                for (std::size_t i = 0; i < k; ++i) row[i] = p.follower[i][alt] - p.follower[i][combo[t]];
                lp.add_le(std::move(row), 0.0);
            }
        }
        lp.add_eq(Vec(k, 1.0), 1.0);
        const LpResult r = lp_solve(lp);
        if (r.status == LpStatus::unbounded) {
            std::string where;
            for (std::size_t q : combo) where += (where.empty() ? "" : ",") + std::to_string(q);
            throw std::runtime_error("LP for follower responses (" + where + ") reported unbounded");
        }
        if (r.status == LpStatus::optimal && (!have || r.value > best.leader_value + kIncentiveTol)) {
            have = true;
            best.s = r.x;
            best.q = combo;
            best.leader_value = r.value;
        }
        // Odometer over response combinations, first type most significant.
        bool advanced = false;
        for (std::size_t t = c; t-- > 0;) {
            if (++combo[t] < game.types[t].payoff.cols()) {
                advanced = true;
                break;
            }
            combo[t] = 0;
        }
        if (!advanced) break;
    }
    if (!have) throw std::runtime_error("no follower response combination admitted a feasible leader strategy");

    // Renormalize away LP round-off so the simplex condition holds tightly.
    double total = 0.0;
    for (double v : best.s) total += v;
    for (double& v : best.s) v /= total;
    best.v.resize(c);
    best.leader_value = 0.0;
    for (std::size_t t = 0; t < c; ++t) {
        const PayoffMatrix& p = game.types[t].payoff;
        double f = 0.0;
        double l = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            f += p.follower[i][best.q[t]] * best.s[i];
            l += p.leader[i][best.q[t]] * best.s[i];
        }
        best.v[t] = f;
        best.leader_value += game.types[t].probability * l;
    }
    return best;
}

namespace {

// Visits every composition of `units` into s.size() parts in lexicographic order.
template <typename Visit>
void for_each_lattice_point(std::vector<std::size_t>& parts, std::size_t pos, std::size_t remaining, Visit& visit) {
    if (pos + 1 == parts.size()) {
        parts[pos] = remaining;
        visit(parts);
        return;
    }
    for (std::size_t n = remaining + 1; n-- > 0;) {
        parts[pos] = n;
        for_each_lattice_point(parts, pos + 1, remaining - n, visit);
    }
}

}  // namespace

Equilibrium brute_force(const BayesGame& game, double grid_step) {
    require(grid_step > 0.0, "grid step must be positive");
    game.validate();
    const std::size_t k = game.leader_actions();
    const std::size_t units = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(1.0 / grid_step)));

    Equilibrium best;
    bool have = false;
    Vec s(k);
    std::vector<std::size_t> parts(k, 0);
    auto visit = [&](const std::vector<std::size_t>& n) {
        for (std::size_t i = 0; i < k; ++i) s[i] = static_cast<double>(n[i]) / static_cast<double>(units);
        double value = 0.0;
        for (const FollowerType& t : game.types) {
            const PayoffMatrix& p = t.payoff;
            double fbest = -std::numeric_limits<double>::infinity();
            std::size_t jbest = 0;
            for (std::size_t j = 0; j < p.cols(); ++j) {
                double f = 0.0;
                for (std::size_t i = 0; i < k; ++i) f += p.follower[i][j] * s[i];
                if (f > fbest) {
                    fbest = f;
                    jbest = j;
                }
            }
            double l = 0.0;
            for (std::size_t i = 0; i < k; ++i) l += p.leader[i][jbest] * s[i];
            value += t.probability * l;
        }
        if (!have || value > best.leader_value) {
            have = true;
            best.s = s;
            best.leader_value = value;
        }
    };
    for_each_lattice_point(parts, 0, units, visit);

    for (const TypeOutcome& o : expected_payoffs(game, best.s)) {
        best.q.push_back(o.best_response);
        best.v.push_back(o.follower_value);
    }
    return best;
}

double equilibrium_violation(const BayesGame& game, const Equilibrium& eq) {
    const std::size_t k = game.leader_actions();
    require(eq.s.size() == k && eq.q.size() == game.types.size() && eq.v.size() == game.types.size(),
            "equilibrium does not match the game's shape");
    double worst = 0.0;
    double total = 0.0;
    for (double p : eq.s) {
        worst = std::max(worst, -p);
        total += p;
    }
    worst = std::max(worst, std::abs(total - 1.0));
    for (std::size_t t = 0; t < game.types.size(); ++t) {
        const PayoffMatrix& p = game.types[t].payoff;
        require(eq.q[t] < p.cols(), "follower response out of range");
        double at_q = 0.0;
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < p.cols(); ++j) {
            double f = 0.0;
            for (std::size_t i = 0; i < k; ++i) f += p.follower[i][j] * eq.s[i];
            top = std::max(top, f);
            if (j == eq.q[t]) at_q = f;
        }
        worst = std::max(worst, std::abs(eq.v[t] - at_q));
        worst = std::max(worst, top - eq.v[t]);
    }
    return worst;
}

json game_to_json(const BayesGame& game) {
    json types = json::array();
    for (const FollowerType& t : game.types) {
        types.push_back({{"id", t.id},
                         {"probability", t.probability},
                         {"leader_actions", t.payoff.leader_actions},
                         {"follower_actions", t.payoff.follower_actions},
                         {"R_L", t.payoff.leader},
                         {"R_F", t.payoff.follower}});
    }
    return {{"alpha", game.alpha}, {"types", std::move(types)}};
}

BayesGame game_from_json(const json& doc) {
    BayesGame g;
    try {
        g.alpha = doc.value("alpha", 0.0);
        for (const json& jt : doc.at("types")) {
            FollowerType t;
            t.id = jt.at("id").get<std::string>();
            t.probability = jt.at("probability").get<double>();
            t.payoff.leader_actions = jt.at("leader_actions").get<std::vector<std::string>>();
            t.payoff.follower_actions = jt.at("follower_actions").get<std::vector<std::string>>();
            t.payoff.leader = jt.at("R_L").get<std::vector<Vec>>();
            t.payoff.follower = jt.at("R_F").get<std::vector<Vec>>();
            g.types.push_back(std::move(t));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed game document: ") + e.what());
    }
    g.validate();
    return g;
}

BayesGame load_game(const std::string& path) {
    try {
        return game_from_json(read_json(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

json equilibrium_to_json(const BayesGame& game, const Equilibrium& eq) {
    json q = json::array();
    for (std::size_t t = 0; t < game.types.size(); ++t) {
        const PayoffMatrix& p = game.types[t].payoff;
        q.push_back({{"type", game.types[t].id}, {"response", eq.q[t]}, {"action", p.follower_actions[eq.q[t]]}});
    }
    return {{"leader_actions", game.types.front().payoff.leader_actions},
            {"s", eq.s},
            {"q", std::move(q)},
            {"v", eq.v},
            {"leader_value", eq.leader_value}};
}

}  // namespace eimtd
