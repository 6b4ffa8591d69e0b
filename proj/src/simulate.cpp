#include "eimtd/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "eimtd/error.hpp"

namespace eimtd {

namespace {

// Substream roles under the scenario's master seed.
enum Role : std::uint64_t { kAttack = 1, kDynamicDraws = 2, kController = 3, kRequests = 4, kQueries = 5 };

void check_strategy(std::span<const double> s, std::size_t k) {
    require(s.size() == k, "strategy length does not match the member count");
    double total = 0.0;
    for (double p : s) {
        require(p >= 0.0, "strategy has a negative entry");
        total += p;
    }
    require(std::abs(total - 1.0) <= 1e-9, "strategy does not sum to 1");
}

}  // namespace

void Scenario::validate() const {
    members.validate();
    require(!substitutes.empty(), "scenario needs at least one substitute model");
    require(substitute_ids.empty() || substitute_ids.size() == substitutes.size(),
            "substitute ids not parallel to substitutes");
    require(queries >= 1, "adversary needs at least one query round");
    require(!eval.empty(), "evaluation set is empty");
    for (double a : alphas) require(a >= 0.0 && a <= 1.0, "alpha grid values must lie in [0,1]");
    for (const DenseNet& s : substitutes) {
        s.validate();
        require(s.input_dim() == members.members.front().input_dim() &&
                    s.num_classes() == members.members.front().num_classes(),
                "substitute shape does not match the members");
    }
    attack.validate();
}

std::string Scenario::member_id(std::size_t k) const {
    return k < members.ids.size() ? members.ids[k] : "member-" + std::to_string(k);
}

std::string Scenario::substitute_id(std::size_t i) const {
    return i < substitute_ids.size() ? substitute_ids[i] : "substitute-" + std::to_string(i);
}

Controller::Controller(Vec strategy, std::uint64_t seed) : strategy_(std::move(strategy)), rng_(seed) {
    check_strategy(strategy_, strategy_.size());
    double run = 0.0;
    for (double p : strategy_) {
        run += p;
        cumulative_.push_back(run);
    }
}

std::size_t Controller::pick() {
    const double u = rng_.uniform01() * cumulative_.back();
    for (std::size_t k = 0; k < cumulative_.size(); ++k)
        if (u < cumulative_[k]) return k;
    for (std::size_t k = strategy_.size(); k-- > 0;)
        if (strategy_[k] > 0.0) return k;
    return 0;
}

AttackConfig substitute_attack(const Scenario& scenario, std::size_t substitute) {
    AttackConfig cfg = scenario.attack;
    cfg.seed = derive_seed(scenario.seed, kAttack, substitute);
    return cfg;
}

TransferTable tabulate_transfer(const StudentEnsemble& members, std::vector<AdvBatch> batches,
                                const LabeledSet& eval) {
    require(!eval.empty(), "evaluation set is empty");
    require(!batches.empty(), "no adversarial batches");
    const std::size_t m = batches.size();
    const std::size_t k = members.size();
    const std::size_t n = eval.size();

    TransferTable t;
    t.clean_correct.assign(k, std::vector<char>(n, 0));
    t.clean_accuracy.assign(k, 0.0);
    for (std::size_t mem = 0; mem < k; ++mem) {
        std::size_t correct = 0;
        for (std::size_t e = 0; e < n; ++e) {
            const Example& ex = eval.examples[e];
            t.clean_correct[mem][e] = predict(members.members[mem], ex.x) == ex.y;
            correct += static_cast<std::size_t>(t.clean_correct[mem][e]);
        }
        t.clean_accuracy[mem] = static_cast<double>(correct) / static_cast<double>(n);
    }

    t.fooled.assign(m, std::vector<std::vector<char>>(k, std::vector<char>(n, 0)));
    t.rates.assign(m, Vec(k, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        const AdvBatch& b = batches[i];
        require(b.size() == n, "adversarial batch " + std::to_string(i) + " does not cover the evaluation set");
        for (std::size_t mem = 0; mem < k; ++mem) {
            std::size_t fooled = 0;
            for (std::size_t e = 0; e < n; ++e) {
                const bool f = predict(members.members[mem], b.items[e].x_adv) != b.items[e].y;
                t.fooled[i][mem][e] = f;
                fooled += static_cast<std::size_t>(f);
            }
            t.rates[i][mem] = static_cast<double>(fooled) / static_cast<double>(n);
        }
    }
    t.batches = std::move(batches);
    return t;
}

std::vector<AdvBatch> craft_substitute_batches(const Scenario& scenario) {
    std::vector<AdvBatch> batches;
    for (std::size_t i = 0; i < scenario.substitutes.size(); ++i)
        batches.push_back(craft_batch(scenario.substitutes[i], scenario.eval, substitute_attack(scenario, i),
                                      scenario.substitute_id(i)));
    return batches;
}

TransferTable measure_transfer(const Scenario& scenario) {
    scenario.validate();
    return tabulate_transfer(scenario.members, craft_substitute_batches(scenario), scenario.eval);
}

double mean_cross_transfer(const StudentEnsemble& ensemble, const LabeledSet& eval, const AttackConfig& attack) {
    require(ensemble.size() >= 2, "cross transfer needs two members");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < ensemble.size(); ++a) {
        AttackConfig cfg = attack;
        cfg.seed = derive_seed(attack.seed, a);
        const AdvBatch b = craft_batch(ensemble.members[a], eval, cfg, "member-" + std::to_string(a));
        for (std::size_t t = 0; t < ensemble.size(); ++t) {
            if (t == a) continue;
            total += evaluate_asr(ensemble.members[t], b);
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

double static_transfer_rate(std::size_t substitute, std::size_t target, const Scenario& scenario) {
    scenario.validate();
    require(substitute < scenario.substitutes.size(), "substitute index out of range");
    require(target < scenario.members.size(), "target index out of range");
    const AdvBatch b = craft_batch(scenario.substitutes[substitute], scenario.eval,
                                   substitute_attack(scenario, substitute), scenario.substitute_id(substitute));
    return evaluate_asr(scenario.members.members[target], b);
}

double analytic_dynamic_rate(const TransferTable& table, std::size_t substitute, std::span<const double> s) {
    require(substitute < table.substitutes(), "substitute index out of range");
    check_strategy(s, table.members());
    double r = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) r += s[k] * table.rates[substitute][k];
    return r;
}

DynamicRate dynamic_transfer_rate(std::size_t substitute, Controller& controller, const TransferTable& table,
                                  std::size_t draws, std::uint64_t seed) {
    require(draws >= 1, "need at least one draw");
    require(table.examples() > 0, "transfer table has no examples");
    DynamicRate out;
    out.analytic = analytic_dynamic_rate(table, substitute, controller.strategy());
    out.draws = draws;
    Rng rng(seed);
    std::size_t fooled = 0;
    for (std::size_t d = 0; d < draws; ++d) {
        const std::size_t e = rng.index(table.examples());
        const std::size_t k = controller.pick();
        fooled += static_cast<std::size_t>(table.fooled[substitute][k][e]);
    }
    out.monte_carlo = static_cast<double>(fooled) / static_cast<double>(draws);
    out.standard_error = std::sqrt(out.analytic * (1.0 - out.analytic) / static_cast<double>(draws));
    return out;
}

DynamicRate dynamic_transfer_rate(std::size_t substitute, Controller& controller, const Scenario& scenario,
                                  std::size_t draws) {
    const TransferTable table = measure_transfer(scenario);
    return dynamic_transfer_rate(substitute, controller, table, draws,
                                 derive_seed(scenario.seed, kDynamicDraws, substitute));
}

SubstituteChoice adversary_select_substitute(const TransferTable& table, const Deployment& deployment,
                                             std::size_t queries, std::uint64_t seed) {
    require(queries >= 1, "adversary needs at least one query round");
    require(table.substitutes() >= 1 && table.examples() > 0, "transfer table is empty");
    Rng rng(derive_seed(seed, 0));
    std::optional<Controller> controller;
    std::size_t fixed = 0;
    if (const auto* st = std::get_if<StaticDeployment>(&deployment)) {
        require(st->member < table.members(), "static deployment member out of range");
        fixed = st->member;
    } else {
        controller.emplace(std::get<DynamicDeployment>(deployment).strategy, derive_seed(seed, 1));
    }
    const std::size_t m = table.substitutes();
    std::vector<std::size_t> hits(m, 0);
    for (std::size_t q = 0; q < queries; ++q) {
        const std::size_t e = rng.index(table.examples());
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t served = controller ? controller->pick() : fixed;
            hits[i] += static_cast<std::size_t>(table.fooled[i][served][e]);
        }
    }
    SubstituteChoice out;
    for (std::size_t i = 0; i < m; ++i) {
        out.success_rate.push_back(static_cast<double>(hits[i]) / static_cast<double>(queries));
        if (hits[i] > hits[out.index]) out.index = i;
    }
    return out;
}

SubstituteChoice adversary_select_substitute(const Scenario& scenario, const Deployment& deployment) {
    const TransferTable table = measure_transfer(scenario);
    return adversary_select_substitute(table, deployment, scenario.queries, derive_seed(scenario.seed, kQueries));
}

double differential_immunity(std::span<const double> asr_row) {
    require(!asr_row.empty(), "differential immunity of an empty row");
    const auto [lo, hi] = std::minmax_element(asr_row.begin(), asr_row.end());
    require(*lo >= 0.0 && *hi <= 1.0, "attack success rates must be fractions in [0,1]");
    return (*hi - *lo + 1.0) / (*hi + 1.0);
}

ModelPayoffs build_payoff_from_models(const TransferTable& table, const std::vector<std::string>& member_ids,
                                      const std::vector<std::string>& substitute_ids) {
    require(table.members() >= 1 && table.substitutes() >= 1, "payoffs need members and substitutes");
    require(member_ids.size() == table.members() && substitute_ids.size() == table.substitutes(),
            "id lists do not match the transfer table");
    ModelPayoffs p;
    p.legitimate.leader_actions = member_ids;
    p.legitimate.follower_actions = {"clean"};
    p.adversary.leader_actions = member_ids;
    p.adversary.follower_actions = substitute_ids;
    for (std::size_t k = 0; k < table.members(); ++k) {
        const double acc = 100.0 * table.clean_accuracy[k];
        p.legitimate.leader.push_back({acc});
        p.legitimate.follower.push_back({acc});
        Vec rl, rf;
        for (std::size_t i = 0; i < table.substitutes(); ++i) {
            const double asr = 100.0 * table.rates[i][k];
            rf.push_back(asr);
            rl.push_back(100.0 - asr);
        }
        p.adversary.leader.push_back(std::move(rl));
        p.adversary.follower.push_back(std::move(rf));
    }
    return p;
}

ModelPayoffs build_payoff_from_models(const Scenario& scenario) {
    const TransferTable table = measure_transfer(scenario);
    std::vector<std::string> mids, sids;
    for (std::size_t k = 0; k < scenario.members.size(); ++k) mids.push_back(scenario.member_id(k));
    for (std::size_t i = 0; i < scenario.substitutes.size(); ++i) sids.push_back(scenario.substitute_id(i));
    return build_payoff_from_models(table, mids, sids);
}

TransferReport run_experiment(const Scenario& scenario) { return run_experiment(scenario, measure_transfer(scenario)); }

TransferReport run_experiment(const Scenario& scenario, const TransferTable& table) {
    scenario.validate();
    const std::size_t k = table.members();
    const std::size_t m = table.substitutes();
    TransferReport rep;
    for (std::size_t i = 0; i < k; ++i) rep.member_ids.push_back(scenario.member_id(i));
    for (std::size_t i = 0; i < m; ++i) rep.substitute_ids.push_back(scenario.substitute_id(i));
    rep.r_static = table.rates;
    rep.clean_accuracy = table.clean_accuracy;
    const ModelPayoffs payoffs = build_payoff_from_models(table, rep.member_ids, rep.substitute_ids);

    // Each member's most damaging substitute (ties to the smallest index).
    std::vector<std::size_t> static_br(k, 0);
    for (std::size_t mem = 0; mem < k; ++mem)
        for (std::size_t i = 1; i < m; ++i)
            if (table.rates[i][mem] > table.rates[static_br[mem]][mem]) static_br[mem] = i;

    for (std::size_t a = 0; a < scenario.alphas.size(); ++a) {
        const double alpha = scenario.alphas[a];
        const Equilibrium eq = solve(two_type_game(payoffs.legitimate, payoffs.adversary, alpha));
        AlphaPoint pt;
        pt.alpha = alpha;
        pt.strategy = eq.s;
        pt.adversary_substitute = eq.q[1];
        pt.static_substitute = static_br;

        double clean = 0.0;
        for (std::size_t mem = 0; mem < k; ++mem) clean += eq.s[mem] * table.clean_accuracy[mem];
        const double asr = analytic_dynamic_rate(table, pt.adversary_substitute, eq.s);
        pt.eimtd_analytic = (1.0 - alpha) * clean + alpha * (1.0 - asr);
        for (std::size_t mem = 0; mem < k; ++mem)
            pt.static_analytic.push_back((1.0 - alpha) * table.clean_accuracy[mem] +
                                         alpha * (1.0 - table.rates[static_br[mem]][mem]));

        // Simulated request stream; static members see the same requests.
        if (scenario.requests > 0) {
            Rng stream(derive_seed(scenario.seed, kRequests, a));
            Controller controller(eq.s, derive_seed(scenario.seed, kController, a));
            std::size_t eimtd_ok = 0;
            std::vector<std::size_t> static_ok(k, 0);
            for (std::size_t r = 0; r < scenario.requests; ++r) {
                const bool adversarial = stream.uniform01() < alpha;
                const std::size_t e = stream.index(table.examples());
                const std::size_t served = controller.pick();
                if (adversarial) {
                    eimtd_ok += static_cast<std::size_t>(!table.fooled[pt.adversary_substitute][served][e]);
                    for (std::size_t mem = 0; mem < k; ++mem)
                        static_ok[mem] += static_cast<std::size_t>(!table.fooled[static_br[mem]][mem][e]);
                } else {
                    eimtd_ok += static_cast<std::size_t>(table.clean_correct[served][e]);
                    for (std::size_t mem = 0; mem < k; ++mem)
                        static_ok[mem] += static_cast<std::size_t>(table.clean_correct[mem][e]);
                }
            }
            const double total = static_cast<double>(scenario.requests);
            pt.eimtd_simulated = static_cast<double>(eimtd_ok) / total;
            for (std::size_t mem = 0; mem < k; ++mem)
                pt.static_simulated.push_back(static_cast<double>(static_ok[mem]) / total);
        }
        rep.accuracy_vs_alpha.push_back(std::move(pt));
    }

    const Equilibrium full = solve(two_type_game(payoffs.legitimate, payoffs.adversary, 1.0));
    rep.dynamic_strategy = full.s;
    for (std::size_t i = 0; i < m; ++i) {
        Controller c(full.s, derive_seed(scenario.seed, kController, 0xd1ull + i));
        const DynamicRate d = dynamic_transfer_rate(i, c, table, scenario.requests > 0 ? scenario.requests : 10000,
                                                    derive_seed(scenario.seed, kDynamicDraws, i));
        rep.r_dynamic.push_back(d.analytic);
        rep.r_dynamic_monte_carlo.push_back(d.monte_carlo);
        rep.gamma.push_back(differential_immunity(table.rates[i]));
    }
    rep.chosen_substitute = adversary_select_substitute(table, DynamicDeployment{full.s}, scenario.queries,
                                                        derive_seed(scenario.seed, kQueries))
                                .index;
    return rep;
}

json report_to_json(const TransferReport& r) {
    json points = json::array();
    for (const AlphaPoint& p : r.accuracy_vs_alpha) {
        points.push_back({{"alpha", p.alpha},
                          {"strategy", p.strategy},
                          {"adversary_substitute", p.adversary_substitute},
                          {"eimtd_analytic", p.eimtd_analytic},
                          {"eimtd_simulated", p.eimtd_simulated},
                          {"static_substitute", p.static_substitute},
                          {"static_analytic", p.static_analytic},
                          {"static_simulated", p.static_simulated}});
    }
    return {{"config_hash", r.config_hash},
            {"member_ids", r.member_ids},
            {"substitute_ids", r.substitute_ids},
            {"r_static", r.r_static},
            {"clean_accuracy", r.clean_accuracy},
            {"dynamic_strategy", r.dynamic_strategy},
            {"r_dynamic", r.r_dynamic},
            {"r_dynamic_monte_carlo", r.r_dynamic_monte_carlo},
            {"chosen_substitute", r.chosen_substitute},
            {"gamma", r.gamma},
            {"accuracy_vs_alpha", std::move(points)},
            {"alpha_sweep_csv", alpha_sweep_csv(r)}};
}

TransferReport report_from_json(const json& doc) {
    TransferReport r;
    try {
        r.config_hash = doc.value("config_hash", std::string{});
        r.member_ids = doc.at("member_ids").get<std::vector<std::string>>();
        r.substitute_ids = doc.at("substitute_ids").get<std::vector<std::string>>();
        r.r_static = doc.at("r_static").get<std::vector<Vec>>();
        r.clean_accuracy = doc.at("clean_accuracy").get<Vec>();
        r.dynamic_strategy = doc.at("dynamic_strategy").get<Vec>();
        r.r_dynamic = doc.at("r_dynamic").get<Vec>();
        r.r_dynamic_monte_carlo = doc.at("r_dynamic_monte_carlo").get<Vec>();
        r.chosen_substitute = doc.at("chosen_substitute").get<std::size_t>();
        r.gamma = doc.at("gamma").get<Vec>();
        for (const json& p : doc.at("accuracy_vs_alpha")) {
            AlphaPoint pt;
            pt.alpha = p.at("alpha").get<double>();
            pt.strategy = p.at("strategy").get<Vec>();
            pt.adversary_substitute = p.at("adversary_substitute").get<std::size_t>();
            pt.eimtd_analytic = p.at("eimtd_analytic").get<double>();
            pt.eimtd_simulated = p.at("eimtd_simulated").get<double>();
            pt.static_substitute = p.at("static_substitute").get<std::vector<std::size_t>>();
            pt.static_analytic = p.at("static_analytic").get<Vec>();
            pt.static_simulated = p.at("static_simulated").get<Vec>();
            r.accuracy_vs_alpha.push_back(std::move(pt));
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed transfer report: ") + e.what());
    }
    return r;
}

std::string alpha_sweep_csv(const TransferReport& r) {
    std::ostringstream os;
    os << "alpha,eimtd_analytic,eimtd_simulated";
    for (const std::string& id : r.member_ids) os << ',' << id;
    os << '\n';
    for (const AlphaPoint& p : r.accuracy_vs_alpha) {
        os << format_double(p.alpha) << ',' << format_double(p.eimtd_analytic) << ','
           << format_double(p.eimtd_simulated);
        for (double v : p.static_analytic) os << ',' << format_double(v);
        os << '\n';
    }
    return os.str();
}

}  // namespace eimtd
