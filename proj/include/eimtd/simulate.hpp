#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "eimtd/attacks.hpp"
#include "eimtd/dataset.hpp"
#include "eimtd/distill.hpp"
#include "eimtd/game.hpp"
#include "eimtd/io.hpp"
#include "eimtd/rng.hpp"

namespace eimtd {

struct Scenario {
    StudentEnsemble members;
    std::vector<DenseNet> substitutes;
    std::vector<std::string> substitute_ids;
    AttackConfig attack;
    std::size_t queries = 100;        // adversary query rounds per selection
    std::vector<double> alphas;       // adversary occurrence grid
    std::size_t requests = 10000;     // simulated requests per alpha point
    LabeledSet eval;
    std::uint64_t seed = 0;

    void validate() const;
    std::string member_id(std::size_t k) const;
    std::string substitute_id(std::size_t i) const;
};

// Samples the serving member for each request from the mixed strategy s.
class Controller {
public:
    Controller(Vec strategy, std::uint64_t seed);

    const Vec& strategy() const { return strategy_; }
    std::size_t pick();

private:
    Vec strategy_;
    Vec cumulative_;
    Rng rng_;
};

inline std::size_t schedule_pick(Controller& c) { return c.pick(); }

// Adversarial sets crafted once per substitute on the eval set, plus the
// per-example outcome against every member.
struct TransferTable {
    std::vector<AdvBatch> batches;                       // [substitute]
    std::vector<std::vector<std::vector<char>>> fooled;  // [substitute][member][example]
    std::vector<std::vector<char>> clean_correct;        // [member][example]
    std::vector<Vec> rates;                              // r_static[substitute][member]
    Vec clean_accuracy;                                  // [member]

    std::size_t substitutes() const { return rates.size(); }
    std::size_t members() const { return clean_accuracy.size(); }
    std::size_t examples() const { return clean_correct.empty() ? 0 : clean_correct.front().size(); }
};

AttackConfig substitute_attack(const Scenario& scenario, std::size_t substitute);
std::vector<AdvBatch> craft_substitute_batches(const Scenario& scenario);
// Scores precomputed adversarial batches (one per substitute, parallel to eval).
TransferTable tabulate_transfer(const StudentEnsemble& members, std::vector<AdvBatch> batches,
                                const LabeledSet& eval);
TransferTable measure_transfer(const Scenario& scenario);

// Mean over ordered member pairs (a, b), a != b, of the rate at which attacks
// crafted on a fool b.
double mean_cross_transfer(const StudentEnsemble& ensemble, const LabeledSet& eval, const AttackConfig& attack);

double static_transfer_rate(std::size_t substitute, std::size_t target, const Scenario& scenario);

struct DynamicRate {
    double monte_carlo = 0.0;
    double analytic = 0.0;         // sum_k s_k r_static(i, k)
    double standard_error = 0.0;   // sqrt(p (1 - p) / draws) at p = analytic
    std::size_t draws = 0;
};

// Each draw picks an adversarial example uniformly and the serving member from
// the controller.
DynamicRate dynamic_transfer_rate(std::size_t substitute, Controller& controller, const TransferTable& table,
                                  std::size_t draws, std::uint64_t seed);
DynamicRate dynamic_transfer_rate(std::size_t substitute, Controller& controller, const Scenario& scenario,
                                  std::size_t draws);

double analytic_dynamic_rate(const TransferTable& table, std::size_t substitute, std::span<const double> s);

struct StaticDeployment {
    std::size_t member = 0;
};
struct DynamicDeployment {
    Vec strategy;
};
using Deployment = std::variant<StaticDeployment, DynamicDeployment>;

struct SubstituteChoice {
    std::size_t index = 0;
    Vec success_rate;  // per substitute, observed over the query rounds
};

// Each round draws one clean example, submits the M adversarial variants and
// observes only whether the served prediction differs from the label.
SubstituteChoice adversary_select_substitute(const TransferTable& table, const Deployment& deployment,
                                             std::size_t queries, std::uint64_t seed);
SubstituteChoice adversary_select_substitute(const Scenario& scenario, const Deployment& deployment);

// (max - min + 1) / (max + 1) over ASR fractions.
double differential_immunity(std::span<const double> asr_row);

struct ModelPayoffs {
    PayoffMatrix legitimate;  // K x 1, clean accuracy in percent
    PayoffMatrix adversary;   // K x M, (100 (1 - r), 100 r)
};

ModelPayoffs build_payoff_from_models(const TransferTable& table, const std::vector<std::string>& member_ids,
                                      const std::vector<std::string>& substitute_ids);
ModelPayoffs build_payoff_from_models(const Scenario& scenario);

struct AlphaPoint {
    double alpha = 0.0;
    Vec strategy;
    std::size_t adversary_substitute = 0;        // follower response of the adversary type
    double eimtd_analytic = 0.0;
    double eimtd_simulated = 0.0;
    std::vector<std::size_t> static_substitute;  // best-response substitute per member
    Vec static_analytic;
    Vec static_simulated;
};

struct TransferReport {
    std::vector<std::string> member_ids;
    std::vector<std::string> substitute_ids;
    std::vector<Vec> r_static;       // [substitute][member]
    Vec clean_accuracy;
    Vec dynamic_strategy;            // equilibrium at alpha = 1
    Vec r_dynamic;                   // analytic, per substitute
    Vec r_dynamic_monte_carlo;       // per substitute
    std::size_t chosen_substitute = 0;
    Vec gamma;                       // per substitute
    std::vector<AlphaPoint> accuracy_vs_alpha;
    std::string config_hash;
};

TransferReport run_experiment(const Scenario& scenario);
TransferReport run_experiment(const Scenario& scenario, const TransferTable& table);

json report_to_json(const TransferReport& report);
TransferReport report_from_json(const json& doc);

// alpha, eimtd_analytic, eimtd_simulated, then one analytic column per member.
std::string alpha_sweep_csv(const TransferReport& report);

}  // namespace eimtd
