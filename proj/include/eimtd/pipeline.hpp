#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eimtd/attacks.hpp"
#include "eimtd/dataset.hpp"
#include "eimtd/distill.hpp"
#include "eimtd/io.hpp"
#include "eimtd/simulate.hpp"

namespace eimtd {

struct NetSpec {
    std::string id;
    std::vector<std::size_t> hidden;
    double learning_rate = 0.05;
    std::size_t epochs = 20;
};

struct RunConfig {
    std::uint64_t seed = 0;
    DatasetSpec data;
    NetSpec teacher;
    AttackConfig teacher_attack;  // crafts the adversarial half of teacher training
    std::vector<NetSpec> students;
    DistillConfig distill;  // learning_rates come from the student specs
    std::vector<NetSpec> substitutes;
    AttackConfig attack;  // adversary's evaluation attack
    std::size_t queries = 100;
    std::size_t requests = 10000;
    std::vector<double> alphas;
    std::vector<double> sweep_temperatures;  // optional gamma-vs-T sweep
    std::vector<double> sweep_lambdas;       // optional gamma-vs-lambda sweep

    void validate() const;
};

RunConfig config_from_json(const json& doc);
json config_to_json(const RunConfig& cfg);
// Hash of the canonical effective configuration, embedded in every artifact.
std::string config_hash(const RunConfig& cfg);
RunConfig load_config(const std::string& path);

// The default desk-scale setup: 16-feature blobs, 4 classes, a 3x64 teacher,
// K students with one hidden layer of 16, three substitutes.
RunConfig toy_config(std::uint64_t seed, std::size_t students = 4);

SplitData make_data(const RunConfig& cfg);
DenseNet train_teacher(const RunConfig& cfg, const LabeledSet& train);
StudentEnsemble init_students(const RunConfig& cfg);
DistillResult distill_students(const RunConfig& cfg, const DenseNet& teacher, const LabeledSet& train);
std::vector<DenseNet> train_substitutes(const RunConfig& cfg, const LabeledSet& train);
Scenario make_scenario(const RunConfig& cfg, StudentEnsemble members, std::vector<DenseNet> substitutes,
                       LabeledSet eval);

// Mean differential immunity over substitutes.
double mean_immunity(const TransferTable& table);

struct SweepPoint {
    double parameter = 0.0;
    double gamma = 0.0;
    double eimtd_accuracy = 0.0;  // analytic, at alpha = 1
};

// Re-distills the students for each temperature (or lambda) holding the rest of
// `cfg` fixed and scores the ensemble against the given substitutes.
std::vector<SweepPoint> sweep_temperature(const RunConfig& cfg, const DenseNet& teacher, const SplitData& data,
                                          const std::vector<DenseNet>& substitutes,
                                          const std::vector<double>& temperatures);
std::vector<SweepPoint> sweep_lambda(const RunConfig& cfg, const DenseNet& teacher, const SplitData& data,
                                     const std::vector<DenseNet>& substitutes, const std::vector<double>& lambdas);

std::string sweep_csv(const std::string& parameter_name, const std::vector<SweepPoint>& points);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace eimtd
