#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eimtd/dataset.hpp"
#include "eimtd/tensor.hpp"

namespace eimtd {

// How the parameter gradient of the diversity term is obtained.
enum class CoherenceGradient {
    exact,              // reverse pass through the input-gradient computation
    finite_difference,  // central differences, h = 1e-3 * (1 + |theta_i|)
};

struct DistillConfig {
    double temperature = 10.0;
    double lambda = 0.0;
    double beta = 1.0;  // only the soft-label term is trained
    std::size_t members = 2;
    std::vector<double> learning_rates;  // one per member
    std::size_t epochs = 10;
    std::size_t batch_size = 32;  // 0 means full batch
    std::uint64_t seed = 0;
    CoherenceGradient coherence_gradient = CoherenceGradient::exact;

    void validate() const;
};

struct StudentEnsemble {
    std::vector<DenseNet> members;
    std::vector<std::string> ids;

    std::size_t size() const { return members.size(); }
    void validate() const;
};

// Attaches teacher soft labels softmax_t(forward(teacher, x), T) to a copy of `data`.
LabeledSet soft_labels(const DenseNet& teacher, const LabeledSet& data, double temperature);

// <a, b> / (|a| |b| + 1e-12)
double pairwise_cs(const Gradient& a, const Gradient& b);
double pairwise_cs(std::span<const double> a, std::span<const double> b);

// log sum_{a<b} exp(CS(g_a, g_b)) over all unordered pairs.
double cs_coherence(const std::vector<Vec>& grads);

// Input gradients of each member at T = 1 against the soft label.
std::vector<Vec> member_input_gradients(const StudentEnsemble& ensemble, std::span<const double> x,
                                        std::span<const double> soft_label);

struct LossTerms {
    double distillation = 0.0;  // mean over batch of (1/K) sum_i T^2 J_i
    double coherence = 0.0;     // mean over batch of cs_coherence
    double total = 0.0;         // distillation + lambda * coherence
};

// `batch` indexes into `data`, which must carry soft labels.
LossTerms distill_loss(const StudentEnsemble& ensemble, const LabeledSet& data,
                       std::span<const std::size_t> batch, const DistillConfig& cfg);

// Gradient of distill_loss with respect to each member's flat parameters.
std::vector<Vec> distill_loss_gradient(const StudentEnsemble& ensemble, const LabeledSet& data,
                                       std::span<const std::size_t> batch, const DistillConfig& cfg);

// Gradient of the lambda-free coherence term alone (mean over batch).
std::vector<Vec> coherence_gradient(const StudentEnsemble& ensemble, const LabeledSet& data,
                                    std::span<const std::size_t> batch, CoherenceGradient method);

struct DistillResult {
    StudentEnsemble ensemble;
    std::vector<double> epoch_loss;
};

// Builds the soft-label set once, then runs plain gradient descent on the shared
// loss for cfg.epochs passes over shuffled minibatches.
DistillResult differential_distill(StudentEnsemble ensemble, const DenseNet& teacher, const LabeledSet& data,
                                   const DistillConfig& cfg);

// Mean pairwise CS of member input gradients (taken against hard labels) over a set.
double mean_pairwise_cs(const StudentEnsemble& ensemble, const LabeledSet& data);

}  // namespace eimtd
