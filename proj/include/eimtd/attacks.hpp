#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "eimtd/dataset.hpp"
#include "eimtd/tensor.hpp"

namespace eimtd {

enum class AttackKind { fgsm, ifgsm, pgd, mifgsm, mdi2fgsm };

std::string to_string(AttackKind k);
AttackKind attack_kind_from_string(const std::string& s);

struct AttackConfig {
    AttackKind kind = AttackKind::pgd;
    double epsilon = 0.05;
    double step_size = 0.01;
    std::size_t iterations = 10;
    double decay_mu = 0.5;
    double transform_prob = 0.5;
    bool random_init = true;
    std::uint64_t seed = 0;

    void validate() const;

    // Step ratios used in the experiments: PGD eps/5, momentum kinds eps/10.
    static AttackConfig defaults(AttackKind kind, double epsilon = 0.05, std::uint64_t seed = 0);
};

struct AdvExample {
    Vec x;
    Vec x_adv;
    std::size_t y = 0;
    std::string source;
};

struct AdvBatch {
    std::vector<AdvExample> items;
    std::string attack;
    double epsilon = 0.0;

    std::size_t size() const { return items.size(); }
};

Vec fgsm(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
         FeatureBounds bounds = {});

// ifgsm, pgd and mifgsm.
Vec iterated_attack(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
                    FeatureBounds bounds = {});

Vec mdi2_fgsm(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
              FeatureBounds bounds = {});

// Dispatches on cfg.kind.
Vec attack(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
           FeatureBounds bounds = {});

// Crafts one adversarial example per set entry. Example n uses the substream
// derive_seed(cfg.seed, n), so results do not depend on evaluation order.
AdvBatch craft_batch(const DenseNet& net, const LabeledSet& data, const AttackConfig& cfg,
                     const std::string& source_id);

// Index map describing one draw of the input-diversity transform: out[i] = in[src[i]],
// or 0 where src[i] < 0.
struct InputTransform {
    std::vector<long> src;

    Vec apply(std::span<const double> x) const;
    // Pulls a gradient taken at apply(x) back to x.
    Vec pull_back(std::span<const double> g) const;
};

// Random pad-and-crop shift on a w x w grid when d = w*w with w >= 2, otherwise a
// random circular shift by one position.
InputTransform draw_input_transform(std::size_t dim, std::uint64_t draw);

// Plain SGD on the per-example cross-entropy, examples shuffled each epoch.
void fit(DenseNet& net, const LabeledSet& data, std::size_t epochs, double lr, std::uint64_t seed);

// Each step descends 0.5 * J(x, y) + 0.5 * J(x_adv, y) with x_adv crafted on the
// current parameters.
DenseNet adversarial_train(DenseNet net, const LabeledSet& data, const AttackConfig& cfg, std::size_t epochs,
                           double lr);

// Fraction of adversarial inputs the net misclassifies.
double evaluate_asr(const DenseNet& net, const AdvBatch& batch);

std::string to_jsonl(const AdvBatch& batch);
AdvBatch from_jsonl(const std::string& text);

}  // namespace eimtd
