#include "eimtd/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eimtd/error.hpp"
#include "eimtd/io.hpp"
#include "eimtd/rng.hpp"

namespace eimtd {

std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::fgsm: return "fgsm";
        case AttackKind::ifgsm: return "ifgsm";
        case AttackKind::pgd: return "pgd";
        case AttackKind::mifgsm: return "mifgsm";
        case AttackKind::mdi2fgsm: return "mdi2fgsm";
    }
    return "unknown";
}

AttackKind attack_kind_from_string(const std::string& s) {
    for (AttackKind k : {AttackKind::fgsm, AttackKind::ifgsm, AttackKind::pgd, AttackKind::mifgsm,
                         AttackKind::mdi2fgsm})
        if (to_string(k) == s) return k;
    throw ValidationError("unknown attack kind '" + s + "'");
}

void AttackConfig::validate() const {
    require(std::isfinite(epsilon) && epsilon >= 0.0, "epsilon must be non-negative");
    if (kind != AttackKind::fgsm) {
        require(step_size > 0.0, "step_size must be positive for iterative attacks");
        require(iterations >= 1, "iterative attacks need at least one iteration");
    }
    require(transform_prob >= 0.0 && transform_prob <= 1.0, "transform probability must lie in [0,1]");
    require(decay_mu >= 0.0, "momentum decay must be non-negative");
}

AttackConfig AttackConfig::defaults(AttackKind kind, double epsilon, std::uint64_t seed) {
    AttackConfig cfg;
    cfg.kind = kind;
    cfg.epsilon = epsilon;
    cfg.seed = seed;
    cfg.decay_mu = 0.5;
    cfg.transform_prob = 0.5;
    switch (kind) {
        case AttackKind::fgsm:
            cfg.step_size = epsilon;
            cfg.iterations = 1;
            cfg.random_init = false;
            break;
        case AttackKind::ifgsm:
            cfg.step_size = epsilon / 5.0;
            cfg.iterations = 10;
            cfg.random_init = false;
            break;
        case AttackKind::pgd:
            cfg.step_size = epsilon / 5.0;
            cfg.iterations = 10;
            cfg.random_init = true;
            break;
        case AttackKind::mifgsm:
        case AttackKind::mdi2fgsm:
            cfg.step_size = epsilon / 10.0;
            cfg.iterations = 10;
            cfg.random_init = true;
            break;
    }
    if (cfg.step_size <= 0.0) cfg.step_size = 1e-3;
    return cfg;
}

namespace {

double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

void check_point(const DenseNet& net, std::span<const double> x, std::size_t y) {
    require(x.size() == net.input_dim(), "attack input has length " + std::to_string(x.size()) +
                                             ", network expects " + std::to_string(net.input_dim()));
    require(y < net.num_classes(), "attack label out of range");
}

Vec input_gradient(const DenseNet& net, std::span<const double> x, std::size_t y) {
    const Vec target = one_hot(y, net.num_classes());
    return backprop(net, x, target, 1.0).input;
}

// Projects onto the epsilon ball around `clean` and then onto the feature box.
void project(Vec& x, std::span<const double> clean, double eps, FeatureBounds b) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = std::clamp(x[i], clean[i] - eps, clean[i] + eps);
        x[i] = std::clamp(x[i], b.lo, b.hi);
    }
}

Vec run_iterative(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
                  FeatureBounds bounds, bool momentum, bool diversity) {
    check_point(net, x, y);
    cfg.validate();
    Rng rng(cfg.seed);
    Vec cur(x.begin(), x.end());
    if (cfg.random_init) {
        for (double& v : cur) v += rng.uniform(-cfg.epsilon, cfg.epsilon);
        project(cur, x, cfg.epsilon, bounds);
    }
    Vec velocity(x.size(), 0.0);
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Vec g;
        if (diversity && rng.uniform01() < cfg.transform_prob) {
            const InputTransform t = draw_input_transform(x.size(), rng.next_u64());
            g = t.pull_back(input_gradient(net, t.apply(cur), y));
        } else {
            g = input_gradient(net, cur, y);
        }
        if (momentum) {
            double l1 = 0.0;
            for (double v : g) l1 += std::abs(v);
            for (std::size_t i = 0; i < g.size(); ++i)
                velocity[i] = cfg.decay_mu * velocity[i] + (l1 > 0.0 ? g[i] / l1 : 0.0);
            g = velocity;
        }
        for (std::size_t i = 0; i < cur.size(); ++i) cur[i] += cfg.step_size * sign(g[i]);
        project(cur, x, cfg.epsilon, bounds);
    }
    return cur;
}

}  // namespace

Vec fgsm(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
         FeatureBounds bounds) {
    check_point(net, x, y);
    require(cfg.epsilon >= 0.0, "epsilon must be non-negative");
    const Vec g = input_gradient(net, x, y);
    Vec out(x.begin(), x.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::clamp(out[i] + cfg.epsilon * sign(g[i]), bounds.lo, bounds.hi);
    return out;
}

Vec iterated_attack(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
                    FeatureBounds bounds) {
    return run_iterative(net, x, y, cfg, bounds, cfg.kind == AttackKind::mifgsm, false);
}

Vec mdi2_fgsm(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
              FeatureBounds bounds) {
    return run_iterative(net, x, y, cfg, bounds, true, true);
}

Vec attack(const DenseNet& net, std::span<const double> x, std::size_t y, const AttackConfig& cfg,
           FeatureBounds bounds) {
    switch (cfg.kind) {
        case AttackKind::fgsm: return fgsm(net, x, y, cfg, bounds);
        case AttackKind::mdi2fgsm: return mdi2_fgsm(net, x, y, cfg, bounds);
        default: return iterated_attack(net, x, y, cfg, bounds);
    }
}

AdvBatch craft_batch(const DenseNet& net, const LabeledSet& data, const AttackConfig& cfg,
                     const std::string& source_id) {
    require(!data.empty(), "cannot craft adversarial examples from an empty set");
    AdvBatch batch;
    batch.attack = to_string(cfg.kind);
    batch.epsilon = cfg.epsilon;
    batch.items.reserve(data.size());
    for (std::size_t n = 0; n < data.size(); ++n) {
        const Example& e = data.examples[n];
        AttackConfig per = cfg;
        per.seed = derive_seed(cfg.seed, n);
        batch.items.push_back({e.x, attack(net, e.x, e.y, per, data.bounds), e.y, source_id});
    }
    return batch;
}

Vec InputTransform::apply(std::span<const double> x) const {
    Vec out(src.size(), 0.0);
    for (std::size_t i = 0; i < src.size(); ++i)
        if (src[i] >= 0) out[i] = x[static_cast<std::size_t>(src[i])];
    return out;
}

Vec InputTransform::pull_back(std::span<const double> g) const {
    Vec out(src.size(), 0.0);
    for (std::size_t i = 0; i < src.size(); ++i)
        if (src[i] >= 0) out[static_cast<std::size_t>(src[i])] += g[i];
    return out;
}

InputTransform draw_input_transform(std::size_t dim, std::uint64_t draw) {
    InputTransform t;
    t.src.resize(dim);
    std::size_t w = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
    if (w >= 2 && w * w == dim) {
        // Pad one zero row/column on `side`, crop the window at the opposite edge.
        const int side = static_cast<int>(draw % 4);
        const long dr = side == 0 ? 1 : side == 1 ? -1 : 0;  // top pad moves content down
        const long dc = side == 2 ? 1 : side == 3 ? -1 : 0;
        const long lw = static_cast<long>(w);
        for (long r = 0; r < lw; ++r) {
            for (long c = 0; c < lw; ++c) {
                const long sr = r - dr;
                const long sc = c - dc;
                const bool inside = sr >= 0 && sr < lw && sc >= 0 && sc < lw;
                t.src[static_cast<std::size_t>(r * lw + c)] = inside ? sr * lw + sc : -1;
            }
        }
    } else {
        const long n = static_cast<long>(dim);
        const long shift = (draw % 2 == 0) ? 1 : n - 1;
        for (long i = 0; i < n; ++i) t.src[static_cast<std::size_t>(i)] = (i + shift) % n;
    }
    return t;
}

void fit(DenseNet& net, const LabeledSet& data, std::size_t epochs, double lr, std::uint64_t seed) {
    require(!data.empty(), "cannot train on an empty set");
    require(lr > 0.0, "learning rate must be positive");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        Rng rng(derive_seed(seed, epoch));
        rng.shuffle(order);
        for (std::size_t n : order) {
            const Example& e = data.examples[n];
            const FullGradient g = backprop(net, e.x, one_hot(e.y, net.num_classes()), 1.0);
            net.apply_step(g.params, lr);
        }
    }
}

DenseNet adversarial_train(DenseNet net, const LabeledSet& data, const AttackConfig& cfg, std::size_t epochs,
                           double lr) {
    require(!data.empty(), "cannot train on an empty set");
    require(lr > 0.0, "learning rate must be positive");
    cfg.validate();
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, epoch, 0xadull));
        rng.shuffle(order);
        for (std::size_t n : order) {
            const Example& e = data.examples[n];
            AttackConfig per = cfg;
            per.seed = derive_seed(cfg.seed, epoch, n);
            const Vec x_adv = attack(net, e.x, e.y, per, data.bounds);
            const Vec target = one_hot(e.y, net.num_classes());
            FullGradient clean = backprop(net, e.x, target, 1.0, 0.5);
            const FullGradient adv = backprop(net, x_adv, target, 1.0, 0.5);
            for (std::size_t i = 0; i < clean.params.size(); ++i) clean.params[i] += adv.params[i];
            net.apply_step(clean.params, lr);
        }
    }
    return net;
}

double evaluate_asr(const DenseNet& net, const AdvBatch& batch) {
    require(!batch.items.empty(), "attack success rate of an empty batch");
    std::size_t fooled = 0;
    for (const AdvExample& e : batch.items)
        if (predict(net, e.x_adv) != e.y) ++fooled;
    return static_cast<double>(fooled) / static_cast<double>(batch.items.size());
}

std::string to_jsonl(const AdvBatch& batch) {
    std::string out;
    for (const AdvExample& e : batch.items) {
        const json rec = {{"x", e.x},           {"x_adv", e.x_adv},         {"y", e.y},
                          {"source", e.source}, {"attack", batch.attack}, {"epsilon", batch.epsilon}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

AdvBatch from_jsonl(const std::string& text) {
    AdvBatch batch;
    std::istringstream is(text);
    std::string line;
    std::size_t row = 0;
    while (std::getline(is, line)) {
        ++row;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            AdvExample e;
            e.x = rec.at("x").get<Vec>();
            e.x_adv = rec.at("x_adv").get<Vec>();
            e.y = rec.at("y").get<std::size_t>();
            e.source = rec.at("source").get<std::string>();
            require(e.x.size() == e.x_adv.size(), "record " + std::to_string(row) + ": x/x_adv length mismatch");
            batch.attack = rec.at("attack").get<std::string>();
            batch.epsilon = rec.at("epsilon").get<double>();
            batch.items.push_back(std::move(e));
        } catch (const json::exception& ex) {
            throw ValidationError("adversarial batch record " + std::to_string(row) + ": " + ex.what());
        }
    }
    return batch;
}

}  // namespace eimtd
