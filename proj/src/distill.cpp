#include "eimtd/distill.hpp"

#include <algorithm>
#include <cmath>

#include "eimtd/error.hpp"
#include "eimtd/rng.hpp"

namespace eimtd {

void DistillConfig::validate() const {
    require(temperature > 0.0, "distillation temperature must be positive");
    require(lambda >= 0.0, "lambda must be non-negative");
    require(beta == 1.0, "only beta = 1 (soft labels only) is supported");
    require(members >= 2, "differential distillation needs at least two students");
    require(learning_rates.size() == members, "need one learning rate per student");
    for (double eta : learning_rates) require(eta > 0.0, "learning rates must be positive");
}

void StudentEnsemble::validate() const {
    require(members.size() >= 2, "an ensemble needs at least two members");
    require(ids.empty() || ids.size() == members.size(), "member ids not parallel to members");
    for (const DenseNet& m : members) {
        m.validate();
        require(m.input_dim() == members.front().input_dim(), "members disagree on input dimension");
        require(m.num_classes() == members.front().num_classes(), "members disagree on class count");
    }
}

LabeledSet soft_labels(const DenseNet& teacher, const LabeledSet& data, double temperature) {
    require(temperature > 0.0, "temperature must be positive");
    LabeledSet out = data;
    std::vector<Vec> labels;
    labels.reserve(data.size());
    for (const Example& e : data.examples) labels.push_back(softmax_t(forward(teacher, e.x), temperature));
    out.soft_labels = std::move(labels);
    return out;
}

namespace {

constexpr double kCsFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// d CS(a, b) / d a
Vec cs_grad_first(std::span<const double> a, std::span<const double> b) {
    const double na = norm(a);
    const double nb = norm(b);
    const double denom = na * nb + kCsFloor;
    const double ab = dot(a, b);
    Vec out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double v = b[i] / denom;
        if (na > 0.0) v -= ab * nb * a[i] / (na * denom * denom);
        out[i] = v;
    }
    return out;
}

// d cs_coherence / d g_k for every member k.
std::vector<Vec> coherence_input_cotangents(const std::vector<Vec>& grads) {
    const std::size_t k = grads.size();
    std::vector<double> cs;
    double peak = -1e300;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
            cs.push_back(pairwise_cs(grads[a], grads[b]));
            peak = std::max(peak, cs.back());
        }
    double total = 0.0;
    for (double c : cs) total += std::exp(c - peak);
    std::vector<Vec> out(k, Vec(grads.front().size(), 0.0));
    std::size_t p = 0;
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b, ++p) {
            const double w = std::exp(cs[p] - peak) / total;
            const Vec ga = cs_grad_first(grads[a], grads[b]);
            const Vec gb = cs_grad_first(grads[b], grads[a]);
            for (std::size_t i = 0; i < ga.size(); ++i) {
                out[a][i] += w * ga[i];
                out[b][i] += w * gb[i];
            }
        }
    return out;
}

const Vec& soft_label_of(const LabeledSet& data, std::size_t n) {
    require(data.soft_labels.has_value(), "distillation requires soft labels");
    require(n < data.soft_labels->size(), "batch index out of range");
    return (*data.soft_labels)[n];
}

double mean_coherence(const StudentEnsemble& ensemble, const LabeledSet& data, std::span<const std::size_t> batch) {
    double total = 0.0;
    for (std::size_t n : batch) {
        const Vec& soft = soft_label_of(data, n);
        total += cs_coherence(member_input_gradients(ensemble, data.examples[n].x, soft));
    }
    return total / static_cast<double>(batch.size());
}

}  // namespace

double pairwise_cs(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "cosine similarity of gradients with different lengths");
    return dot(a, b) / (norm(a) * norm(b) + kCsFloor);
}

double pairwise_cs(const Gradient& a, const Gradient& b) {
    require(a.with_respect_to == GradTarget::input && b.with_respect_to == GradTarget::input,
            "cosine similarity is defined on input gradients");
    return pairwise_cs(a.values, b.values);
}

double cs_coherence(const std::vector<Vec>& grads) {
    require(grads.size() >= 2, "cs_coherence needs at least two gradients");
    std::vector<double> cs;
    for (std::size_t a = 0; a < grads.size(); ++a)
        for (std::size_t b = a + 1; b < grads.size(); ++b) cs.push_back(pairwise_cs(grads[a], grads[b]));
    if (cs.size() == 1) return cs.front();
    const double peak = *std::max_element(cs.begin(), cs.end());
    double total = 0.0;
    for (double c : cs) total += std::exp(c - peak);
    return peak + std::log(total);
}

std::vector<Vec> member_input_gradients(const StudentEnsemble& ensemble, std::span<const double> x,
                                        std::span<const double> soft_label) {
    std::vector<Vec> grads;
    grads.reserve(ensemble.size());
    for (const DenseNet& m : ensemble.members) grads.push_back(backprop(m, x, soft_label, 1.0).input);
    return grads;
}

LossTerms distill_loss(const StudentEnsemble& ensemble, const LabeledSet& data,
                       std::span<const std::size_t> batch, const DistillConfig& cfg) {
    require(!batch.empty(), "empty distillation batch");
    require(cfg.temperature > 0.0, "distillation temperature must be positive");
    const double t2 = cfg.temperature * cfg.temperature;
    const double k = static_cast<double>(ensemble.size());
    LossTerms out;
    for (std::size_t n : batch) {
        const Vec& soft = soft_label_of(data, n);
        double sum = 0.0;
        for (const DenseNet& m : ensemble.members) sum += t2 * loss(m, data.examples[n].x, soft, cfg.temperature);
        out.distillation += sum / k;
    }
    out.distillation /= static_cast<double>(batch.size());
    if (cfg.lambda != 0.0) out.coherence = mean_coherence(ensemble, data, batch);
    out.total = out.distillation + cfg.lambda * out.coherence;
    return out;
}

std::vector<Vec> coherence_gradient(const StudentEnsemble& ensemble, const LabeledSet& data,
                                    std::span<const std::size_t> batch, CoherenceGradient method) {
    require(!batch.empty(), "empty distillation batch");
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<Vec> out;
    for (const DenseNet& m : ensemble.members) out.emplace_back(m.param_count(), 0.0);

    if (method == CoherenceGradient::exact) {
        for (std::size_t n : batch) {
            const Vec& x = data.examples[n].x;
            const Vec& soft = soft_label_of(data, n);
            const std::vector<Vec> grads = member_input_gradients(ensemble, x, soft);
            const std::vector<Vec> cot = coherence_input_cotangents(grads);
            for (std::size_t k = 0; k < ensemble.size(); ++k) {
                const Vec g = input_grad_param_vjp(ensemble.members[k], x, soft, 1.0, cot[k]);
                for (std::size_t i = 0; i < g.size(); ++i) out[k][i] += inv_b * g[i];
            }
        }
        return out;
    }

    StudentEnsemble probe = ensemble;
    for (std::size_t k = 0; k < ensemble.size(); ++k) {
        Vec theta = ensemble.members[k].params();
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double h = 1e-3 * (1.0 + std::abs(theta[i]));
            const double saved = theta[i];
            theta[i] = saved + h;
            probe.members[k].set_params(theta);
            const double up = mean_coherence(probe, data, batch);
            theta[i] = saved - h;
            probe.members[k].set_params(theta);
            const double down = mean_coherence(probe, data, batch);
            theta[i] = saved;
            out[k][i] = (up - down) / (2.0 * h);
        }
        probe.members[k].set_params(theta);
    }
    return out;
}

std::vector<Vec> distill_loss_gradient(const StudentEnsemble& ensemble, const LabeledSet& data,
                                       std::span<const std::size_t> batch, const DistillConfig& cfg) {
    require(!batch.empty(), "empty distillation batch");
    const double scale = cfg.temperature * cfg.temperature / static_cast<double>(ensemble.size()) /
                         static_cast<double>(batch.size());
    std::vector<Vec> out;
    for (const DenseNet& m : ensemble.members) out.emplace_back(m.param_count(), 0.0);
    for (std::size_t n : batch) {
        const Vec& soft = soft_label_of(data, n);
        for (std::size_t k = 0; k < ensemble.size(); ++k) {
            const FullGradient g = backprop(ensemble.members[k], data.examples[n].x, soft, cfg.temperature, scale);
            for (std::size_t i = 0; i < g.params.size(); ++i) out[k][i] += g.params[i];
        }
    }
    if (cfg.lambda != 0.0) {
        const std::vector<Vec> reg = coherence_gradient(ensemble, data, batch, cfg.coherence_gradient);
        for (std::size_t k = 0; k < out.size(); ++k)
            for (std::size_t i = 0; i < out[k].size(); ++i) out[k][i] += cfg.lambda * reg[k][i];
    }
    return out;
}

DistillResult differential_distill(StudentEnsemble ensemble, const DenseNet& teacher, const LabeledSet& data,
                                   const DistillConfig& cfg) {
    cfg.validate();
    ensemble.validate();
    require(!data.empty(), "cannot distill on an empty set");
    require(ensemble.size() == cfg.members, "ensemble size does not match the configured student count");
    require(teacher.input_dim() == ensemble.members.front().input_dim() &&
                teacher.num_classes() == ensemble.members.front().num_classes(),
            "teacher and students disagree on shape");

    const LabeledSet soft = soft_labels(teacher, data, cfg.temperature);
    const std::size_t batch = cfg.batch_size == 0 ? data.size() : std::min(cfg.batch_size, data.size());

    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    DistillResult result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, epoch));
        rng.shuffle(order);
        double epoch_total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const std::span<const std::size_t> idx(order.data() + start, end - start);
            epoch_total += distill_loss(ensemble, soft, idx, cfg).total;
            ++batches;
            const std::vector<Vec> grads = distill_loss_gradient(ensemble, soft, idx, cfg);
            for (std::size_t k = 0; k < ensemble.size(); ++k)
                ensemble.members[k].apply_step(grads[k], cfg.learning_rates[k]);
        }
        result.epoch_loss.push_back(epoch_total / static_cast<double>(batches));
    }
    result.ensemble = std::move(ensemble);
    return result;
}

double mean_pairwise_cs(const StudentEnsemble& ensemble, const LabeledSet& data) {
    require(!data.empty(), "mean pairwise CS of an empty set");
    require(ensemble.size() >= 2, "mean pairwise CS needs two members");
    double total = 0.0;
    std::size_t count = 0;
    for (const Example& e : data.examples) {
        const Vec target = one_hot(e.y, ensemble.members.front().num_classes());
        const std::vector<Vec> grads = member_input_gradients(ensemble, e.x, target);
        for (std::size_t a = 0; a < grads.size(); ++a)
            for (std::size_t b = a + 1; b < grads.size(); ++b) {
                total += pairwise_cs(grads[a], grads[b]);
                ++count;
            }
    }
    return total / static_cast<double>(count);
}

}  // namespace eimtd
