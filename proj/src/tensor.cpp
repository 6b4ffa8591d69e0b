#include "eimtd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eimtd/error.hpp"
#include "eimtd/rng.hpp"

namespace eimtd {

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    throw ValidationError("unknown activation '" + s + "'");
}

DenseNet::DenseNet(std::size_t input_dim, std::size_t num_classes, std::vector<Layer> layers)
    : input_dim_(input_dim), num_classes_(num_classes), layers_(std::move(layers)) {
    validate();
}

DenseNet DenseNet::random(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t num_classes, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Layer> layers;
    std::size_t in = input_dim;
    for (std::size_t i = 0; i <= hidden.size(); ++i) {
        const bool last = i == hidden.size();
        Layer layer;
        layer.in = in;
        layer.out = last ? num_classes : hidden[i];
        layer.activation = last ? Activation::identity : Activation::relu;
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        layer.weights.resize(layer.in * layer.out);
        for (double& w : layer.weights) w = rng.uniform(-limit, limit);
        layer.bias.assign(layer.out, 0.0);
        in = layer.out;
        layers.push_back(std::move(layer));
    }
    return DenseNet(input_dim, num_classes, std::move(layers));
}

void DenseNet::validate() const {
    require(input_dim_ > 0, "input_dim must be positive");
    require(num_classes_ > 0, "num_classes must be positive");
    require(!layers_.empty(), "network needs at least one layer");
    std::size_t in = input_dim_;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Layer& l = layers_[k];
        const std::string where = "layer " + std::to_string(k);
        require(l.in == in, where + ": input width " + std::to_string(l.in) + " does not chain (expected " +
                                std::to_string(in) + ")");
        require(l.out > 0, where + ": zero output width");
        require(l.weights.size() == l.in * l.out, where + ": weight matrix size mismatch");
        require(l.bias.size() == l.out, where + ": bias size mismatch");
        for (double v : l.weights) require(std::isfinite(v), where + ": non-finite weight");
        for (double v : l.bias) require(std::isfinite(v), where + ": non-finite bias");
        in = l.out;
    }
    require(in == num_classes_, "final layer width must equal num_classes");
}

std::size_t DenseNet::param_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.param_count();
    return n;
}

Vec DenseNet::params() const {
    Vec flat;
    flat.reserve(param_count());
    for (const Layer& l : layers_) {
        flat.insert(flat.end(), l.weights.begin(), l.weights.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void DenseNet::set_params(std::span<const double> flat) {
    require(flat.size() == param_count(), "parameter vector length mismatch");
    std::size_t pos = 0;
    for (Layer& l : layers_) {
        std::copy_n(flat.begin() + pos, l.weights.size(), l.weights.begin());
        pos += l.weights.size();
        std::copy_n(flat.begin() + pos, l.bias.size(), l.bias.begin());
        pos += l.bias.size();
    }
}

void DenseNet::apply_step(std::span<const double> g, double lr) {
    require(g.size() == param_count(), "gradient length mismatch");
    std::size_t pos = 0;
    for (Layer& l : layers_) {
        for (double& w : l.weights) w -= lr * g[pos++];
        for (double& b : l.bias) b -= lr * g[pos++];
    }
}

bool DenseNet::operator==(const DenseNet& other) const {
    if (input_dim_ != other.input_dim_ || num_classes_ != other.num_classes_) return false;
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const Layer& a = layers_[k];
        const Layer& b = other.layers_[k];
        if (a.in != b.in || a.out != b.out || a.activation != b.activation) return false;
        if (a.weights != b.weights || a.bias != b.bias) return false;
    }
    return true;
}

namespace {

void check_input(const DenseNet& net, std::span<const double> x) {
    require(x.size() == net.input_dim(), "input has length " + std::to_string(x.size()) +
                                             ", network expects " + std::to_string(net.input_dim()));
}

double activate(Activation a, double u) { return a == Activation::relu ? (u > 0.0 ? u : 0.0) : u; }

double activation_slope(Activation a, double u) {
    return a == Activation::relu ? (u > 0.0 ? 1.0 : 0.0) : 1.0;
}

// Pre-activations and activations of every layer; acts[0] is the input.
struct Trace {
    std::vector<Vec> pre;
    std::vector<Vec> acts;
};

Trace run_forward(const DenseNet& net, std::span<const double> x) {
    check_input(net, x);
    Trace t;
    t.acts.emplace_back(x.begin(), x.end());
    for (const Layer& l : net.layers()) {
        const Vec& a = t.acts.back();
        Vec u(l.out);
        for (std::size_t i = 0; i < l.out; ++i) {
            double s = l.bias[i];
            const double* row = &l.weights[i * l.in];
            for (std::size_t j = 0; j < l.in; ++j) s += row[j] * a[j];
            u[i] = s;
        }
        Vec out(l.out);
        for (std::size_t i = 0; i < l.out; ++i) out[i] = activate(l.activation, u[i]);
        t.pre.push_back(std::move(u));
        t.acts.push_back(std::move(out));
    }
    return t;
}

void check_target(const DenseNet& net, std::span<const double> target) {
    require(target.size() == net.num_classes(), "target has length " + std::to_string(target.size()) +
                                                    ", network has " + std::to_string(net.num_classes()) +
                                                    " classes");
}

double sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

Vec forward(const DenseNet& net, std::span<const double> x) { return run_forward(net, x).acts.back(); }

Vec log_softmax_t(std::span<const double> z, double temperature) {
    require(temperature > 0.0, "temperature must be positive");
    require(!z.empty(), "softmax of an empty vector");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : z) m = std::max(m, v / temperature);
    double s = 0.0;
    for (double v : z) s += std::exp(v / temperature - m);
    const double log_norm = m + std::log(s);
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i] / temperature - log_norm;
    return out;
}

Vec softmax_t(std::span<const double> z, double temperature) {
    require(temperature > 0.0, "temperature must be positive");
    require(!z.empty(), "softmax of an empty vector");
    double m = -std::numeric_limits<double>::infinity();
    for (double v : z) m = std::max(m, v / temperature);
    Vec out(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        out[i] = std::exp(z[i] / temperature - m);
        s += out[i];
    }
    for (double& v : out) v /= s;
    return out;
}

double cross_entropy(std::span<const double> probs, std::span<const double> target) {
    require(probs.size() == target.size(), "cross_entropy: length mismatch");
    double j = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (target[i] != 0.0) j -= target[i] * std::log(probs[i] + kLogFloor);
    }
    return j;
}

Vec one_hot(std::size_t label, std::size_t num_classes) {
    require(label < num_classes, "label " + std::to_string(label) + " out of range");
    Vec v(num_classes, 0.0);
    v[label] = 1.0;
    return v;
}

double loss(const DenseNet& net, std::span<const double> x, std::span<const double> target,
            double temperature) {
    check_target(net, target);
    const Vec z = forward(net, x);
    const Vec logp = log_softmax_t(z, temperature);
    double j = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) j -= target[i] * logp[i];
    return j;
}

FullGradient backprop(const DenseNet& net, std::span<const double> x, std::span<const double> target,
                      double temperature, double scale) {
    check_target(net, target);
    const Trace t = run_forward(net, x);
    const Vec& z = t.acts.back();
    const Vec logp = log_softmax_t(z, temperature);
    const double mass = sum(target);

    FullGradient out;
    for (std::size_t i = 0; i < z.size(); ++i) out.loss -= scale * target[i] * logp[i];

    const auto& layers = net.layers();
    const std::size_t n = layers.size();

    // dJ/dz for the fused softmax cross-entropy.
    Vec upstream(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        upstream[i] = scale * (std::exp(logp[i]) * mass - target[i]) / temperature;

    std::vector<Vec> dW(n), db(n);
    for (std::size_t k = n; k-- > 0;) {
        const Layer& l = layers[k];
        Vec du(l.out);
        for (std::size_t i = 0; i < l.out; ++i) du[i] = upstream[i] * activation_slope(l.activation, t.pre[k][i]);
        const Vec& a = t.acts[k];
        dW[k].resize(l.weights.size());
        for (std::size_t i = 0; i < l.out; ++i)
            for (std::size_t j = 0; j < l.in; ++j) dW[k][i * l.in + j] = du[i] * a[j];
        db[k] = du;
        Vec down(l.in, 0.0);
        for (std::size_t i = 0; i < l.out; ++i) {
            const double* row = &l.weights[i * l.in];
            for (std::size_t j = 0; j < l.in; ++j) down[j] += row[j] * du[i];
        }
        upstream = std::move(down);
    }
    out.input = std::move(upstream);
    out.params.reserve(net.param_count());
    for (std::size_t k = 0; k < n; ++k) {
        out.params.insert(out.params.end(), dW[k].begin(), dW[k].end());
        out.params.insert(out.params.end(), db[k].begin(), db[k].end());
    }
    return out;
}

Gradient grad(const DenseNet& net, std::span<const double> x, std::span<const double> target,
              double temperature, GradTarget wrt) {
    FullGradient full = backprop(net, x, target, temperature);
    Gradient g;
    g.with_respect_to = wrt;
    g.values = wrt == GradTarget::input ? std::move(full.input) : std::move(full.params);
    return g;
}

Vec input_grad_param_vjp(const DenseNet& net, std::span<const double> x, std::span<const double> target,
                         double temperature, std::span<const double> input_cotangent) {
    check_target(net, target);
    require(input_cotangent.size() == net.input_dim(), "input cotangent length mismatch");
    const Trace t = run_forward(net, x);
    const auto& layers = net.layers();
    const std::size_t n = layers.size();
    const Vec probs = softmax_t(t.acts.back(), temperature);
    const double mass = sum(target);

    // First-order backward pass: e[k] is dJ/d acts[k], du[k] is dJ/d pre[k].
    std::vector<Vec> e(n + 1), du(n);
    e[n].resize(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) e[n][i] = (probs[i] * mass - target[i]) / temperature;
    for (std::size_t k = n; k-- > 0;) {
        const Layer& l = layers[k];
        du[k].resize(l.out);
        for (std::size_t i = 0; i < l.out; ++i) du[k][i] = e[k + 1][i] * activation_slope(l.activation, t.pre[k][i]);
        e[k].assign(l.in, 0.0);
        for (std::size_t i = 0; i < l.out; ++i)
            for (std::size_t j = 0; j < l.in; ++j) e[k][j] += l.w(i, j) * du[k][i];
    }

    std::vector<Vec> gW(n), gb(n);
    for (std::size_t k = 0; k < n; ++k) {
        gW[k].assign(layers[k].weights.size(), 0.0);
        gb[k].assign(layers[k].out, 0.0);
    }

    // Reverse of the backward pass, walking from the input toward the logits.
    Vec e_bar(input_cotangent.begin(), input_cotangent.end());
    for (std::size_t k = 0; k < n; ++k) {
        const Layer& l = layers[k];
        Vec du_bar(l.out, 0.0);
        for (std::size_t i = 0; i < l.out; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < l.in; ++j) {
                gW[k][i * l.in + j] += du[k][i] * e_bar[j];
                s += l.w(i, j) * e_bar[j];
            }
            du_bar[i] = s;
        }
        Vec next(l.out);
        for (std::size_t i = 0; i < l.out; ++i) next[i] = du_bar[i] * activation_slope(l.activation, t.pre[k][i]);
        e_bar = std::move(next);
    }

    // e[n] = (mass * softmax(z/T) - target) / T depends on the logits z.
    double dot = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) dot += probs[i] * e_bar[i];
    Vec upstream(probs.size());
    const double factor = mass / (temperature * temperature);
    for (std::size_t i = 0; i < probs.size(); ++i) upstream[i] = factor * probs[i] * (e_bar[i] - dot);

    // Reverse of the forward pass.
    for (std::size_t k = n; k-- > 0;) {
        const Layer& l = layers[k];
        Vec u_bar(l.out);
        for (std::size_t i = 0; i < l.out; ++i) u_bar[i] = upstream[i] * activation_slope(l.activation, t.pre[k][i]);
        const Vec& a = t.acts[k];
        Vec down(l.in, 0.0);
        for (std::size_t i = 0; i < l.out; ++i) {
            gb[k][i] += u_bar[i];
            for (std::size_t j = 0; j < l.in; ++j) {
                gW[k][i * l.in + j] += u_bar[i] * a[j];
                down[j] += l.w(i, j) * u_bar[i];
            }
        }
        upstream = std::move(down);
    }

    Vec flat;
    flat.reserve(net.param_count());
    for (std::size_t k = 0; k < n; ++k) {
        flat.insert(flat.end(), gW[k].begin(), gW[k].end());
        flat.insert(flat.end(), gb[k].begin(), gb[k].end());
    }
    return flat;
}

std::size_t argmax(std::span<const double> v) {
    require(!v.empty(), "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

std::size_t predict(const DenseNet& net, std::span<const double> x) { return argmax(forward(net, x)); }

std::size_t predict(const DenseNet& net, std::span<const double> x, double temperature) {
    return argmax(softmax_t(forward(net, x), temperature));
}

}  // namespace eimtd
