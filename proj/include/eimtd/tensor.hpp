#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace eimtd {

using Vec = std::vector<double>;

// Floor inside every logarithm of a probability.
inline constexpr double kLogFloor = 1e-12;

enum class Activation { relu, identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

// One affine layer followed by an activation. Weights are row-major [out x in].
struct Layer {
    std::size_t in = 0;
    std::size_t out = 0;
    Vec weights;
    Vec bias;
    Activation activation = Activation::identity;

    double w(std::size_t row, std::size_t col) const { return weights[row * in + col]; }
    double& w(std::size_t row, std::size_t col) { return weights[row * in + col]; }
    std::size_t param_count() const { return weights.size() + bias.size(); }
};

// Feed-forward classifier producing logits over num_classes.
class DenseNet {
public:
    DenseNet() = default;
    DenseNet(std::size_t input_dim, std::size_t num_classes, std::vector<Layer> layers);

    // Glorot-uniform weights and zero biases from a seeded stream. `hidden` lists
    // hidden widths; hidden layers use relu and the output layer is identity.
    static DenseNet random(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                           std::size_t num_classes, std::uint64_t seed);

    std::size_t input_dim() const { return input_dim_; }
    std::size_t num_classes() const { return num_classes_; }
    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    std::size_t param_count() const;
    // Flat parameter order: for each layer, weights row-major then bias.
    Vec params() const;
    void set_params(std::span<const double> flat);
    // theta <- theta - lr * g over the flat parameter vector.
    void apply_step(std::span<const double> g, double lr);

    // Throws ValidationError if the layer chain or parameters are invalid.
    void validate() const;

    bool operator==(const DenseNet& other) const;

private:
    std::size_t input_dim_ = 0;
    std::size_t num_classes_ = 0;
    std::vector<Layer> layers_;
};

Vec forward(const DenseNet& net, std::span<const double> x);

// Temperature softmax with max subtraction. Throws on T <= 0.
Vec softmax_t(std::span<const double> z, double temperature);

// Log of softmax_t, computed in log space.
Vec log_softmax_t(std::span<const double> z, double temperature);

// -sum target_i * log(probs_i + kLogFloor).
double cross_entropy(std::span<const double> probs, std::span<const double> target);

Vec one_hot(std::size_t label, std::size_t num_classes);

// Fused J(softmax_t(forward(net, x), T), target) evaluated from logits.
double loss(const DenseNet& net, std::span<const double> x, std::span<const double> target,
            double temperature);

enum class GradTarget { input, params };

struct Gradient {
    GradTarget with_respect_to = GradTarget::input;
    Vec values;
};

// Exact reverse-mode gradient of the fused loss.
Gradient grad(const DenseNet& net, std::span<const double> x, std::span<const double> target,
              double temperature, GradTarget wrt);

// Both gradients from a single backward pass; `scale` multiplies the loss.
struct FullGradient {
    double loss = 0.0;
    Vec input;
    Vec params;
};
FullGradient backprop(const DenseNet& net, std::span<const double> x,
                      std::span<const double> target, double temperature, double scale = 1.0);

// Second-order helper: given a cotangent `input_cotangent` on g = grad_x J(x, target; theta)
// at temperature T, returns d<input_cotangent, g>/d theta (flat parameter order).
// Relu masks are held fixed, which is exact away from the measure-zero kinks.
Vec input_grad_param_vjp(const DenseNet& net, std::span<const double> x,
                         std::span<const double> target, double temperature,
                         std::span<const double> input_cotangent);

// argmax of logits, ties to the smallest index. Temperature does not change it.
std::size_t predict(const DenseNet& net, std::span<const double> x);
std::size_t predict(const DenseNet& net, std::span<const double> x, double temperature);
std::size_t argmax(std::span<const double> v);

}  // namespace eimtd
