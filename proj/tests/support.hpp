#pragma once

// Independent reference computations shared by the unit tests. Nothing here
// calls into the library's forward or backward code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "eimtd/rng.hpp"
#include "eimtd/tensor.hpp"

namespace oracle {

using eimtd::Vec;

// Plain nested loops over the layer list.
inline Vec logits(const eimtd::DenseNet& net, const Vec& x) {
    Vec a = x;
    for (const eimtd::Layer& l : net.layers()) {
        Vec z(l.out, 0.0);
        for (std::size_t r = 0; r < l.out; ++r) {
            double s = l.bias[r];
            for (std::size_t c = 0; c < l.in; ++c) s += l.weights[r * l.in + c] * a[c];
            z[r] = l.activation == eimtd::Activation::relu ? (s > 0.0 ? s : 0.0) : s;
        }
        a = z;
    }
    return a;
}

// Smallest |pre-activation| over all relu units, i.e. the distance to the nearest kink.
inline double relu_margin(const eimtd::DenseNet& net, const Vec& x) {
    double margin = 1e300;
    Vec a = x;
    for (const eimtd::Layer& l : net.layers()) {
        Vec z(l.out, 0.0);
        for (std::size_t r = 0; r < l.out; ++r) {
            double s = l.bias[r];
            for (std::size_t c = 0; c < l.in; ++c) s += l.weights[r * l.in + c] * a[c];
            if (l.activation == eimtd::Activation::relu) {
                margin = std::min(margin, std::abs(s));
                s = s > 0.0 ? s : 0.0;
            }
            z[r] = s;
        }
        a = z;
    }
    return margin;
}

inline double loss(const eimtd::DenseNet& net, const Vec& x, const Vec& target, double t) {
    const Vec z = logits(net, x);
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double s = 0.0;
    for (double v : z) s += std::exp((v - m) / t);
    double j = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) j -= target[i] * std::log(std::exp((z[i] - m) / t) / s + 1e-12);
    return j;
}

inline Vec central_difference(const std::function<double(const Vec&)>& f, Vec x, double h) {
    Vec g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double relative_error(const Vec& a, const Vec& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
}

// Random net with random (nonzero) biases so relu units sit away from kinks.
inline eimtd::DenseNet random_net(std::uint64_t seed, std::size_t d, const std::vector<std::size_t>& hidden,
                                  std::size_t classes) {
    eimtd::DenseNet net = eimtd::DenseNet::random(d, hidden, classes, seed);
    eimtd::Rng rng(seed ^ 0xabcdefULL);
    for (eimtd::Layer& l : net.layers())
        for (double& b : l.bias) b = rng.uniform(-0.3, 0.3);
    return net;
}

inline Vec random_point(eimtd::Rng& rng, std::size_t d) {
    Vec x(d);
    for (double& v : x) v = rng.uniform01();
    return x;
}

inline Vec random_simplex(eimtd::Rng& rng, std::size_t n) {
    Vec p(n);
    double s = 0.0;
    for (double& v : p) s += (v = rng.uniform(0.05, 1.0));
    for (double& v : p) v /= s;
    return p;
}

}  // namespace oracle
