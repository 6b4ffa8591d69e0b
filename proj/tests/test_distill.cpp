#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "eimtd/distill.hpp"
#include "eimtd/error.hpp"
#include "support.hpp"

using namespace eimtd;

namespace {

StudentEnsemble random_ensemble(std::uint64_t seed, std::size_t k, std::size_t d, std::size_t classes) {
    StudentEnsemble e;
    for (std::size_t i = 0; i < k; ++i) {
        e.members.push_back(oracle::random_net(seed * 31 + i, d, {5}, classes));
        e.ids.push_back("m" + std::to_string(i));
    }
    return e;
}

LabeledSet random_soft_set(Rng& rng, std::size_t n, std::size_t d, std::size_t classes) {
    LabeledSet s;
    s.num_classes = classes;
    std::vector<Vec> soft;
    for (std::size_t i = 0; i < n; ++i) {
        s.examples.push_back({oracle::random_point(rng, d), rng.index(classes)});
        soft.push_back(oracle::random_simplex(rng, classes));
    }
    s.soft_labels = soft;
    return s;
}

DistillConfig config_for(const StudentEnsemble& e, double temperature, double lambda) {
    DistillConfig c;
    c.temperature = temperature;
    c.lambda = lambda;
    c.members = e.size();
    c.learning_rates.assign(e.size(), 0.1);
    return c;
}

double entropy(const Vec& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double plain_cs(const Vec& a, const Vec& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb) + 1e-12);
}

}  // namespace

TEST_CASE("cosine similarity identities") {
    const Vec g{0.3, -1.2, 2.0};
    const Vec neg{-0.3, 1.2, -2.0};
    CHECK(pairwise_cs(g, g) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pairwise_cs(g, neg) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::abs(pairwise_cs(Vec{1.0, 0.0}, Vec{0.0, 3.0})) <= 1e-12);
    CHECK_THROWS_AS(pairwise_cs(Vec{1.0}, Vec{1.0, 2.0}), ValidationError);
    CHECK_THROWS_AS(pairwise_cs(Gradient{GradTarget::params, g}, Gradient{GradTarget::input, g}), ValidationError);
}

TEST_CASE("coherence of two gradients is their cosine similarity") {
    Rng rng(4);
    for (int i = 0; i < 20; ++i) {
        const Vec a = oracle::random_point(rng, 6), b = oracle::random_point(rng, 6);
        CHECK(cs_coherence({a, b}) == pairwise_cs(a, b));
    }
    CHECK_THROWS_AS(cs_coherence({Vec{1.0}}), ValidationError);
}

TEST_CASE("coherence of three orthogonal gradients is log 3") {
    const double c = cs_coherence({Vec{1, 0, 0}, Vec{0, 2, 0}, Vec{0, 0, 3}});
    CHECK(std::abs(c - std::log(3.0)) <= 1e-9);
}

TEST_CASE("coherence lies between the largest similarity and that plus log of the pair count") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t k = 2 + rng.index(5);
        std::vector<Vec> g;
        for (std::size_t i = 0; i < k; ++i) {
            Vec v(5);
            for (double& x : v) x = rng.uniform(-1.0, 1.0);
            g.push_back(v);
        }
        double peak = -2.0;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) peak = std::max(peak, plain_cs(g[a], g[b]));
        const double c = cs_coherence(g);
        const double pairs = static_cast<double>(k * (k - 1) / 2);
        CHECK(c >= peak - 1e-12);
        CHECK(c <= peak + std::log(pairs) + 1e-12);
    }
}

TEST_CASE("teacher soft labels") {
    Layer zero{3, 4, Vec(12, 0.0), Vec(4, 0.0), Activation::identity};
    const DenseNet flat(3, 4, {zero});
    LabeledSet data;
    data.num_classes = 4;
    data.examples = {{{0.1, 0.2, 0.3}, 0}, {{0.9, 0.5, 0.0}, 2}};
    const LabeledSet uniform = soft_labels(flat, data, 3.0);
    for (const Vec& y : *uniform.soft_labels)
        for (double v : y) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

    const DenseNet teacher = oracle::random_net(12, 3, {6}, 4);
    const LabeledSet one = soft_labels(teacher, data, 1.0);
    CHECK((*one.soft_labels)[1] == softmax_t(forward(teacher, data.examples[1].x), 1.0));
    CHECK(one.examples[1].y == 2u);
    CHECK_THROWS_AS(soft_labels(teacher, data, 0.0), ValidationError);

    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
        LabeledSet single;
        single.num_classes = 4;
        single.examples = {{oracle::random_point(rng, 3), 0}};
        double last = -1.0;
        for (double temp : {1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0}) {
            const double h = entropy((*soft_labels(teacher, single, temp).soft_labels)[0]);
            CHECK(h >= last - 1e-12);
            last = h;
        }
    }
}

TEST_CASE("distillation loss matches a straight-line recomputation") {
    Rng rng(10);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const std::size_t k = 2 + s % 2;
        const StudentEnsemble e = random_ensemble(s + 1, k, 4, 3);
        const LabeledSet data = random_soft_set(rng, 6, 4, 3);
        const DistillConfig cfg = config_for(e, 4.0, 0.7);
        std::vector<std::size_t> batch{0, 2, 3, 5};

        double distill = 0.0, coherence = 0.0;
        for (std::size_t n : batch) {
            const Vec& x = data.examples[n].x;
            const Vec& y = (*data.soft_labels)[n];
            std::vector<Vec> g;
            for (const DenseNet& m : e.members) {
                distill += 16.0 * oracle::loss(m, x, y, 4.0) / static_cast<double>(k);
                g.push_back(oracle::central_difference([&](const Vec& v) { return oracle::loss(m, v, y, 1.0); }, x, 1e-6));
            }
            double sum = 0.0;
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = a + 1; b < k; ++b) sum += std::exp(plain_cs(g[a], g[b]));
            coherence += std::log(sum);
        }
        distill /= 4.0;
        coherence /= 4.0;
        const LossTerms terms = distill_loss(e, data, batch, cfg);
        CHECK(terms.distillation == doctest::Approx(distill).epsilon(1e-10));
        CHECK(terms.coherence == doctest::Approx(coherence).epsilon(1e-6));
        CHECK(terms.total == doctest::Approx(distill + 0.7 * coherence).epsilon(1e-6));
    }
}

TEST_CASE("at unit temperature without the regulariser the loss is mean cross entropy") {
    Rng rng(12);
    const StudentEnsemble e = random_ensemble(9, 2, 4, 3);
    const LabeledSet data = random_soft_set(rng, 5, 4, 3);
    std::vector<std::size_t> batch{0, 1, 2, 3, 4};
    double ce = 0.0;
    for (std::size_t n : batch)
        for (const DenseNet& m : e.members)
            ce += cross_entropy(softmax_t(forward(m, data.examples[n].x), 1.0), (*data.soft_labels)[n]);
    ce /= 10.0;
    const LossTerms t = distill_loss(e, data, batch, config_for(e, 1.0, 0.0));
    CHECK(t.distillation == doctest::Approx(ce).epsilon(1e-9));
    CHECK(t.coherence == 0.0);

    LabeledSet hard = data;
    hard.soft_labels.reset();
    CHECK_THROWS_AS(distill_loss(e, hard, batch, config_for(e, 1.0, 0.0)), ValidationError);
}

TEST_CASE("distillation gradient matches finite differences of the loss") {
    Rng rng(14);
    const StudentEnsemble e = random_ensemble(4, 2, 3, 3);
    const LabeledSet data = random_soft_set(rng, 4, 3, 3);
    std::vector<std::size_t> batch{0, 1, 2, 3};
    const DistillConfig cfg = config_for(e, 3.0, 0.0);
    const std::vector<Vec> g = distill_loss_gradient(e, data, batch, cfg);
    for (std::size_t k = 0; k < e.size(); ++k) {
        StudentEnsemble probe = e;
        const Vec fd = oracle::central_difference(
            [&](const Vec& theta) {
                probe.members[k].set_params(theta);
                return distill_loss(probe, data, batch, cfg).total;
            },
            e.members[k].params(), 1e-6);
        CHECK(oracle::relative_error(g[k], fd) <= 1e-6);
    }
}

TEST_CASE("exact coherence gradient agrees with central differences") {
    // Points are drawn away from relu kinks and from vanishing input gradients,
    // where the similarity itself is not differentiable.
    Rng rng(16);
    for (std::uint64_t s = 0; s < 5; ++s) {
        const StudentEnsemble e = random_ensemble(20 + s, 2, 4, 3);
        LabeledSet data;
        data.num_classes = 3;
        std::vector<Vec> soft;
        while (data.size() < 5) {
            const Vec x = oracle::random_point(rng, 4);
            const Vec y = oracle::random_simplex(rng, 3);
            bool generic = true;
            for (const DenseNet& m : e.members) {
                const Vec g = grad(m, x, y, 1.0, GradTarget::input).values;
                double n2 = 0.0;
                for (double v : g) n2 += v * v;
                generic = generic && oracle::relu_margin(m, x) > 1e-2 && std::sqrt(n2) > 0.05;
            }
            if (!generic) continue;
            data.examples.push_back({x, 0});
            soft.push_back(y);
        }
        data.soft_labels = soft;
        std::vector<std::size_t> batch{0, 1, 2, 3, 4};
        const std::vector<Vec> exact = coherence_gradient(e, data, batch, CoherenceGradient::exact);
        const std::vector<Vec> fd = coherence_gradient(e, data, batch, CoherenceGradient::finite_difference);
        for (std::size_t k = 0; k < 2; ++k) CHECK(oracle::relative_error(exact[k], fd[k]) <= 1e-2);
    }
}

TEST_CASE("zero epochs leave the students untouched") {
    Rng rng(18);
    const StudentEnsemble e = random_ensemble(2, 2, 4, 3);
    LabeledSet data = random_soft_set(rng, 8, 4, 3);
    data.soft_labels.reset();
    const DenseNet teacher = oracle::random_net(99, 4, {6}, 3);
    DistillConfig cfg = config_for(e, 5.0, 1.0);
    cfg.epochs = 0;
    const DistillResult r = differential_distill(e, teacher, data, cfg);
    for (std::size_t k = 0; k < 2; ++k) CHECK(r.ensemble.members[k] == e.members[k]);
    CHECK(r.epoch_loss.empty());
}

TEST_CASE("without the regulariser identical students stay identical") {
    Rng rng(20);
    const DenseNet init = oracle::random_net(5, 4, {6}, 3);
    StudentEnsemble e;
    e.members = {init, init};
    LabeledSet data = random_soft_set(rng, 30, 4, 3);
    data.soft_labels.reset();
    const DenseNet teacher = oracle::random_net(6, 4, {8}, 3);
    DistillConfig cfg = config_for(e, 5.0, 0.0);
    cfg.epochs = 5;
    cfg.batch_size = 7;
    const DistillResult r = differential_distill(e, teacher, data, cfg);
    CHECK(r.ensemble.members[0] == r.ensemble.members[1]);
    CHECK_FALSE(r.ensemble.members[0] == init);
    CHECK(r.epoch_loss.size() == 5u);
}

TEST_CASE("the regulariser lowers the coherence it is trained on") {
    Rng rng(22);
    LabeledSet data = random_soft_set(rng, 40, 4, 3);
    data.soft_labels.reset();
    const DenseNet teacher = oracle::random_net(7, 4, {8}, 3);
    const StudentEnsemble e = random_ensemble(3, 2, 4, 3);
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    const LabeledSet soft = soft_labels(teacher, data, 2.0);

    DistillConfig cfg = config_for(e, 2.0, 0.0);
    cfg.epochs = 20;
    cfg.batch_size = 0;
    DistillConfig probe = cfg;
    probe.lambda = 1.0;
    const double plain = distill_loss(differential_distill(e, teacher, data, cfg).ensemble, soft, all, probe).coherence;
    cfg.lambda = 1.0;
    const double diverse = distill_loss(differential_distill(e, teacher, data, cfg).ensemble, soft, all, probe).coherence;
    CHECK(diverse < plain - 0.5);
}

TEST_CASE("configuration checks") {
    const StudentEnsemble e = random_ensemble(1, 2, 3, 2);
    DistillConfig cfg = config_for(e, 1.0, 0.0);
    CHECK_NOTHROW(cfg.validate());
    cfg.members = 1;
    cfg.learning_rates = {0.1};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = config_for(e, 0.0, 0.0);
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = config_for(e, 1.0, 0.0);
    cfg.learning_rates[1] = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
}
