#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "eimtd/error.hpp"
#include "eimtd/pipeline.hpp"

using namespace eimtd;

namespace {

std::size_t nearest_centroid(const std::vector<Vec>& centroids, const Vec& x) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        double d = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) d += (x[i] - centroids[c][i]) * (x[i] - centroids[c][i]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("config JSON round trip and hash") {
    const RunConfig cfg = toy_config(7);
    CHECK_NOTHROW(cfg.validate());
    const json doc = config_to_json(cfg);
    const RunConfig back = config_from_json(doc);
    CHECK(config_to_json(back) == doc);
    CHECK(config_hash(back) == config_hash(cfg));
    CHECK(config_hash(cfg).size() == 16);
    CHECK(config_hash(toy_config(8)) != config_hash(cfg));

    json changed = doc;
    changed["queries"] = 99;
    CHECK(config_hash(config_from_json(changed)) != config_hash(cfg));
}

TEST_CASE("config validation") {
    json doc = config_to_json(toy_config(1));
    doc.erase("seed");
    CHECK_THROWS_AS(config_from_json(doc), ValidationError);

    json bad = config_to_json(toy_config(1));
    bad["data"]["kind"] = "spirals";
    CHECK_THROWS_AS(config_from_json(bad), ValidationError);

    json neg = config_to_json(toy_config(1));
    neg["alphas"] = {0.0, 1.5};
    CHECK_THROWS_AS(config_from_json(neg).validate(), ValidationError);

    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ValidationError);
}

TEST_CASE("shipped configs load and validate") {
    const std::string root = EIMTD_SOURCE_DIR;
    for (const char* name : {"/configs/toy.json", "/configs/quick.json"}) {
        const RunConfig cfg = load_config(root + name);
        CHECK_NOTHROW(cfg.validate());
    }
    CHECK(config_hash(load_config(root + "/configs/toy.json")) ==
          config_hash([] {
              RunConfig c = toy_config(1);
              c.sweep_temperatures = {1, 2, 5, 10, 20};
              c.sweep_lambdas = {0, 0.3, 1, 3};
              return c;
          }()));
}

TEST_CASE("spearman") {
    const Vec a{1, 2, 3, 4, 5};
    CHECK(spearman(a, Vec{2, 4, 6, 8, 10}) == doctest::Approx(1.0));
    CHECK(spearman(a, Vec{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
    // No ties: 1 - 6 sum d^2 / (n (n^2 - 1)) with d = (0, 1, -1, 0, 0).
    CHECK(spearman(a, Vec{10, 30, 20, 40, 50}) == doctest::Approx(1.0 - 6.0 * 2.0 / 120.0));
    // Tied ranks (1, 2.5, 2.5, 4) against (1, 2, 3, 4).
    CHECK(spearman(Vec{1, 2, 2, 3}, Vec{1, 2, 3, 4}) == doctest::Approx(4.5 / std::sqrt(22.5)));
    CHECK(spearman(Vec{1, 1, 1}, Vec{1, 2, 3}) == 0.0);
    CHECK_THROWS_AS(spearman(Vec{1}, Vec{1}), ValidationError);
}

TEST_CASE("sweep csv layout") {
    const std::string csv = sweep_csv("temperature", {{1.0, 0.5, 0.75}, {10.0, 0.25, 0.5}});
    CHECK(csv == "temperature,gamma,eimtd_accuracy\n1,0.5,0.75\n10,0.25,0.5\n");
}

TEST_CASE("datasets are deterministic and survive CSV") {
    const RunConfig cfg = toy_config(3);
    const SplitData a = make_data(cfg);
    const SplitData b = make_data(cfg);
    CHECK(to_csv(a.train) == to_csv(b.train));
    CHECK(a.train.size() == cfg.data.n_train);
    CHECK(a.test.size() == cfg.data.n_test);
    CHECK_NOTHROW(a.train.validate());

    const LabeledSet back = from_csv(to_csv(a.test), cfg.data.num_classes);
    REQUIRE(back.size() == a.test.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back.examples[i].x == a.test.examples[i].x);
        CHECK(back.examples[i].y == a.test.examples[i].y);
    }
    CHECK_THROWS_AS(from_csv("x0,y\n0.5,7\n", 2), ValidationError);

    DatasetSpec rings;
    rings.kind = DatasetKind::rings;
    rings.dim = 2;
    rings.num_classes = 3;
    CHECK_NOTHROW(generate_dataset(rings, 1).train.validate());
}

TEST_CASE("noise-free blobs are separated by their centroids") {
    DatasetSpec spec;
    spec.noise = 0.0;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const SplitData d = generate_dataset(spec, seed);
        REQUIRE(d.centroids.size() == spec.num_classes);
        for (const Example& e : d.test.examples) CHECK(nearest_centroid(d.centroids, e.x) == e.y);
    }
}

TEST_CASE("students and substitutes follow their specs") {
    RunConfig cfg = toy_config(2, 3);
    const StudentEnsemble students = init_students(cfg);
    REQUIRE(students.members.size() == 3);
    CHECK(students.members[0].input_dim() == cfg.data.dim);
    CHECK(students.members[0].num_classes() == cfg.data.num_classes);
    CHECK(students.members[0] != students.members[1]);

    const Scenario sc = make_scenario(cfg, students, {}, make_data(cfg).test);
    CHECK(sc.seed == make_scenario(cfg, {}, {}, {}).seed);
    CHECK(sc.alphas == cfg.alphas);
}
