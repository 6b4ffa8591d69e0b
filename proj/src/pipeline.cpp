#include "eimtd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "eimtd/error.hpp"
#include "eimtd/game.hpp"
#include "eimtd/rng.hpp"

namespace eimtd {

namespace {

// Seed roles under the run's master seed.
enum Stage : std::uint64_t {
    kTeacherInit = 10,
    kTeacherAttack = 11,
    kStudentInit = 20,
    kDistill = 21,
    kSubstituteInit = 30,
    kSubstituteFit = 31,
    kScenario = 40,
};

json attack_to_json(const AttackConfig& a) {
    return {{"kind", to_string(a.kind)},       {"epsilon", a.epsilon},
            {"step_size", a.step_size},        {"iterations", a.iterations},
            {"decay_mu", a.decay_mu},          {"transform_prob", a.transform_prob},
            {"random_init", a.random_init}};
}

AttackConfig attack_from_json(const json& j) {
    const AttackKind kind = attack_kind_from_string(j.at("kind").get<std::string>());
    AttackConfig a = AttackConfig::defaults(kind, j.value("epsilon", 0.05));
    a.step_size = j.value("step_size", a.step_size);
    a.iterations = j.value("iterations", a.iterations);
    a.decay_mu = j.value("decay_mu", a.decay_mu);
    a.transform_prob = j.value("transform_prob", a.transform_prob);
    a.random_init = j.value("random_init", a.random_init);
    return a;
}

json net_to_json(const NetSpec& n) {
    return {{"id", n.id}, {"hidden", n.hidden}, {"learning_rate", n.learning_rate}, {"epochs", n.epochs}};
}

NetSpec net_from_json(const json& j) {
    NetSpec n;
    n.id = j.at("id").get<std::string>();
    n.hidden = j.value("hidden", std::vector<std::size_t>{});
    n.learning_rate = j.value("learning_rate", n.learning_rate);
    n.epochs = j.value("epochs", n.epochs);
    return n;
}

std::string kind_name(DatasetKind k) { return k == DatasetKind::blobs ? "blobs" : "rings"; }

DatasetKind kind_from_name(const std::string& s) {
    if (s == "blobs") return DatasetKind::blobs;
    if (s == "rings") return DatasetKind::rings;
    throw ValidationError("unknown dataset kind '" + s + "'");
}

}  // namespace

void RunConfig::validate() const {
    require(data.dim >= 1 && data.num_classes >= 2, "invalid dataset dimensions");
    require(data.n_train >= 1 && data.n_test >= 1, "dataset splits must be non-empty");
    require(!teacher.id.empty(), "teacher needs an id");
    require(teacher.learning_rate > 0.0, "teacher learning rate must be positive");
    require(students.size() >= 2, "need at least two students");
    require(!substitutes.empty(), "need at least one substitute");
    for (const NetSpec& s : students) require(s.learning_rate > 0.0, "student learning rates must be positive");
    for (const NetSpec& s : substitutes) require(s.learning_rate > 0.0, "substitute learning rates must be positive");
    require(queries >= 1, "queries must be positive");
    for (double a : alphas) require(a >= 0.0 && a <= 1.0, "alpha values must lie in [0,1]");
    for (double t : sweep_temperatures) require(t > 0.0, "sweep temperatures must be positive");
    for (double l : sweep_lambdas) require(l >= 0.0, "sweep lambdas must be non-negative");
    teacher_attack.validate();
    attack.validate();
    DistillConfig d = distill;
    d.members = students.size();
    d.learning_rates.clear();
    for (const NetSpec& s : students) d.learning_rates.push_back(s.learning_rate);
    d.validate();
}

RunConfig config_from_json(const json& doc) {
    RunConfig c;
    try {
        require(doc.contains("seed"), "config must set an explicit seed");
        c.seed = doc.at("seed").get<std::uint64_t>();
        const json& d = doc.at("data");
        c.data.kind = kind_from_name(d.value("kind", std::string("blobs")));
        c.data.dim = d.value("dim", c.data.dim);
        c.data.num_classes = d.value("num_classes", c.data.num_classes);
        c.data.n_train = d.value("n_train", c.data.n_train);
        c.data.n_test = d.value("n_test", c.data.n_test);
        c.data.noise = d.value("noise", c.data.noise);
        c.teacher = net_from_json(doc.at("teacher"));
        c.teacher_attack = attack_from_json(doc.at("teacher_attack"));
        for (const json& s : doc.at("students")) c.students.push_back(net_from_json(s));
        const json& dj = doc.at("distill");
        c.distill.temperature = dj.value("temperature", c.distill.temperature);
        c.distill.lambda = dj.value("lambda", c.distill.lambda);
        c.distill.epochs = dj.value("epochs", c.distill.epochs);
        c.distill.batch_size = dj.value("batch_size", c.distill.batch_size);
        for (const json& s : doc.at("substitutes")) c.substitutes.push_back(net_from_json(s));
        c.attack = attack_from_json(doc.at("attack"));
        c.queries = doc.value("queries", c.queries);
        c.requests = doc.value("requests", c.requests);
        c.alphas = doc.value("alphas", std::vector<double>{});
        if (doc.contains("sweeps")) {
            c.sweep_temperatures = doc["sweeps"].value("temperatures", std::vector<double>{});
            c.sweep_lambdas = doc["sweeps"].value("lambdas", std::vector<double>{});
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed config: ") + e.what());
    }
    c.distill.members = c.students.size();
    c.distill.learning_rates.clear();
    for (const NetSpec& s : c.students) c.distill.learning_rates.push_back(s.learning_rate);
    c.distill.seed = derive_seed(c.seed, kDistill);
    c.teacher_attack.seed = derive_seed(c.seed, kTeacherAttack);
    c.attack.seed = derive_seed(c.seed, kScenario);
    c.validate();
    return c;
}

json config_to_json(const RunConfig& c) {
    json students = json::array();
    for (const NetSpec& s : c.students) students.push_back(net_to_json(s));
    json subs = json::array();
    for (const NetSpec& s : c.substitutes) subs.push_back(net_to_json(s));
    return {{"seed", c.seed},
            {"data",
             {{"kind", kind_name(c.data.kind)},
              {"dim", c.data.dim},
              {"num_classes", c.data.num_classes},
              {"n_train", c.data.n_train},
              {"n_test", c.data.n_test},
              {"noise", c.data.noise}}},
            {"teacher", net_to_json(c.teacher)},
            {"teacher_attack", attack_to_json(c.teacher_attack)},
            {"students", std::move(students)},
            {"distill",
             {{"temperature", c.distill.temperature},
              {"lambda", c.distill.lambda},
              {"epochs", c.distill.epochs},
              {"batch_size", c.distill.batch_size}}},
            {"substitutes", std::move(subs)},
            {"attack", attack_to_json(c.attack)},
            {"queries", c.queries},
            {"requests", c.requests},
            {"alphas", c.alphas},
            {"sweeps", {{"temperatures", c.sweep_temperatures}, {"lambdas", c.sweep_lambdas}}}};
}

std::string config_hash(const RunConfig& cfg) { return config_hash(config_to_json(cfg)); }

RunConfig load_config(const std::string& path) {
    try {
        return config_from_json(read_json(path));
    } catch (const ValidationError& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

RunConfig toy_config(std::uint64_t seed, std::size_t students) {
    json doc = {
        {"seed", seed},
        {"data", {{"kind", "blobs"}, {"dim", 16}, {"num_classes", 4}, {"n_train", 400}, {"n_test", 200}, {"noise", 0.15}}},
        {"teacher", {{"id", "teacher"}, {"hidden", {64, 64, 64}}, {"learning_rate", 0.05}, {"epochs", 10}}},
        {"teacher_attack", {{"kind", "fgsm"}, {"epsilon", 0.05}}},
        {"distill", {{"temperature", 10.0}, {"lambda", 1.0}, {"epochs", 400}, {"batch_size", 16}}},
        {"attack", {{"kind", "pgd"}, {"epsilon", 0.05}}},
        {"queries", 100},
        {"requests", 10000},
        {"alphas", {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0}},
    };
    json studs = json::array();
    for (std::size_t k = 0; k < students; ++k)
        studs.push_back({{"id", "student-" + std::to_string(k)}, {"hidden", {16}}, {"learning_rate", 0.05}});
    doc["students"] = studs;
    doc["substitutes"] = json::array({
        {{"id", "sub-wide"}, {"hidden", {32}}, {"learning_rate", 0.05}, {"epochs", 15}},
        {{"id", "sub-deep"}, {"hidden", {16, 16}}, {"learning_rate", 0.05}, {"epochs", 15}},
        {{"id", "sub-linear"}, {"hidden", json::array()}, {"learning_rate", 0.05}, {"epochs", 15}},
    });
    return config_from_json(doc);
}

SplitData make_data(const RunConfig& cfg) { return generate_dataset(cfg.data, cfg.seed); }

DenseNet train_teacher(const RunConfig& cfg, const LabeledSet& train) {
    DenseNet net = DenseNet::random(train.dim(), cfg.teacher.hidden, cfg.data.num_classes,
                                    derive_seed(cfg.seed, kTeacherInit));
    return adversarial_train(std::move(net), train, cfg.teacher_attack, cfg.teacher.epochs, cfg.teacher.learning_rate);
}

StudentEnsemble init_students(const RunConfig& cfg) {
    StudentEnsemble e;
    for (std::size_t k = 0; k < cfg.students.size(); ++k) {
        e.members.push_back(DenseNet::random(cfg.data.dim, cfg.students[k].hidden, cfg.data.num_classes,
                                             derive_seed(cfg.seed, kStudentInit, k)));
        e.ids.push_back(cfg.students[k].id);
    }
    return e;
}

DistillResult distill_students(const RunConfig& cfg, const DenseNet& teacher, const LabeledSet& train) {
    return differential_distill(init_students(cfg), teacher, train, cfg.distill);
}

std::vector<DenseNet> train_substitutes(const RunConfig& cfg, const LabeledSet& train) {
    std::vector<DenseNet> subs;
    for (std::size_t i = 0; i < cfg.substitutes.size(); ++i) {
        const NetSpec& s = cfg.substitutes[i];
        DenseNet net = DenseNet::random(train.dim(), s.hidden, cfg.data.num_classes,
                                        derive_seed(cfg.seed, kSubstituteInit, i));
        fit(net, train, s.epochs, s.learning_rate, derive_seed(cfg.seed, kSubstituteFit, i));
        subs.push_back(std::move(net));
    }
    return subs;
}

Scenario make_scenario(const RunConfig& cfg, StudentEnsemble members, std::vector<DenseNet> substitutes,
                       LabeledSet eval) {
    Scenario s;
    s.members = std::move(members);
    s.substitutes = std::move(substitutes);
    for (const NetSpec& n : cfg.substitutes) s.substitute_ids.push_back(n.id);
    if (s.substitute_ids.size() != s.substitutes.size()) s.substitute_ids.clear();
    s.attack = cfg.attack;
    s.queries = cfg.queries;
    s.alphas = cfg.alphas;
    s.requests = cfg.requests;
    s.eval = std::move(eval);
    s.seed = derive_seed(cfg.seed, kScenario);
    return s;
}

double mean_immunity(const TransferTable& table) {
    require(table.substitutes() > 0, "no substitutes in the transfer table");
    double total = 0.0;
    for (const Vec& row : table.rates) total += differential_immunity(row);
    return total / static_cast<double>(table.substitutes());
}

namespace {

SweepPoint score_ensemble(const RunConfig& cfg, StudentEnsemble members, const SplitData& data,
                          const std::vector<DenseNet>& substitutes, double parameter) {
    const Scenario sc = make_scenario(cfg, std::move(members), substitutes, data.test);
    const TransferTable table = measure_transfer(sc);
    std::vector<std::string> mids, sids;
    for (std::size_t k = 0; k < table.members(); ++k) mids.push_back(sc.member_id(k));
    for (std::size_t i = 0; i < table.substitutes(); ++i) sids.push_back(sc.substitute_id(i));
    const ModelPayoffs p = build_payoff_from_models(table, mids, sids);
    const Equilibrium eq = solve(two_type_game(p.legitimate, p.adversary, 1.0));
    return {parameter, mean_immunity(table), eq.leader_value / 100.0};
}

}  // namespace

std::vector<SweepPoint> sweep_temperature(const RunConfig& cfg, const DenseNet& teacher, const SplitData& data,
                                          const std::vector<DenseNet>& substitutes,
                                          const std::vector<double>& temperatures) {
    std::vector<SweepPoint> out;
    for (double t : temperatures) {
        RunConfig c = cfg;
        c.distill.temperature = t;
        out.push_back(score_ensemble(c, distill_students(c, teacher, data.train).ensemble, data, substitutes, t));
    }
    return out;
}

std::vector<SweepPoint> sweep_lambda(const RunConfig& cfg, const DenseNet& teacher, const SplitData& data,
                                     const std::vector<DenseNet>& substitutes, const std::vector<double>& lambdas) {
    std::vector<SweepPoint> out;
    for (double l : lambdas) {
        RunConfig c = cfg;
        c.distill.lambda = l;
        out.push_back(score_ensemble(c, distill_students(c, teacher, data.train).ensemble, data, substitutes, l));
    }
    return out;
}

std::string sweep_csv(const std::string& parameter_name, const std::vector<SweepPoint>& points) {
    std::ostringstream os;
    os << parameter_name << ",gamma,eimtd_accuracy\n";
    for (const SweepPoint& p : points)
        os << format_double(p.parameter) << ',' << format_double(p.gamma) << ',' << format_double(p.eimtd_accuracy)
           << '\n';
    return os.str();
}

namespace {

Vec ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    Vec r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size() && a.size() >= 2, "spearman needs two equal-length samples");
    const Vec ra = ranks(a);
    const Vec rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

}  // namespace eimtd
