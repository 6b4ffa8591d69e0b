// eimtd: command-line driver for the dynamic-ensemble defence pipeline.
//
// Every stage reads the artifacts of the previous stage from the run directory
// given by --out and writes its own next to them:
//
//   gen-data       data/train.csv, data/test.csv, data/dataset.json
//   train-teacher  teacher.json
//   distill        ensemble/manifest.json, ensemble/<member>.json
//   attack         substitutes/<id>.json, adversarial/<id>.jsonl, adversarial/manifest.json
//   payoff         game.json
//   simulate       report.json (+ plots/*.csv with --emit-plot-data)
//   report         alpha_sweep.csv (+ plots/alpha_accuracy.csv with --emit-plot-data)
//
// `solve` works on hand-written game files and needs no run directory.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eimtd/error.hpp"
#include "eimtd/game.hpp"
#include "eimtd/io.hpp"
#include "eimtd/pipeline.hpp"

namespace fs = std::filesystem;
using namespace eimtd;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "run";
    std::string alpha;
    bool emit_plot_data = false;
    std::vector<std::string> games;
};

// "0.5", "0,0.5,1" or "start:step:stop".
std::vector<double> parse_alpha(const std::string& text) {
    std::vector<double> out;
    auto number = [&](const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            require(used == s.size(), "");
            return v;
        } catch (...) {
            throw ValidationError("--alpha: cannot parse '" + s + "'");
        }
    };
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        require(parts.size() == 3, "--alpha grid must be start:step:stop");
        const double lo = number(parts[0]), step = number(parts[1]), hi = number(parts[2]);
        require(step > 0.0 && hi >= lo, "--alpha grid needs a positive step and start <= stop");
        const auto n = static_cast<std::size_t>((hi - lo) / step + 1e-9);
        for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + step * static_cast<double>(i));
    } else {
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ',');) out.push_back(number(p));
    }
    for (double a : out) require(a >= 0.0 && a <= 1.0, "--alpha values must lie in [0,1]");
    require(!out.empty(), "--alpha is empty");
    return out;
}

RunConfig load_run_config(const Options& o) {
    require(!o.config_path.empty(), "--config is required for this command");
    json doc = read_json(o.config_path);
    if (o.seed) doc["seed"] = *o.seed;
    RunConfig cfg = config_from_json(doc);
    if (!o.alpha.empty()) cfg.alphas = parse_alpha(o.alpha);
    return cfg;
}

std::string path_in(const Options& o, const std::string& rel) { return (fs::path(o.out) / rel).string(); }

void check_hash(const json& doc, const std::string& expected, const std::string& path) {
    const std::string got = doc.value("config_hash", std::string());
    require(got == expected, "'" + path + "' was produced by config " + (got.empty() ? "<none>" : got) +
                                 ", current config is " + expected);
}

LabeledSet load_split(const Options& o, const RunConfig& cfg, const std::string& name) {
    const std::string meta = path_in(o, "data/dataset.json");
    check_hash(read_json(meta), config_hash(cfg), meta);
    return read_csv(path_in(o, "data/" + name + ".csv"), cfg.data.num_classes);
}

DenseNet load_checked_model(const std::string& path, const std::string& hash) {
    const json doc = read_json(path);
    check_hash(doc, hash, path);
    return model_from_json(doc);
}

StudentEnsemble load_ensemble(const Options& o, const std::string& hash) {
    const std::string manifest_path = path_in(o, "ensemble/manifest.json");
    const json manifest = read_json(manifest_path);
    check_hash(manifest, hash, manifest_path);
    StudentEnsemble e;
    for (const json& m : manifest.at("members")) {
        const std::string id = m.at("id").get<std::string>();
        e.ids.push_back(id);
        e.members.push_back(load_checked_model(path_in(o, "ensemble/" + m.at("file").get<std::string>()), hash));
    }
    e.validate();
    return e;
}

std::vector<DenseNet> load_substitutes(const Options& o, const RunConfig& cfg, const std::string& hash) {
    std::vector<DenseNet> subs;
    for (const NetSpec& s : cfg.substitutes) subs.push_back(load_checked_model(path_in(o, "substitutes/" + s.id + ".json"), hash));
    return subs;
}

std::vector<AdvBatch> load_batches(const Options& o, const RunConfig& cfg, const std::string& hash) {
    const std::string manifest_path = path_in(o, "adversarial/manifest.json");
    check_hash(read_json(manifest_path), hash, manifest_path);
    std::vector<AdvBatch> batches;
    for (const NetSpec& s : cfg.substitutes) batches.push_back(from_jsonl(read_text(path_in(o, "adversarial/" + s.id + ".jsonl"))));
    return batches;
}

int cmd_gen_data(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const SplitData data = make_data(cfg);
    write_csv(path_in(o, "data/train.csv"), data.train);
    write_csv(path_in(o, "data/test.csv"), data.test);
    json spec = config_to_json(cfg).at("data");
    write_json(path_in(o, "data/dataset.json"), {{"spec", spec},
                                                 {"seed", cfg.seed},
                                                 {"n_train", data.train.size()},
                                                 {"n_test", data.test.size()},
                                                 {"config_hash", config_hash(cfg)}});
    return 0;
}

int cmd_train_teacher(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const LabeledSet train = load_split(o, cfg, "train");
    const DenseNet teacher = train_teacher(cfg, train);
    save_model(path_in(o, "teacher.json"), teacher, config_hash(cfg));
    std::cout << "teacher test accuracy " << format_double(accuracy(teacher, load_split(o, cfg, "test"))) << "\n";
    return 0;
}

int cmd_distill(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const std::string hash = config_hash(cfg);
    const LabeledSet train = load_split(o, cfg, "train");
    const DenseNet teacher = load_checked_model(path_in(o, "teacher.json"), hash);
    const DistillResult result = distill_students(cfg, teacher, train);
    json members = json::array();
    for (std::size_t k = 0; k < result.ensemble.size(); ++k) {
        const std::string file = result.ensemble.ids[k] + ".json";
        save_model(path_in(o, "ensemble/" + file), result.ensemble.members[k], hash);
        members.push_back({{"id", result.ensemble.ids[k]}, {"file", file}});
    }
    write_json(path_in(o, "ensemble/manifest.json"), {{"members", members},
                                                      {"temperature", cfg.distill.temperature},
                                                      {"lambda", cfg.distill.lambda},
                                                      {"seed", cfg.distill.seed},
                                                      {"epoch_loss", result.epoch_loss},
                                                      {"config_hash", hash}});
    return 0;
}

int cmd_attack(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const std::string hash = config_hash(cfg);
    const LabeledSet train = load_split(o, cfg, "train");
    const LabeledSet test = load_split(o, cfg, "test");
    const std::vector<DenseNet> subs = train_substitutes(cfg, train);
    for (std::size_t i = 0; i < subs.size(); ++i)
        save_model(path_in(o, "substitutes/" + cfg.substitutes[i].id + ".json"), subs[i], hash);

    Scenario sc;
    sc.substitutes = subs;
    for (const NetSpec& s : cfg.substitutes) sc.substitute_ids.push_back(s.id);
    sc.attack = cfg.attack;
    sc.eval = test;
    sc.seed = make_scenario(cfg, {}, {}, {}).seed;
    const std::vector<AdvBatch> batches = craft_substitute_batches(sc);
    json files = json::array();
    for (std::size_t i = 0; i < batches.size(); ++i) {
        const std::string file = cfg.substitutes[i].id + ".jsonl";
        write_text(path_in(o, "adversarial/" + file), to_jsonl(batches[i]));
        files.push_back({{"substitute", cfg.substitutes[i].id},
                         {"file", file},
                         {"white_box_asr", evaluate_asr(subs[i], batches[i])}});
    }
    write_json(path_in(o, "adversarial/manifest.json"),
               {{"attack", to_string(cfg.attack.kind)}, {"epsilon", cfg.attack.epsilon}, {"batches", files},
                {"config_hash", hash}});
    return 0;
}

TransferTable load_table(const Options& o, const RunConfig& cfg, const std::string& hash,
                         const StudentEnsemble& ensemble, const LabeledSet& test) {
    return tabulate_transfer(ensemble, load_batches(o, cfg, hash), test);
}

int cmd_payoff(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const std::string hash = config_hash(cfg);
    const StudentEnsemble ensemble = load_ensemble(o, hash);
    const LabeledSet test = load_split(o, cfg, "test");
    const TransferTable table = load_table(o, cfg, hash, ensemble, test);
    std::vector<std::string> sids;
    for (const NetSpec& s : cfg.substitutes) sids.push_back(s.id);
    const ModelPayoffs p = build_payoff_from_models(table, ensemble.ids, sids);
    const double alpha = o.alpha.empty() ? 1.0 : parse_alpha(o.alpha).front();
    json doc = game_to_json(two_type_game(p.legitimate, p.adversary, alpha));
    doc["config_hash"] = hash;
    write_json(path_in(o, "game.json"), doc);
    return 0;
}

int cmd_simulate(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const std::string hash = config_hash(cfg);
    const StudentEnsemble ensemble = load_ensemble(o, hash);
    const LabeledSet test = load_split(o, cfg, "test");
    std::vector<DenseNet> subs = load_substitutes(o, cfg, hash);
    const TransferTable table = load_table(o, cfg, hash, ensemble, test);
    const Scenario sc = make_scenario(cfg, ensemble, subs, test);
    TransferReport rep = run_experiment(sc, table);
    rep.config_hash = hash;
    write_json(path_in(o, "report.json"), report_to_json(rep));

    if (o.emit_plot_data) {
        write_text(path_in(o, "plots/alpha_accuracy.csv"), alpha_sweep_csv(rep));
        if (!cfg.sweep_temperatures.empty() || !cfg.sweep_lambdas.empty()) {
            SplitData data{load_split(o, cfg, "train"), test, {}};
            const DenseNet teacher = load_checked_model(path_in(o, "teacher.json"), hash);
            if (!cfg.sweep_temperatures.empty())
                write_text(path_in(o, "plots/gamma_vs_temperature.csv"),
                           sweep_csv("temperature", sweep_temperature(cfg, teacher, data, subs, cfg.sweep_temperatures)));
            if (!cfg.sweep_lambdas.empty())
                write_text(path_in(o, "plots/gamma_vs_lambda.csv"),
                           sweep_csv("lambda", sweep_lambda(cfg, teacher, data, subs, cfg.sweep_lambdas)));
        }
    }
    const AlphaPoint& last = rep.accuracy_vs_alpha.back();
    std::cout << "alpha " << format_double(last.alpha) << " scheduled accuracy " << format_double(last.eimtd_analytic)
              << "\n";
    return 0;
}

int cmd_report(const Options& o) {
    const RunConfig cfg = load_run_config(o);
    const std::string path = path_in(o, "report.json");
    const json doc = read_json(path);
    check_hash(doc, config_hash(cfg), path);
    const TransferReport rep = report_from_json(doc);
    const std::string csv = alpha_sweep_csv(rep);
    write_text(path_in(o, "alpha_sweep.csv"), csv);
    if (o.emit_plot_data) write_text(path_in(o, "plots/alpha_accuracy.csv"), csv);
    std::cout << csv;
    return 0;
}

int cmd_solve(const Options& o) {
    require(!o.games.empty(), "--game is required");
    require(o.games.size() <= 2, "at most two --game files (legitimate, adversary)");
    const std::vector<double> alphas = o.alpha.empty() ? std::vector<double>{} : parse_alpha(o.alpha);

    std::vector<BayesGame> files;
    for (const std::string& path : o.games) files.push_back(load_game(path));

    auto build = [&](std::optional<double> alpha) {
        if (files.size() == 2) {
            require(files[0].types.size() == 1 && files[1].types.size() == 1,
                    "combining two game files needs one follower type in each");
            const double a = alpha.value_or(files[1].alpha);
            return two_type_game(files[0].types[0].payoff, files[1].types[0].payoff, a);
        }
        BayesGame g = files[0];
        if (alpha) {
            g.alpha = *alpha;
            if (g.types.size() == 2) {
                g.types[0].probability = 1.0 - *alpha;
                g.types[1].probability = *alpha;
            }
        }
        g.validate();
        return g;
    };

    json out;
    if (alphas.size() <= 1) {
        const BayesGame g = build(alphas.empty() ? std::nullopt : std::optional<double>(alphas.front()));
        out = equilibrium_to_json(g, solve(g));
        out["alpha"] = g.alpha;
    } else {
        out = json::array();
        for (double a : alphas) {
            const BayesGame g = build(a);
            json e = equilibrium_to_json(g, solve(g));
            e["alpha"] = a;
            out.push_back(std::move(e));
        }
    }
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic-ensemble adversarial defence pipeline"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub, bool with_alpha) {
        sub->add_option("--config", o.config_path, "Run configuration JSON");
        sub->add_option("--seed", o.seed, "Override the configuration seed");
        sub->add_option("--out", o.out, "Run directory")->capture_default_str();
        if (with_alpha) sub->add_option("--alpha", o.alpha, "Adversary probability: value, list a,b,c or start:step:stop");
    };

    struct Command {
        const char* name;
        const char* help;
        int (*run)(const Options&);
        bool alpha;
    };
    const Command commands[] = {
        {"gen-data", "Generate the synthetic dataset", cmd_gen_data, false},
        {"train-teacher", "Adversarially train the teacher", cmd_train_teacher, false},
        {"distill", "Distill the student ensemble", cmd_distill, false},
        {"attack", "Train substitutes and craft adversarial sets", cmd_attack, false},
        {"payoff", "Build the game from measured transfer rates", cmd_payoff, true},
        {"simulate", "Run the scheduling simulation", cmd_simulate, true},
        {"report", "Check hashes and emit the alpha sweep CSV", cmd_report, true},
    };
    int (*selected)(const Options&) = nullptr;
    for (const Command& c : commands) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, c.alpha);
        sub->callback([&selected, run = c.run] { selected = run; });
    }
    CLI::App* solve_cmd = app.add_subcommand("solve", "Solve a game file and print the equilibrium");
    solve_cmd->add_option("--game", o.games, "Game JSON (repeat for legitimate then adversary)")->required();
    solve_cmd->add_option("--alpha", o.alpha, "Adversary probability: value, list or start:step:stop");
    solve_cmd->callback([&selected] { selected = cmd_solve; });
    for (CLI::App* sub : app.get_subcommands({}))
        if (sub->get_name() != "gen-data" && sub != solve_cmd) sub->add_flag("--emit-plot-data", o.emit_plot_data,
                                                                            "Write plot CSVs under plots/");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        return selected(o);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
