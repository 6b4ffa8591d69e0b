#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kCli = EIMTD_CLI;
const std::string kRoot = EIMTD_SOURCE_DIR;
const std::string kQuick = kRoot + "/configs/quick.json";

struct Workdir {
    fs::path path;
    Workdir() {
        path = fs::temp_directory_path() / ("eimtd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~Workdir() { fs::remove_all(path); }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string operator/(const std::string& rel) const { return (path / rel).string(); }
};

// Runs the CLI with stdout captured to `out_file` (or discarded); returns the exit status.
int run(const std::string& args, const std::string& out_file = "/dev/null") {
    const std::string cmd = "'" + kCli + "' " + args + " > '" + out_file + "' 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

int run_pipeline(const std::string& out) {
    for (const char* stage : {"gen-data", "train-teacher", "distill", "attack", "payoff", "simulate", "report"}) {
        const int rc = run(std::string(stage) + " --config '" + kQuick + "' --out '" + out + "'");
        if (rc != 0) return rc;
    }
    return 0;
}

}  // namespace

TEST_CASE("gen-data is reproducible") {
    Workdir w;
    REQUIRE(run("gen-data --config '" + kQuick + "' --out '" + (w / "a") + "'") == 0);
    REQUIRE(run("gen-data --config '" + kQuick + "' --out '" + (w / "b") + "'") == 0);
    const std::string a = slurp(w / "a/data/train.csv");
    CHECK(!a.empty());
    CHECK(a == slurp(w / "b/data/train.csv"));
    CHECK(slurp(w / "a/data/test.csv") == slurp(w / "b/data/test.csv"));

    const json cfg = json::parse(slurp(kQuick));
    CHECK(count_lines(a) == 1 + cfg["data"]["n_train"].get<std::size_t>());

    REQUIRE(run("gen-data --config '" + kQuick + "' --seed 99 --out '" + (w / "c") + "'") == 0);
    CHECK(slurp(w / "c/data/train.csv") != a);
}

TEST_CASE("solve prints the equilibrium") {
    Workdir w;
    REQUIRE(run("solve --game '" + kRoot + "/fixtures/table1.json'", w / "one.json") == 0);
    const json one = json::parse(slurp(w / "one.json"));
    CHECK(one["leader_value"].get<double>() == doctest::Approx(68.93));
    CHECK(one["s"][0].get<double>() == 1.0);

    REQUIRE(run("solve --game '" + kRoot + "/fixtures/table1.json' --game '" + kRoot +
                    "/fixtures/table2_pgd.json' --alpha 0:0.5:1",
                w / "grid.json") == 0);
    const json grid = json::parse(slurp(w / "grid.json"));
    REQUIRE(grid.is_array());
    REQUIRE(grid.size() == 3);
    for (const json& eq : grid) {
        double total = 0.0;
        for (const json& p : eq["s"]) total += p.get<double>();
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(grid[2]["alpha"].get<double>() == 1.0);
}

TEST_CASE("the full pipeline produces a report row per alpha and is deterministic") {
    Workdir w;
    REQUIRE(run_pipeline(w / "a") == 0);
    REQUIRE(run_pipeline(w / "b") == 0);
    const std::string csv = slurp(w / "a/alpha_sweep.csv");
    const json cfg = json::parse(slurp(kQuick));
    CHECK(count_lines(csv) == 1 + cfg["alphas"].size());
    CHECK(csv == slurp(w / "b/alpha_sweep.csv"));
    CHECK(slurp(w / "a/report.json") == slurp(w / "b/report.json"));
    CHECK(slurp(w / "a/ensemble/student-0.json") == slurp(w / "b/ensemble/student-0.json"));

    REQUIRE(run("report --config '" + kQuick + "' --out '" + (w / "a") + "' --emit-plot-data") == 0);
    CHECK(fs::exists(w / "a/plots/alpha_accuracy.csv"));
}

TEST_CASE("invalid inputs exit with status 2") {
    Workdir w;
    CHECK(run("solve --game '" + (w / "missing.json") + "'") == 2);
    CHECK(run("train-teacher --config '" + kQuick + "' --out '" + (w / "empty") + "'") == 2);
    CHECK(run("no-such-command") == 2);
    CHECK(run("gen-data --config '" + (w / "nope.json") + "'") == 2);

    // Artifacts from one seed cannot be consumed under another.
    REQUIRE(run("gen-data --config '" + kQuick + "' --out '" + (w / "run") + "'") == 0);
    CHECK(run("train-teacher --config '" + kQuick + "' --seed 5 --out '" + (w / "run") + "'") == 2);

    std::ofstream(w / "bad.json") << "{\"alpha\": 0.5, \"types\": []}";
    CHECK(run("solve --game '" + (w / "bad.json") + "'") == 2);
    CHECK(run("--help") == 0);
}
