#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "config.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using sbdcli::ConfigError;
using sbdcli::ExperimentConfig;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

struct Outcome {
    int code;
    std::string out, err;
};

// Runs the CLI with args appended; stdout/stderr captured through files.
Outcome cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const std::string base = "cli_capture_" + std::to_string(counter++);
    const std::string cmd =
        env + " " + std::string(SBDNET_CLI) + " " + args + " >" + base + ".out 2>" + base + ".err";
    const int raw = std::system(cmd.c_str());
    Outcome o{WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(base + ".out"), slurp(base + ".err")};
    fs::remove(base + ".out");
    fs::remove(base + ".err");
    return o;
}

fs::path fresh(const std::string& name) {
    const fs::path d = fs::current_path() / ("cli_" + name);
    fs::remove_all(d);
    return d;
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("config: canonical text round-trips") {
    const ExperimentConfig d;
    const std::string text = d.serialize();
    const ExperimentConfig back = ExperimentConfig::parse(text);
    CHECK(back == d);
    CHECK(back.serialize() == text);
    CHECK(d.real("network", "lambda_per_m2_s") == 0.3);
    CHECK(d.real("network", "mu_per_bit") == 0.01);
    CHECK(d.real("network", "bandwidth_hz") == 1e6);
    CHECK(d.real("network", "radius_m") == 100.0);
    CHECK_FALSE(d.has_real("network", "noise_dbm"));
}

TEST_CASE("config: random edits survive a round trip") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        ExperimentConfig c;
        c.set("network", "lambda_per_m2_s", sbdcli::format_real(u(rng)));
        c.set("network", "noise_sigma2", sbdcli::format_real(std::pow(10.0, -12 * u(rng))));
        if (trial % 2) c.set("network", "noise_dbm", sbdcli::format_real(-80 * u(rng)));
        c.set("run", "seed", std::to_string(rng() >> 1));
        c.set("sim", "stop_on_divergence", trial % 3 ? "true" : "false");
        c.set("passage", "sigma2_list", sbdcli::format_real(u(rng)) + "," + sbdcli::format_real(u(rng)));
        c.set("network", "rate_mode", trial % 5 ? "low-sinr" : "general");
        const std::string t = c.serialize();
        const auto back = ExperimentConfig::parse(t);
        CHECK(back == c);
        CHECK(back.serialize() == t);
    }
}

TEST_CASE("config: accepted spellings and overrides") {
    const auto c = ExperimentConfig::parse(
        "# comment\n; other comment\n[network]\n  lambda_per_m2_s = 0.25  \n[sim]\nhorizon_events = 1e6\n"
        "stop_on_divergence = off\n[passage]\nsigma2_list = 0.1, 2 ,3\n");
    CHECK(c.real("network", "lambda_per_m2_s") == 0.25);
    CHECK(c.integer("sim", "horizon_events") == 1000000);
    CHECK_FALSE(c.flag("sim", "stop_on_divergence"));
    CHECK(c.reals("passage", "sigma2_list") == std::vector<double>{0.1, 2, 3});

    ExperimentConfig o;
    o.apply_override("network.path_loss_exponent=5");
    CHECK(o.real("network", "path_loss_exponent") == 5.0);
    o.apply_override("network.noise_dbm = -50");
    CHECK(o.real("network", "noise_dbm") == -50.0);
    o.apply_override("network.noise_dbm=");
    CHECK_FALSE(o.has_real("network", "noise_dbm"));
    CHECK_THROWS_AS(o.apply_override("nonsense"), ConfigError);
    CHECK_THROWS_AS(o.apply_override("network.unknown=1"), ConfigError);
    CHECK_THROWS_AS(o.apply_override("sim.mode=sideways"), ConfigError);
}

TEST_CASE("config: errors carry file, line and key") {
    auto message = [](const std::string& text) {
        try {
            ExperimentConfig::parse(text, "exp.ini");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("[network]\nlambda_per_m2_s = abc\n").find("exp.ini:2:") == 0);
    CHECK(message("[network]\nlambda_per_m2_s = abc\n").find("network.lambda_per_m2_s") != std::string::npos);
    CHECK(message("[bogus]\n").find("exp.ini:1: unknown section") == 0);
    CHECK(message("lambda_per_m2_s = 1\n").find("outside any section") != std::string::npos);
    CHECK(message("[sim]\n\nn_bands = 2.5\n").find("exp.ini:3:") == 0);
    CHECK(message("[sim]\nwarp = 1\n").find("unknown key sim.warp") != std::string::npos);
    CHECK(message("[sim\n").find("unterminated") != std::string::npos);
    CHECK(message("[network]\nradius_m = inf\n").find("finite") != std::string::npos);
}

TEST_CASE("checksum helper") {
    CHECK(sbdcli::hex64(sbdcli::fnv1a64("")) == "cbf29ce484222325");
    CHECK(sbdcli::hex64(sbdcli::fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("cli: usage errors exit 2") {
    CHECK(cli("").code == 2);
    CHECK(cli("frobnicate").code == 2);
    CHECK(cli("--threads 0 critical").code == 2);
    CHECK(cli("--config does_not_exist.ini critical").code == 2);

    const auto bad = fresh("badcfg");
    fs::create_directories(bad);
    spit(bad / "c.ini", "[network]\nlambda_per_m2_s = 0.3\ninversion = 3\n");
    const auto r = cli("--config " + (bad / "c.ini").string() + " --out " + (bad / "o").string() + " critical");
    CHECK(r.code == 2);
    CHECK(r.err.find("inversion") != std::string::npos);

    spit(bad / "d.ini", "[network]\nlambda_per_m2_s = 0.3x\n");
    const auto r2 = cli("--config " + (bad / "d.ini").string() + " critical");
    CHECK(r2.code == 2);
    CHECK(r2.err.find("d.ini:2:") != std::string::npos);
    CHECK(cli("--set network.nope=1 critical").code == 2);
    CHECK(cli("preset fig42 --out " + (bad / "p").string()).code == 2);
}

TEST_CASE("cli: critical command and manifest") {
    const auto d = fresh("critical");
    const auto r = cli("--out " + d.string() + " critical");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("lambda_c = 0.459224") != std::string::npos);
    const auto j = read_json(d / "critical.json");
    CHECK(j["lambda_c_per_m2_s"].get<double>() == doctest::Approx(0.45922409426328514).epsilon(1e-12));
    CHECK(j["regime"] == "stable");

    const auto m = read_json(d / "manifest.json");
    CHECK(m["status"] == "ok");
    CHECK(m["command"] == "critical");
    CHECK_FALSE(m["finished_at"].is_null());
    const std::string cfg = slurp(d / "config.ini");
    CHECK(m["config_hash"] == "fnv1a64:" + sbdcli::hex64(sbdcli::fnv1a64(cfg)));
    CHECK(ExperimentConfig::parse(cfg) == ExperimentConfig());
    for (const auto& o : m["outputs"]) {
        const std::string body = slurp(d / o["file"].get<std::string>());
        CHECK(o["bytes"].get<std::size_t>() == body.size());
        CHECK(o["fnv1a64"] == sbdcli::hex64(sbdcli::fnv1a64(body)));
    }
    const auto csv = read_csv(d / "critical.csv");
    CHECK(csv[0] == std::vector<std::string>{"lambda_per_m2_s", "lambda_over_lambda_c", "regime"});

    const auto d2 = fresh("critical2");
    REQUIRE(cli("--out " + d2.string() + " --set network.lambda_per_m2_s=0.8 critical").code == 0);
    CHECK(read_json(d2 / "critical.json")["regime"] == "metastable");
    const auto d3 = fresh("critical3");
    REQUIRE(cli("--out " + d3.string() +
                " --set network.lambda_per_m2_s=0.8 --set network.noise_sigma2=2 --set network.inversion=1 critical")
                .code == 0);
    CHECK(read_json(d3 / "critical.json")["regime"] == "unstable");
}

TEST_CASE("cli: output directory from the environment") {
    const auto d = fresh("envdir");
    REQUIRE(cli("critical", "SBD_OUT_DIR=" + d.string()).code == 0);
    CHECK(fs::exists(d / "critical.json"));
    CHECK(fs::exists(d / "manifest.json"));
}

TEST_CASE("cli: sweep-fo with an empty range writes only headers") {
    const auto d = fresh("sweep_empty");
    REQUIRE(cli("--out " + d.string() + " --set fo.sweep_points=0 sweep-fo").code == 0);
    const auto rows = read_csv(d / "sweep_fo.csv");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0][0] == "eta");

    const auto e = fresh("sweep_three");
    REQUIRE(cli("--out " + e.string() + " --set fo.sweep_points=20 --set fo.sweep_eta_list=3,4,5 sweep-fo").code == 0);
    CHECK(read_csv(e / "sweep_fo.csv").size() == 61);
    CHECK(read_json(e / "sweep_fo.json")["curves"].size() == 3);
}

TEST_CASE("cli: solve-fo in the metastable window") {
    const auto d = fresh("solve_fo");
    REQUIRE(cli("--out " + d.string() + " --set network.lambda_per_m2_s=0.8 solve-fo").code == 0);
    const auto rows = read_csv(d / "solve_fo.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][1] == "lower");
    CHECK(rows[2][1] == "upper");
    CHECK(std::stod(rows[1][2]) == doctest::Approx(1.3).epsilon(0.2 / 1.3));
}

TEST_CASE("cli: simulate is byte-reproducible for a fixed seed") {
    const std::string args = " --seed 17 --set sim.horizon_events=20000 --set sim.replicas=2 simulate";
    const auto a = fresh("sim_a"), b = fresh("sim_b");
    REQUIRE(cli("--out " + a.string() + args).code == 0);
    REQUIRE(cli("--out " + b.string() + args).code == 0);
    for (const char* f : {"trace_r000.csv", "trace_r001.csv", "intensity.csv", "conservation.csv", "summary.json"})
        CHECK(slurp(a / f) == slurp(b / f));
    const auto s = read_json(a / "summary.json");
    CHECK(s["n_effective"] == 2);
    CHECK(s["replica_results"][1]["seed"] == 18);
    CHECK(s["replica_results"][0]["diverged"] == false);
    const auto m = read_json(a / "manifest.json");
    CHECK(m["seeds"] == json::array({17, 18}));
    CHECK(read_csv(a / "trace_r000.csv")[0] == std::vector<std::string>{"t_s", "n_users"});

    const auto c = fresh("sim_c");
    REQUIRE(cli("--out " + c.string() + " --seed 18 --set sim.horizon_events=20000 --set sim.replicas=1 simulate")
                .code == 0);
    CHECK(slurp(c / "trace_r000.csv") == slurp(a / "trace_r001.csv"));
}

TEST_CASE("cli: metastable run diverges and is flagged") {
    const auto d = fresh("sim_unstable");
    REQUIRE(cli("--out " + d.string() + " --set network.lambda_per_m2_s=1.0 --set sim.replicas=1 simulate").code == 0);
    const auto s = read_json(d / "summary.json");
    CHECK(s["replica_results"][0]["diverged"] == true);
}

TEST_CASE("cli: every replica failing is an error") {
    const auto d = fresh("sim_fail");
    const auto r = cli("--out " + d.string() + " --set network.lambda_per_m2_s=0 --set sim.mode=discrete simulate");
    CHECK(r.code == 1);
    CHECK(read_json(d / "manifest.json")["status"] == "failed");
    CHECK(read_json(d / "summary.json")["n_effective"] == 0);
}

TEST_CASE("cli: solve-so refusal, non-convergence and success") {
    const auto d = fresh("so_refuse");
    const auto r = cli("--out " + d.string() + " --set network.lambda_per_m2_s=0.5 solve-so");
    CHECK(r.code == 1);
    CHECK(r.err.find("refused") != std::string::npos);

    const auto e = fresh("so_short");
    CHECK(cli("--out " + e.string() + " --set so.max_outer=1 --set so.n_r=16 --set so.n_theta=8 solve-so").code == 3);
    CHECK(fs::exists(e / "so_diagnostics.json"));
    CHECK(read_json(e / "manifest.json")["status"] == "not-converged");

    const auto f = fresh("so_ok");
    REQUIRE(cli("--out " + f.string() + " --set so.n_r=16 --set so.n_theta=8 solve-so").code == 0);
    const auto rows = read_csv(f / "so_conditional.csv");
    CHECK(rows.size() == 17);
    CHECK(rows[0][1] == "origin_observer_per_m2");
    CHECK(read_json(f / "so_summary.json")["status"] == "converged");
}

TEST_CASE("cli: passage tables") {
    const auto d = fresh("passage");
    REQUIRE(cli("--out " + d.string() +
                " --set passage.sigma2_list=1,0.01 --set passage.n_max_users=300 --set passage.sweep_points=8"
                " --set passage.sweep_n_users=2000 passage")
                .code == 0);
    const auto rows = read_csv(d / "passage_table.csv");
    REQUIRE(rows.size() == 1 + 2 * 301);
    for (std::size_t i = 2; i <= 301; ++i) {
        REQUIRE(rows[i][0] == "1");
        CHECK(std::stod(rows[i][4]) == doctest::Approx(std::stod(rows[i][3])).epsilon(1e-12));
    }
    const auto j = read_json(d / "passage.json");
    CHECK(j["tables"][1]["tau_cum_chain_at_n_max"].get<double>() > j["tables"][0]["tau_cum_chain_at_n_max"].get<double>());
    CHECK(j["sweep_fit"]["r2"].get<double>() > 0.9);
    CHECK(read_csv(d / "passage_sweep.csv").size() == 9);
}

TEST_CASE("cli: a preset runs end to end") {
    const auto d = fresh("fig9");
    REQUIRE(cli("--out " + d.string() + " preset fig9").code == 0);
    CHECK(read_json(d / "manifest.json")["command"] == "preset fig9");
    CHECK(read_json(d / "fig9_passage.json")["sweep_fit"]["r2"].get<double>() > 0.99);
}
