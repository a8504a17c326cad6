// Command-line front end. Talks to the library only through the C API.
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "config.hpp"
#include "sbdnet/sbdnet.h"

namespace fs = std::filesystem;
using nlohmann::json;
using sbdcli::ExperimentConfig;
using sbdcli::format_real;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kNotConverged = 3, kPartial = 4 };

struct CliError : std::runtime_error {
    int exit_code;
    CliError(const std::string& m, int code = kFailure) : std::runtime_error(m), exit_code(code) {}
};

void check(sbd_status s, const std::string& what) {
    if (s != SBD_OK) throw CliError(what + ": " + sbd_status_name(s) + ": " + sbd_last_error());
}

struct FoDeleter {
    void operator()(sbd_fo_model* m) const { sbd_fo_model_destroy(m); }
};
struct SoDeleter {
    void operator()(sbd_so_result* r) const { sbd_so_result_destroy(r); }
};
struct SimDeleter {
    void operator()(sbd_sim_result* r) const { sbd_sim_result_destroy(r); }
};
using FoHandle = std::unique_ptr<sbd_fo_model, FoDeleter>;
using SoHandle = std::unique_ptr<sbd_so_result, SoDeleter>;
using SimHandle = std::unique_ptr<sbd_sim_result, SimDeleter>;

std::string num(double v) { return std::isfinite(v) ? format_real(v) : ""; }

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

template <class Get>
std::vector<double> fetch(Get get, const std::string& what) {
    size_t len = 0;
    check(get(nullptr, 0, &len), what);
    std::vector<double> v(len);
    check(get(v.data(), v.size(), &len), what);
    return v;
}

sbd_params params_of(const ExperimentConfig& c) {
    sbd_params p;
    sbd_params_default(&p);
    p.lambda = c.real("network", "lambda_per_m2_s");
    p.mu = c.real("network", "mu_per_bit");
    p.bandwidth = c.real("network", "bandwidth_hz");
    p.sigma2 = c.has_real("network", "noise_dbm") ? sbd_dbm_to_linear(c.real("network", "noise_dbm"))
                                                   : c.real("network", "noise_sigma2");
    p.inversion = c.real("network", "inversion");
    p.eta = c.real("network", "path_loss_exponent");
    p.radius = c.real("network", "radius_m");
    p.rate_mode = c.text("network", "rate_mode") == "general" ? SBD_RATE_GENERAL : SBD_RATE_LOW_SINR;
    if (sbd_params_validate(&p) != SBD_OK) throw CliError(std::string("config: ") + sbd_last_error(), kUsage);
    return p;
}

sbd_fo_options fo_options_of(const ExperimentConfig& c) {
    sbd_fo_options o;
    o.nbar_min = c.real("fo", "nbar_min_users");
    o.nbar_max = c.real("fo", "nbar_max_users");
    o.grid_points = static_cast<int>(c.integer("fo", "grid_points"));
    o.bracket_tol = c.real("fo", "bracket_tol_users");
    return o;
}

sbd_sim_options sim_options_of(const ExperimentConfig& c) {
    sbd_sim_options o;
    sbd_sim_options_default(&o);
    o.mode = c.text("sim", "mode") == "discrete" ? SBD_SIM_DISCRETE_STEP : SBD_SIM_EXACT_EVENT;
    o.step = c.real("sim", "step_s");
    o.horizon = static_cast<uint64_t>(std::max<int64_t>(0, c.integer("sim", "horizon_events")));
    o.n_bands = static_cast<int>(c.integer("sim", "n_bands"));
    o.seed = static_cast<uint64_t>(c.integer("run", "seed"));
    o.warmup_fraction = c.real("sim", "warmup_fraction");
    o.divergence_threshold = c.real("sim", "divergence_threshold_users");
    o.stop_on_divergence = c.flag("sim", "stop_on_divergence");
    o.snapshot_every = static_cast<uint64_t>(std::max<int64_t>(0, c.integer("sim", "snapshot_every_events")));
    o.n_annuli = static_cast<int>(c.integer("sim", "n_annuli"));
    o.observer_zone = c.real("sim", "observer_zone_fraction");
    return o;
}

std::vector<double> geometric(double lo, double hi, int64_t n) {
    std::vector<double> g;
    if (n <= 0) return g;
    if (n == 1) return {lo};
    for (int64_t k = 0; k < n; ++k) g.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * k / (n - 1)));
    g.back() = hi;
    return g;
}

// One output directory, one manifest. Every file goes through write().
class Run {
public:
    Run(fs::path dir, ExperimentConfig cfg, std::string command, int threads)
        : dir_(std::move(dir)), cfg_(std::move(cfg)), command_(std::move(command)), threads_(threads) {
        const std::string f = cfg_.text("run", "formats");
        csv_ = f.find("csv") != std::string::npos;
        json_ = f.find("json") != std::string::npos;
    }

    const ExperimentConfig& cfg() const { return cfg_; }
    int threads() const { return threads_; }
    bool csv() const { return csv_; }
    bool json_enabled() const { return json_; }

    void begin() {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw CliError("cannot create output directory " + dir_.string() + ": " + ec.message());
        const std::string text = cfg_.serialize();
        manifest_ = {{"tool", "sbdnet"},
                     {"version", sbd_version()},
                     {"command", command_},
                     {"config_hash", "fnv1a64:" + sbdcli::hex64(sbdcli::fnv1a64(text))},
                     {"seed", cfg_.integer("run", "seed")},
                     {"seeds", json::array()},
                     {"threads", threads_},
                     {"started_at", utc_now()},
                     {"finished_at", nullptr},
                     {"status", "running"},
                     {"outputs", json::array()}};
        flush_manifest();
        write("config.ini", text);
    }

    void add_seed(uint64_t s) { manifest_["seeds"].push_back(s); }

    void write(const std::string& name, const std::string& content) {
        const fs::path path = dir_ / name;
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw CliError("cannot write " + path.string());
        f << content;
        f.close();
        if (!f) throw CliError("write failed for " + path.string());
        manifest_["outputs"].push_back({{"file", name},
                                        {"bytes", content.size()},
                                        {"fnv1a64", sbdcli::hex64(sbdcli::fnv1a64(content))}});
    }

    void write_csv(const std::string& name, const std::string& content) {
        if (csv_) write(name, content);
    }
    void write_json(const std::string& name, const json& j) {
        if (json_) write(name, j.dump(2) + "\n");
    }

    void finish(const std::string& status, const std::string& message = "") {
        manifest_["finished_at"] = utc_now();
        manifest_["status"] = status;
        if (!message.empty()) manifest_["message"] = message;
        flush_manifest();
    }

private:
    void flush_manifest() {
        const fs::path path = dir_ / "manifest.json";
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw CliError("cannot write " + path.string());
        f << manifest_.dump(2) << "\n";
    }

    fs::path dir_;
    ExperimentConfig cfg_;
    std::string command_;
    int threads_;
    bool csv_ = true, json_ = true;
    json manifest_;
};

class Csv {
public:
    explicit Csv(std::initializer_list<std::string> header) { row(std::vector<std::string>(header)); }
    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }
    std::string str() const { return out_.str(); }

private:
    std::ostringstream out_;
};

// ---------------------------------------------------------------- critical

int cmd_critical(Run& run, const ExperimentConfig& c, const std::string& prefix) {
    sbd_params p = params_of(c);
    double lc = 0.0;
    check(sbd_critical_rate(&p, &lc), "critical_rate");

    std::vector<double> lambdas = c.reals("critical", "lambda_list_per_m2_s");
    if (lambdas.empty())
        for (double f : {0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0}) lambdas.push_back(f * lc);
    lambdas.insert(lambdas.begin(), p.lambda);

    Csv csv({"lambda_per_m2_s", "lambda_over_lambda_c", "regime"});
    json map = json::array();
    std::optional<double> upper;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        sbd_params q = p;
        q.lambda = lambdas[i];
        sbd_regime r;
        check(sbd_classify_regime(&q, &r), "classify_regime");
        if (r.has_lambda_upper) upper = r.lambda_upper;
        map.push_back({{"lambda_per_m2_s", q.lambda}, {"regime", sbd_regime_name(r.kind)}});
        csv.row({num(q.lambda), num(q.lambda / lc), sbd_regime_name(r.kind)});
    }

    std::cout << "lambda_c = " << format_real(lc) << " users/(m^2 s)\n";
    if (upper) std::cout << "first-order metastable window: (" << format_real(lc) << ", " << format_real(*upper) << ")\n";
    std::cout << "  lambda            lambda/lambda_c   regime\n";
    for (const auto& e : map) {
        const double l = e["lambda_per_m2_s"];
        char line[128];
        std::snprintf(line, sizeof line, "  %-17.6g %-17.6g %s\n", l, l / lc, e["regime"].get<std::string>().c_str());
        std::cout << line;
    }

    json j = {{"lambda_c_per_m2_s", lc},
              {"lambda_per_m2_s", p.lambda},
              {"regime", map[0]["regime"]},
              {"lambda_upper_per_m2_s", upper ? json(*upper) : json(nullptr)},
              {"regime_map", json(std::vector<json>(map.begin() + 1, map.end()))}};
    run.write_json(prefix + "critical.json", j);
    run.write_csv(prefix + "critical.csv", csv.str());
    return kOk;
}

// ---------------------------------------------------------------- first order

std::vector<sbd_fo_solution> fo_solve(const sbd_fo_model* m, double lambda, const sbd_fo_options& o) {
    size_t len = 0;
    sbd_fo_solution buf[2];
    check(sbd_fo_solve(m, lambda, &o, buf, 2, &len), "solve_fixed_point");
    return {buf, buf + len};
}

FoHandle fo_model(const sbd_params& p) {
    sbd_fo_model* m = nullptr;
    check(sbd_fo_model_create(&p, &m), "fo model");
    return FoHandle(m);
}

int cmd_sweep_fo(Run& run, const ExperimentConfig& c, const std::string& prefix) {
    const sbd_params base = params_of(c);
    const auto fo = fo_options_of(c);
    auto etas = c.reals("fo", "sweep_eta_list");
    auto invs = c.reals("fo", "sweep_inversion_list");
    if (etas.empty()) etas = {base.eta};
    if (invs.empty()) invs = {base.inversion};
    const auto grid = geometric(c.real("fo", "sweep_nbar_min_users"), c.real("fo", "sweep_nbar_max_users"),
                                c.integer("fo", "sweep_points"));

    Csv csv({"eta", "inversion", "nbar_users", "lambda_per_m2_s", "lambda_c_per_m2_s", "status"});
    json curves = json::array();
    int failures = 0;
    for (double eta : etas) {
        for (double l : invs) {
            sbd_params p = base;
            p.eta = eta;
            p.inversion = l;
            json curve = {{"eta", eta}, {"inversion", l}};
            double lc = 0.0;
            check(sbd_critical_rate(&p, &lc), "critical_rate");
            curve["lambda_c_per_m2_s"] = lc;
            FoHandle m;
            try {
                m = fo_model(p);
            } catch (const CliError& e) {
                std::cerr << "sweep-fo: eta=" << eta << " l=" << l << ": " << e.what() << "\n";
                curve["error"] = e.what();
                ++failures;
                curves.push_back(curve);
                continue;
            }
            int bad = 0;
            for (double n : grid) {
                double lam = 0.0;
                if (sbd_fo_lambda_of_nbar(m.get(), n, &lam) == SBD_OK) {
                    csv.row({num(eta), num(l), num(n), num(lam), num(lc), "ok"});
                } else {
                    std::cerr << "sweep-fo: eta=" << eta << " l=" << l << " nbar=" << n << ": " << sbd_last_error()
                              << "\n";
                    csv.row({num(eta), num(l), num(n), "", num(lc), "error"});
                    ++bad;
                }
            }
            sbd_fo_window w;
            if (sbd_fo_metastable_window(m.get(), &fo, &w) == SBD_OK && w.has_peak) {
                curve["lambda_upper_per_m2_s"] = w.lambda_upper;
                curve["nbar_peak_users"] = w.nbar_peak;
            }
            try {
                json sols = json::array();
                for (const auto& s : fo_solve(m.get(), p.lambda, fo))
                    sols.push_back({{"nbar_users", s.nbar}, {"branch", s.branch ? "upper" : "lower"}});
                curve["solutions_at_lambda"] = sols;
            } catch (const CliError& e) {
                curve["solutions_error"] = e.what();
            }
            curve["failed_points"] = bad;
            failures += bad;
            curves.push_back(curve);
        }
    }
    run.write_csv(prefix + "sweep_fo.csv", csv.str());
    run.write_json(prefix + "sweep_fo.json", {{"lambda_per_m2_s", base.lambda}, {"curves", curves},
                                              {"failed_points", failures}});
    std::cout << "sweep-fo: " << grid.size() * etas.size() * invs.size() << " points, " << failures << " failures\n";
    return kOk;
}

int cmd_solve_fo(Run& run, const ExperimentConfig& c, const std::string& prefix) {
    const sbd_params p = params_of(c);
    const auto fo = fo_options_of(c);
    auto lambdas = c.reals("fo", "lambda_list_per_m2_s");
    if (lambdas.empty()) lambdas = {p.lambda};
    auto m = fo_model(p);

    Csv csv({"lambda_per_m2_s", "branch", "nbar_users", "z_star", "residual_rel", "degenerate"});
    json rows = json::array();
    std::string error;
    for (double lam : lambdas) {
        try {
            const auto sols = fo_solve(m.get(), lam, fo);
            if (sols.empty()) csv.row({num(lam), "none", "", "", "", ""});
            json js = json::array();
            for (const auto& s : sols) {
                csv.row({num(lam), s.branch ? "upper" : "lower", num(s.nbar), num(s.z_star), num(s.residual),
                         s.degenerate ? "1" : "0"});
                js.push_back({{"branch", s.branch ? "upper" : "lower"}, {"nbar_users", s.nbar},
                              {"z_star", s.z_star}, {"residual_rel", s.residual}, {"degenerate", s.degenerate != 0}});
                std::cout << "lambda=" << format_real(lam) << " " << (s.branch ? "upper" : "lower")
                          << " nbar=" << format_real(s.nbar) << "\n";
            }
            if (sols.empty()) std::cout << "lambda=" << format_real(lam) << " no solution\n";
            rows.push_back({{"lambda_per_m2_s", lam}, {"solutions", js}});
        } catch (const CliError& e) {
            std::cerr << "solve-fo: " << e.what() << "\n";
            rows.push_back({{"lambda_per_m2_s", lam}, {"error", e.what()}});
            if (error.empty()) error = e.what();
        }
    }
    run.write_csv(prefix + "solve_fo.csv", csv.str());
    run.write_json(prefix + "solve_fo.json", {{"eta", p.eta}, {"inversion", p.inversion}, {"results", rows}});
    if (!error.empty()) throw CliError(error);
    return kOk;
}

// ---------------------------------------------------------------- second order

struct SoOutcome {
    int exit = kOk;
    double nbar_so = NAN, nbar_fo = NAN;
};

std::optional<double> read_sim_nbar(const std::string& path) {
    if (path.empty()) return std::nullopt;
    std::ifstream f(path);
    if (!f) throw CliError("cannot read simulation summary " + path, kUsage);
    const json j = json::parse(f, nullptr, false);
    if (j.is_discarded() || !j.contains("nbar_mean_users")) throw CliError(path + ": no nbar_mean_users field", kUsage);
    return j["nbar_mean_users"].get<double>();
}

SoOutcome run_solve_so(Run& run, const ExperimentConfig& c, const std::string& prefix,
                       std::optional<double> nbar_sim) {
    const sbd_params p = params_of(c);
    sbd_so_weights w = {c.real("so", "weight_a"), c.real("so", "weight_b"), c.real("so", "weight_c"),
                        c.real("so", "weight_d")};
    sbd_so_options o;
    o.outer_tol = c.real("so", "outer_tol");
    o.max_outer = static_cast<int>(c.integer("so", "max_outer"));
    o.inner_tol = c.real("so", "inner_tol");
    o.max_inner = static_cast<int>(c.integer("so", "max_inner"));
    o.damping = c.real("so", "damping");
    o.allow_unstable = c.flag("so", "allow_unstable");
    o.divergence_window = 10;

    sbd_so_result* raw = nullptr;
    const sbd_status st = sbd_so_solve(&p, static_cast<int>(c.integer("so", "n_r")),
                                       static_cast<int>(c.integer("so", "n_theta")), &w, &o, &raw);
    if (!raw) throw CliError(std::string("solve_so: ") + sbd_status_name(st) + ": " + sbd_last_error(),
                             st == SBD_ERR_INVALID_ARGUMENT ? kUsage : kFailure);
    const std::string failure = st == SBD_OK ? "" : sbd_last_error();
    SoHandle res(raw);

    sbd_so_summary s;
    check(sbd_so_result_summary(res.get(), &s), "so summary");
    const auto centers = fetch([&](double* b, size_t n, size_t* l) { return sbd_so_result_centers(res.get(), b, n, l); },
                               "so centers");
    const auto g1 = fetch([&](double* b, size_t n, size_t* l) { return sbd_so_result_gamma1(res.get(), b, n, l); },
                          "so gamma1");
    const auto origin = fetch(
        [&](double* b, size_t n, size_t* l) {
            return sbd_so_result_conditional(res.get(), c.real("so", "observer_origin_m"), b, n, l);
        },
        "so conditional");
    const auto edge = fetch(
        [&](double* b, size_t n, size_t* l) {
            return sbd_so_result_conditional(res.get(), c.real("so", "observer_edge_m"), b, n, l);
        },
        "so conditional");

    // first-order intensity on the same grid (lower branch)
    std::vector<double> fo_int(centers.size(), NAN);
    if (p.lambda > 0) {
        auto m = fo_model(p);
        const auto sols = fo_solve(m.get(), p.lambda, fo_options_of(c));
        if (!sols.empty())
            for (std::size_t i = 0; i < centers.size(); ++i) check(sbd_intensity_fo(&p, &sols[0], centers[i], &fo_int[i]), "intensity_fo");
    } else {
        std::fill(fo_int.begin(), fo_int.end(), 0.0);
    }

    Csv f1({"r_m", "gamma1_per_m2", "fo_intensity_per_m2"});
    Csv f2({"r_m", "origin_observer_per_m2", "edge_observer_per_m2", "fo_intensity_per_m2"});
    for (std::size_t i = 0; i < centers.size(); ++i) {
        f1.row({num(centers[i]), num(g1[i]), num(fo_int[i])});
        f2.row({num(centers[i]), num(origin[i]), num(edge[i]), num(fo_int[i])});
    }
    const auto hc = fetch([&](double* b, size_t n, size_t* l) { return sbd_so_result_history(res.get(), 0, b, n, l); }, "history");
    const auto h1 = fetch([&](double* b, size_t n, size_t* l) { return sbd_so_result_history(res.get(), 1, b, n, l); }, "history");
    const auto h2 = fetch([&](double* b, size_t n, size_t* l) { return sbd_so_result_history(res.get(), 2, b, n, l); }, "history");
    Csv fh({"iteration", "change_rel", "residual_gamma1_rel", "residual_gamma2_rel"});
    for (std::size_t i = 0; i < hc.size(); ++i)
        fh.row({std::to_string(i + 1), num(hc[i]), i < h1.size() ? num(h1[i]) : "", i < h2.size() ? num(h2[i]) : ""});
    Csv cmp({"lambda_per_m2_s", "nbar_fo_users", "nbar_so_users", "nbar_sim_users"});
    cmp.row({num(p.lambda), num(s.nbar_fo), num(s.nbar), nbar_sim ? num(*nbar_sim) : ""});

    json summary = {{"lambda_per_m2_s", p.lambda},
                    {"eta", p.eta},
                    {"n_r", s.n_r},
                    {"n_theta", s.n_theta},
                    {"weights", {w.a, w.b, w.c, w.d}},
                    {"status", sbd_so_status_name(s.status)},
                    {"message", sbd_so_result_message(res.get())},
                    {"outer_iterations", s.outer_iterations},
                    {"residual_gamma1_rel", s.residual_gamma1},
                    {"residual_gamma2_rel", s.residual_gamma2},
                    {"nbar_fo_users", s.nbar_fo},
                    {"nbar_so_users", s.nbar},
                    {"nbar_sim_users", nbar_sim ? json(*nbar_sim) : json(nullptr)}};
    if (nbar_sim && *nbar_sim > 0) {
        summary["error_fo_rel"] = std::abs(*nbar_sim - s.nbar_fo) / *nbar_sim;
        summary["error_so_rel"] = std::abs(*nbar_sim - s.nbar) / *nbar_sim;
    }
    run.write_csv(prefix + "so_gamma1.csv", f1.str());
    run.write_csv(prefix + "so_conditional.csv", f2.str());
    run.write_csv(prefix + "so_history.csv", fh.str());
    run.write_csv(prefix + "so_comparison.csv", cmp.str());
    run.write_json(prefix + "so_summary.json", summary);

    SoOutcome out;
    out.nbar_so = s.nbar;
    out.nbar_fo = s.nbar_fo;
    std::cout << "solve-so: " << sbd_so_status_name(s.status) << " after " << s.outer_iterations
              << " iterations, nbar_so=" << format_real(s.nbar) << " nbar_fo=" << format_real(s.nbar_fo) << "\n";
    if (!failure.empty()) {
        // always written, regardless of the formats setting
        run.write(prefix + "so_diagnostics.json", summary.dump(2) + "\n");
        std::cerr << "solve-so: " << failure << "\n";
        out.exit = kNotConverged;
    }
    return out;
}

int cmd_solve_so(Run& run, const ExperimentConfig& c, const std::string& prefix) {
    return run_solve_so(run, c, prefix, read_sim_nbar(c.text("so", "sim_summary_path"))).exit;
}

// ---------------------------------------------------------------- simulation

struct SimBatch {
    std::vector<SimHandle> results;
    std::vector<std::string> errors;
    int n_effective = 0;
    double nbar_mean = NAN, nbar_ci95 = NAN;
};

SimBatch simulate_batch(const sbd_params& p, const sbd_sim_options& o, int replicas, int threads) {
    SimBatch b;
    b.results.resize(replicas);
    b.errors.resize(replicas);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < replicas; i = next++) {
            sbd_sim_options oi = o;
            oi.seed = o.seed + static_cast<uint64_t>(i);
            sbd_sim_result* r = nullptr;
            const sbd_status st = sbd_simulate(&p, &oi, &r);
            if (st == SBD_OK) {
                b.results[i].reset(r);
            } else {
                b.errors[i] = std::string(sbd_status_name(st)) + ": " + sbd_last_error();
            }
        }
    };
    const int nt = std::max(1, std::min(threads, replicas));
    if (nt == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int k = 0; k < nt; ++k) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    std::vector<double> nbars;
    for (const auto& r : b.results) {
        if (!r) continue;
        sbd_sim_summary s;
        check(sbd_sim_result_summary(r.get(), &s), "sim summary");
        nbars.push_back(s.nbar);
    }
    b.n_effective = static_cast<int>(nbars.size());
    if (!nbars.empty()) {
        sbd_mean_ci ci;
        check(sbd_mean_ci_of(nbars.data(), nbars.size(), &ci), "mean_ci");
        b.nbar_mean = ci.mean;
        b.nbar_ci95 = ci.half_width;
    }
    return b;
}

std::vector<double> profile(const sbd_sim_result* r, int which) {
    return fetch([&](double* b, size_t n, size_t* l) { return sbd_sim_result_profile(r, which, b, n, l); }, "profile");
}

int run_simulate(Run& run, const ExperimentConfig& c, const std::string& prefix, SimBatch* keep = nullptr) {
    const sbd_params p = params_of(c);
    const sbd_sim_options o = sim_options_of(c);
    const int replicas = static_cast<int>(c.integer("sim", "replicas"));
    if (replicas < 1) throw CliError("sim.replicas must be >= 1", kUsage);
    for (int i = 0; i < replicas; ++i) run.add_seed(o.seed + static_cast<uint64_t>(i));

    SimBatch b = simulate_batch(p, o, replicas, run.threads());

    json reps = json::array();
    Csv cons({"replica", "seed", "r_inner_m", "r_outer_m", "conservation_error_rel"});
    std::vector<double> edges, inten, orig, edge_obs;
    int counted = 0;
    for (int i = 0; i < replicas; ++i) {
        const uint64_t seed = o.seed + static_cast<uint64_t>(i);
        if (!b.results[i]) {
            std::cerr << "simulate: replica " << i << " (seed " << seed << ") failed: " << b.errors[i] << "\n";
            reps.push_back({{"replica", i}, {"seed", seed}, {"status", "failed"}, {"error", b.errors[i]}});
            continue;
        }
        const sbd_sim_result* r = b.results[i].get();
        sbd_sim_summary s;
        check(sbd_sim_result_summary(r, &s), "sim summary");
        sbd_conservation cv;
        size_t na = 0;
        check(sbd_sim_conservation(r, &p, &cv, nullptr, 0, &na), "conservation");
        std::vector<double> aerr(na);
        check(sbd_sim_conservation(r, &p, &cv, aerr.data(), aerr.size(), &na), "conservation");
        const auto e = profile(r, SBD_PROFILE_EDGES);
        for (std::size_t k = 0; k < aerr.size(); ++k)
            cons.row({std::to_string(i), std::to_string(seed), num(e[k]), num(e[k + 1]), num(aerr[k])});

        if (c.flag("sim", "write_traces")) {
            size_t n = 0;
            check(sbd_sim_result_trace(r, nullptr, nullptr, 0, &n), "trace");
            std::vector<double> t(n);
            std::vector<long> cnt(n);
            check(sbd_sim_result_trace(r, t.data(), cnt.data(), n, &n), "trace");
            Csv tr({"t_s", "n_users"});
            for (size_t k = 0; k < n; ++k) tr.row({num(t[k]), std::to_string(cnt[k])});
            char name[64];
            std::snprintf(name, sizeof name, "trace_r%03d.csv", i);
            run.write_csv(prefix + name, tr.str());
        }

        const auto pi = profile(r, SBD_PROFILE_INTENSITY);
        const auto po = profile(r, SBD_PROFILE_ORIGIN);
        const auto pe = profile(r, SBD_PROFILE_EDGE_OBSERVER);
        if (counted == 0) {
            edges = e;
            inten.assign(pi.size(), 0.0);
            orig.assign(po.size(), 0.0);
            edge_obs.assign(pe.size(), 0.0);
        }
        for (std::size_t k = 0; k < pi.size(); ++k) {
            inten[k] += pi[k];
            orig[k] += po[k];
            edge_obs[k] += pe[k];
        }
        ++counted;

        reps.push_back({{"replica", i},
                        {"seed", seed},
                        {"status", "ok"},
                        {"events", s.events},
                        {"t_end_s", s.t_end},
                        {"t_warm_s", s.t_warm},
                        {"nbar_users", s.nbar},
                        {"final_n_users", s.final_n},
                        {"max_n_users", s.max_n},
                        {"diverged", s.diverged != 0},
                        {"divergence_threshold_users", s.divergence_threshold},
                        {"departures", s.departures},
                        {"conservation_error_rel", cv.defined ? json(cv.aggregate_error) : json(nullptr)},
                        {"conservation_low_confidence", cv.low_confidence != 0}});
    }

    if (counted > 0) {
        for (auto* v : {&inten, &orig, &edge_obs})
            for (double& x : *v) x /= counted;
        // first-order intensity at annulus midpoints when a stable solution exists
        std::vector<double> fo_int(inten.size(), NAN);
        sbd_regime reg;
        if (sbd_classify_regime(&p, &reg) == SBD_OK && reg.kind == SBD_REGIME_STABLE && p.lambda > 0) {
            try {
                auto m = fo_model(p);
                const auto sols = fo_solve(m.get(), p.lambda, fo_options_of(c));
                if (!sols.empty())
                    for (std::size_t k = 0; k < fo_int.size(); ++k)
                        check(sbd_intensity_fo(&p, &sols[0], 0.5 * (edges[k] + edges[k + 1]), &fo_int[k]), "intensity_fo");
            } catch (const CliError& e) {
                std::cerr << "simulate: first-order reference unavailable: " << e.what() << "\n";
            }
        }
        Csv prof({"r_inner_m", "r_outer_m", "intensity_per_m2", "origin_observer_per_m2", "edge_observer_per_m2",
                  "fo_intensity_per_m2"});
        for (std::size_t k = 0; k < inten.size(); ++k)
            prof.row({num(edges[k]), num(edges[k + 1]), num(inten[k]), num(orig[k]), num(edge_obs[k]), num(fo_int[k])});
        run.write_csv(prefix + "intensity.csv", prof.str());
        run.write_csv(prefix + "conservation.csv", cons.str());
    }

    json summary = {{"lambda_per_m2_s", p.lambda},
                    {"eta", p.eta},
                    {"mode", c.text("sim", "mode")},
                    {"n_bands", o.n_bands},
                    {"replicas", replicas},
                    {"n_effective", b.n_effective},
                    {"nbar_mean_users", b.n_effective ? json(b.nbar_mean) : json(nullptr)},
                    {"nbar_ci95_users", b.n_effective > 1 ? json(b.nbar_ci95) : json(nullptr)},
                    {"replica_results", reps}};
    // the summary feeds solve-so comparisons, so it is written whatever the formats say
    run.write(prefix + "summary.json", summary.dump(2) + "\n");

    std::cout << "simulate: " << b.n_effective << "/" << replicas << " replicas";
    if (b.n_effective) std::cout << ", nbar = " << format_real(b.nbar_mean);
    std::cout << "\n";
    if (b.n_effective == 0) throw CliError("simulate: every replica failed");
    const int rc = b.n_effective < replicas ? kPartial : kOk;
    if (keep) *keep = std::move(b);
    return rc;
}

int cmd_simulate(Run& run, const ExperimentConfig& c, const std::string& prefix) {
    return run_simulate(run, c, prefix);
}

// ---------------------------------------------------------------- passage

int cmd_passage(Run& run, const ExperimentConfig& c, const std::string& prefix) {
    const sbd_params p = params_of(c);
    const double eps = c.real("passage", "epsilon");
    const long n_max = static_cast<long>(c.integer("passage", "n_max_users"));
    const long closed_max = static_cast<long>(c.integer("passage", "closed_form_max_users"));
    const auto sigmas = c.reals("passage", "sigma2_list");
    double secs = 0.0;
    check(sbd_chain_seconds(&p, &secs), "chain_seconds");
    if (n_max < 1) throw CliError("passage.n_max_users must be >= 1", kUsage);

    Csv table({"sigma2", "n_users", "tau_step_chain", "tau_cum_chain", "tau_cum_closed_chain", "tau_cum_s"});
    json per = json::array();
    for (double s2 : sigmas) {
        std::vector<double> step(n_max), cum(n_max + 1);
        check(sbd_passage_table(n_max, eps, s2, step.data(), cum.data()), "passage_table");
        double closed_running = 0.0;
        for (long n = 0; n <= n_max; ++n) {
            std::string closed;
            if (n >= 1 && s2 == 1.0) {
                double v = 0.0;
                check(sbd_tau_cum_unit_noise(n, eps, &v), "tau_cum_unit_noise");
                closed = num(v);
            } else if (n >= 1 && n <= closed_max) {
                double v = 0.0;
                check(sbd_tau_step_closed(n - 1, eps, s2, &v), "tau_step_closed");
                closed_running += v;
                closed = num(closed_running);
            } else if (n == 0) {
                closed = "0";
            }
            table.row({num(s2), std::to_string(n), n < n_max ? num(step[n]) : "", num(cum[n]), closed,
                       num(cum[n] * secs)});
        }
        int has = 0;
        long bound = 0;
        check(sbd_drift_bound(eps, s2, &has, &bound), "drift_bound");
        per.push_back({{"sigma2", s2},
                       {"tau_cum_chain_at_n_max", cum[n_max]},
                       {"tau_cum_s_at_n_max", cum[n_max] * secs},
                       {"tau_step_chain_at_n_max", step[n_max - 1]},
                       {"drift_bound_users", has ? json(bound) : json(nullptr)}});
    }

    const long sweep_n = static_cast<long>(c.integer("passage", "sweep_n_users"));
    const auto grid = geometric(c.real("passage", "sweep_sigma2_min"), c.real("passage", "sweep_sigma2_max"),
                                c.integer("passage", "sweep_points"));
    json fit_json = nullptr;
    Csv sweep({"sigma2", "inv_sigma2", "tau_cum_chain"});
    if (grid.size() >= 2) {
        std::vector<double> tau(grid.size());
        sbd_linear_fit fit;
        check(sbd_tau_sigma_sweep(sweep_n, eps, grid.data(), grid.size(), tau.data(), &fit), "tau_sigma_sweep");
        for (std::size_t i = 0; i < grid.size(); ++i) sweep.row({num(grid[i]), num(1.0 / grid[i]), num(tau[i])});
        fit_json = {{"slope_chain", fit.slope}, {"intercept_chain", fit.intercept}, {"r2", fit.r2}};
        std::cout << "passage: sweep n=" << sweep_n << " slope=" << format_real(fit.slope)
                  << " r2=" << format_real(fit.r2) << "\n";
    }
    run.write_csv(prefix + "passage_table.csv", table.str());
    run.write_csv(prefix + "passage_sweep.csv", sweep.str());
    run.write_json(prefix + "passage.json", {{"epsilon", eps},
                                             {"n_max_users", n_max},
                                             {"seconds_per_chain_unit", secs},
                                             {"tables", per},
                                             {"sweep_n_users", sweep_n},
                                             {"sweep_fit", fit_json}});
    for (const auto& e : per)
        std::cout << "passage: sigma2=" << format_real(e["sigma2"]) << " E[tau_0,n_max]="
                  << format_real(e["tau_cum_chain_at_n_max"]) << "\n";
    return kOk;
}

// ---------------------------------------------------------------- presets

ExperimentConfig with(ExperimentConfig c, std::initializer_list<std::pair<const char*, std::string>> kv) {
    for (const auto& [k, v] : kv) c.apply_override(std::string(k) + "=" + v);
    return c;
}

int worst(int a, int b) { return a == kOk ? b : a; }

std::string tag(double eta, double lambda) { return "eta" + num(eta) + "_lambda" + num(lambda) + "_"; }

// Figures 2 and 3: simulated vs approximate nbar over an arrival-rate grid.
int preset_nbar_curves(Run& run, const ExperimentConfig& base, const std::string& fig, bool with_so) {
    const std::vector<std::pair<double, std::vector<double>>> curves = {
        {4.0, {0.1, 0.2, 0.3, 0.35, 0.4, 0.425}}, {5.0, {0.1, 0.2, 0.3, 0.35, 0.4}}};
    Csv csv({"eta", "lambda_per_m2_s", "nbar_fo_users", "nbar_so_users", "so_status", "nbar_sim_users",
             "nbar_sim_ci95_users", "n_effective"});
    int rc = kOk;
    for (const auto& [eta, lambdas] : curves) {
        for (double lam : lambdas) {
            const auto c = with(base, {{"network.path_loss_exponent", num(eta)},
                                       {"network.lambda_per_m2_s", num(lam)},
                                       {"sim.write_traces", "false"}});
            const std::string pre = fig + "_" + tag(eta, lam);
            double nbar_fo = NAN;
            try {
                const sbd_params p = params_of(c);
                auto m = fo_model(p);
                const auto sols = fo_solve(m.get(), lam, fo_options_of(c));
                if (!sols.empty()) nbar_fo = sols[0].nbar;
            } catch (const CliError& e) {
                std::cerr << fig << ": first order at eta=" << eta << " lambda=" << lam << ": " << e.what() << "\n";
                rc = worst(rc, kFailure);
            }
            SimBatch b;
            try {
                rc = worst(rc, run_simulate(run, c, pre, &b));
            } catch (const CliError& e) {
                std::cerr << fig << ": " << e.what() << "\n";
                rc = worst(rc, kFailure);
            }
            const std::optional<double> sim = b.n_effective ? std::optional<double>(b.nbar_mean) : std::nullopt;
            double nbar_so = NAN;
            std::string so_status = "skipped";
            if (with_so) {
                try {
                    const auto o = run_solve_so(run, c, pre, sim);
                    nbar_so = o.nbar_so;
                    so_status = o.exit == kOk ? "converged" : "not-converged";
                    rc = worst(rc, o.exit);
                } catch (const CliError& e) {
                    std::cerr << fig << ": " << e.what() << "\n";
                    so_status = "failed";
                    rc = worst(rc, kFailure);
                }
            }
            csv.row({num(eta), num(lam), num(nbar_fo), num(nbar_so), so_status, sim ? num(*sim) : "",
                     b.n_effective > 1 ? num(b.nbar_ci95) : "", std::to_string(b.n_effective)});
        }
    }
    run.write(fig + "_nbar.csv", csv.str());
    return rc;
}

int preset(Run& run, const ExperimentConfig& base, const std::string& fig) {
    if (fig == "fig1") {
        int rc = cmd_sweep_fo(run, with(base, {{"fo.sweep_eta_list", "3,4,5"}, {"fo.sweep_inversion_list", "0"}}),
                              "fig1a_");
        return worst(rc, cmd_sweep_fo(run, with(base, {{"fo.sweep_eta_list", "5"},
                                                        {"fo.sweep_inversion_list", "0,0.5,1"}}),
                                      "fig1b_"));
    }
    if (fig == "fig2") return preset_nbar_curves(run, base, "fig2", false);
    if (fig == "fig3") return preset_nbar_curves(run, base, "fig3", true);
    if (fig == "fig4") {
        const auto c = with(base, {{"network.path_loss_exponent", "4"}, {"network.lambda_per_m2_s", "0.425"},
                                   {"sim.write_traces", "false"}});
        SimBatch b;
        const int rc = run_simulate(run, c, "fig4_sim_", &b);
        return worst(rc, run_solve_so(run, c, "fig4_", b.nbar_mean).exit);
    }
    if (fig == "fig5") {
        // just above lambda_c, inside the first-order window: long plateau, then escape
        const auto c = with(base, {{"network.path_loss_exponent", "4"},
                                   {"network.lambda_per_m2_s", "0.495"},
                                   {"sim.horizon_events", "6000000"},
                                   {"sim.stop_on_divergence", "false"},
                                   {"sim.snapshot_every_events", "5000"}});
        return run_simulate(run, c, "fig5_");
    }
    if (fig == "fig6") {
        const auto c = with(base, {{"network.path_loss_exponent", "4"},
                                   {"network.inversion", "0"},
                                   {"network.lambda_per_m2_s", "0.8"},
                                   {"fo.sweep_eta_list", ""},
                                   {"fo.sweep_inversion_list", ""},
                                   {"fo.sweep_nbar_min_users", "0.05"},
                                   {"fo.sweep_nbar_max_users", "100"},
                                   {"fo.lambda_list_per_m2_s", ""}});
        return worst(cmd_sweep_fo(run, c, "fig6_"), cmd_solve_fo(run, c, "fig6_"));
    }
    if (fig == "fig7" || fig == "fig8") {
        const auto c = with(base, {{"passage.epsilon", "0.01"},
                                   {"passage.sigma2_list", "0.01,11"},
                                   {"passage.n_max_users", "30000"},
                                   {"passage.sweep_points", "0"}});
        return cmd_passage(run, c, fig + "_");
    }
    if (fig == "fig9") {
        const auto c = with(base, {{"passage.epsilon", "0.01"},
                                   {"passage.sigma2_list", ""},
                                   {"passage.sweep_n_users", "20000"},
                                   {"passage.sweep_sigma2_min", "0.0001"},
                                   {"passage.sweep_sigma2_max", "0.1"}});
        return cmd_passage(run, c, "fig9_");
    }
    throw CliError("unknown preset '" + fig + "' (expected fig1 .. fig9)", kUsage);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Spatial birth-death network model: solvers, simulator and passage times"};
    app.set_version_flag("--version", std::string(sbd_version()));
    app.require_subcommand(1);

    std::string config_path, out_dir, fig;
    std::vector<std::string> sets;
    std::optional<uint64_t> seed;
    int threads = 1;
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "base seed (replica i uses seed + i)");
    app.add_option("--out", out_dir, "output directory (default: run.output_dir, $SBD_OUT_DIR, ./sbdnet_out)");
    app.add_option("--set", sets, "override, section.key=value (repeatable)");
    app.add_option("--threads", threads, "replica threads")->check(CLI::PositiveNumber);

    struct Cmd {
        const char* name;
        const char* help;
    };
    const Cmd cmds[] = {{"critical", "critical arrival rate and regime map"},
                        {"sweep-fo", "lambda(nbar) curves of the first-order approximation"},
                        {"solve-fo", "first-order fixed points"},
                        {"solve-so", "second-order fixed point and conditional intensities"},
                        {"simulate", "replicated simulation runs"},
                        {"passage", "mean first-passage tables and the noise sweep"},
                        {"preset", "plot-ready data for one figure (fig1 .. fig9)"}};
    std::string chosen;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->fallthrough();
        if (std::string(c.name) == "preset") sub->add_option("figure", fig, "fig1 .. fig9")->required();
        sub->callback([&chosen, name = c.name] { chosen = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    ExperimentConfig cfg;
    try {
        if (!config_path.empty()) cfg = ExperimentConfig::load(config_path);
        for (const auto& s : sets) cfg.apply_override(s);
        if (seed) cfg.set("run", "seed", std::to_string(*seed));
        params_of(cfg);
    } catch (const sbdcli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const CliError& e) {
        std::cerr << e.what() << "\n";
        return e.exit_code;
    }

    fs::path dir = out_dir;
    if (dir.empty()) dir = cfg.text("run", "output_dir");
    if (dir.empty()) {
        const char* env = std::getenv("SBD_OUT_DIR");
        dir = env && *env ? env : "sbdnet_out";
    }

    const std::string command = chosen == "preset" ? "preset " + fig : chosen;
    Run run(dir, cfg, command, threads);
    int rc = kOk;
    try {
        run.begin();
        if (chosen == "critical") rc = cmd_critical(run, cfg, "");
        else if (chosen == "sweep-fo") rc = cmd_sweep_fo(run, cfg, "");
        else if (chosen == "solve-fo") rc = cmd_solve_fo(run, cfg, "");
        else if (chosen == "solve-so") rc = cmd_solve_so(run, cfg, "");
        else if (chosen == "simulate") rc = cmd_simulate(run, cfg, "");
        else if (chosen == "passage") rc = cmd_passage(run, cfg, "");
        else rc = preset(run, cfg, fig);
        run.finish(rc == kOk ? "ok" : rc == kPartial ? "partial" : rc == kNotConverged ? "not-converged" : "failed");
    } catch (const CliError& e) {
        std::cerr << "error: " << e.what() << "\n";
        try {
            run.finish("failed", e.what());
        } catch (...) {
        }
        return e.exit_code;
    } catch (const sbdcli::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        try {
            run.finish("failed", e.what());
        } catch (...) {
        }
        return kUsage;
    }
    return rc;
}
