#include "config.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace sbdcli {

const std::vector<KeySpec>& schema() {
    static const std::vector<KeySpec> s = {
        {"network", "lambda_per_m2_s", Kind::Real, "0.3", nullptr},
        {"network", "mu_per_bit", Kind::Real, "0.01", nullptr},
        {"network", "bandwidth_hz", Kind::Real, "1000000", nullptr},
        {"network", "noise_sigma2", Kind::Real, "1e-08", nullptr},
        {"network", "noise_dbm", Kind::OptReal, "", nullptr},  // overrides noise_sigma2 when set
        {"network", "inversion", Kind::Real, "0", nullptr},
        {"network", "path_loss_exponent", Kind::Real, "4", nullptr},
        {"network", "radius_m", Kind::Real, "100", nullptr},
        {"network", "rate_mode", Kind::Text, "low-sinr", "low-sinr|general"},

        {"run", "seed", Kind::Int, "1", nullptr},
        {"run", "output_dir", Kind::Text, "", nullptr},
        {"run", "formats", Kind::Text, "csv,json", nullptr},

        {"critical", "lambda_list_per_m2_s", Kind::RealList, "", nullptr},

        {"fo", "nbar_min_users", Kind::Real, "0.0001", nullptr},
        {"fo", "nbar_max_users", Kind::Real, "10000", nullptr},
        {"fo", "grid_points", Kind::Int, "400", nullptr},
        {"fo", "bracket_tol_users", Kind::Real, "1e-08", nullptr},
        {"fo", "lambda_list_per_m2_s", Kind::RealList, "", nullptr},
        {"fo", "sweep_nbar_min_users", Kind::Real, "0.01", nullptr},
        {"fo", "sweep_nbar_max_users", Kind::Real, "1000", nullptr},
        {"fo", "sweep_points", Kind::Int, "200", nullptr},
        {"fo", "sweep_eta_list", Kind::RealList, "", nullptr},
        {"fo", "sweep_inversion_list", Kind::RealList, "", nullptr},

        {"so", "n_r", Kind::Int, "32", nullptr},
        {"so", "n_theta", Kind::Int, "16", nullptr},
        {"so", "weight_a", Kind::Real, "0", nullptr},
        {"so", "weight_b", Kind::Real, "0.5", nullptr},
        {"so", "weight_c", Kind::Real, "0.5", nullptr},
        {"so", "weight_d", Kind::Real, "0", nullptr},
        {"so", "outer_tol", Kind::Real, "1e-05", nullptr},
        {"so", "max_outer", Kind::Int, "200", nullptr},
        {"so", "inner_tol", Kind::Real, "1e-10", nullptr},
        {"so", "max_inner", Kind::Int, "500", nullptr},
        {"so", "damping", Kind::Real, "0.5", nullptr},
        {"so", "allow_unstable", Kind::Bool, "false", nullptr},
        {"so", "observer_origin_m", Kind::Real, "0", nullptr},
        {"so", "observer_edge_m", Kind::Real, "100", nullptr},
        {"so", "sim_summary_path", Kind::Text, "", nullptr},

        {"sim", "mode", Kind::Text, "exact", "exact|discrete"},
        {"sim", "step_s", Kind::Real, "0", nullptr},
        {"sim", "horizon_events", Kind::Int, "1000000", nullptr},
        {"sim", "n_bands", Kind::Int, "1", nullptr},
        {"sim", "replicas", Kind::Int, "3", nullptr},
        {"sim", "warmup_fraction", Kind::Real, "0.2", nullptr},
        {"sim", "divergence_threshold_users", Kind::Real, "0", nullptr},
        {"sim", "stop_on_divergence", Kind::Bool, "true", nullptr},
        {"sim", "snapshot_every_events", Kind::Int, "1000", nullptr},
        {"sim", "n_annuli", Kind::Int, "32", nullptr},
        {"sim", "observer_zone_fraction", Kind::Real, "0.25", nullptr},
        {"sim", "write_traces", Kind::Bool, "true", nullptr},

        {"passage", "epsilon", Kind::Real, "0.01", nullptr},
        {"passage", "n_max_users", Kind::Int, "30000", nullptr},
        {"passage", "sigma2_list", Kind::RealList, "0.01,11", nullptr},
        {"passage", "closed_form_max_users", Kind::Int, "2000", nullptr},
        {"passage", "sweep_n_users", Kind::Int, "20000", nullptr},
        {"passage", "sweep_sigma2_min", Kind::Real, "0.0001", nullptr},
        {"passage", "sweep_sigma2_max", Kind::Real, "0.1", nullptr},
        {"passage", "sweep_points", Kind::Int, "25", nullptr},
    };
    return s;
}

std::string format_real(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

const KeySpec* find_spec(const std::string& section, const std::string& key) {
    for (const auto& k : schema())
        if (section == k.section && key == k.key) return &k;
    return nullptr;
}

double parse_real(const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("'" + s + "' is not a finite number");
    return v;
}

Value parse_value(const KeySpec& k, const std::string& raw) {
    const std::string s = trim(raw);
    switch (k.kind) {
        case Kind::Real: return parse_real(s);
        case Kind::OptReal:
            if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
            return parse_real(s);
        case Kind::Int: {
            std::int64_t v = 0;
            const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
            if (r.ec == std::errc() && r.ptr == s.data() + s.size()) return v;
            // accept integral scientific notation such as 1e6
            const double d = parse_real(s);
            if (d != std::floor(d) || std::abs(d) > 9007199254740992.0)
                throw ConfigError("'" + s + "' is not an integer");
            return static_cast<std::int64_t>(d);
        }
        case Kind::Bool:
            if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
            if (s == "false" || s == "0" || s == "no" || s == "off") return false;
            throw ConfigError("'" + s + "' is not a boolean");
        case Kind::Text:
            if (k.choices) {
                const std::string c = std::string("|") + k.choices + "|";
                if (s.empty() || c.find("|" + s + "|") == std::string::npos)
                    throw ConfigError("'" + s + "' is not one of " + k.choices);
            }
            return s;
        case Kind::RealList: {
            std::vector<double> out;
            if (s.empty()) return out;
            std::stringstream ss(s);
            std::string item;
            while (std::getline(ss, item, ',')) out.push_back(parse_real(trim(item)));
            return out;
        }
    }
    throw ConfigError("unhandled key kind");
}

std::string render(const KeySpec& k, const Value& v) {
    switch (k.kind) {
        case Kind::Real: return format_real(std::get<double>(v));
        case Kind::OptReal: {
            const double d = std::get<double>(v);
            return std::isnan(d) ? "" : format_real(d);
        }
        case Kind::Int: return std::to_string(std::get<std::int64_t>(v));
        case Kind::Bool: return std::get<bool>(v) ? "true" : "false";
        case Kind::Text: return std::get<std::string>(v);
        case Kind::RealList: {
            std::string out;
            for (double d : std::get<std::vector<double>>(v)) {
                if (!out.empty()) out += ",";
                out += format_real(d);
            }
            return out;
        }
    }
    return "";
}

bool same(const Value& a, const Value& b) {
    // NaN marks an unset OptReal; treat two unset values as equal
    if (std::holds_alternative<double>(a) && std::holds_alternative<double>(b)) {
        const double x = std::get<double>(a), y = std::get<double>(b);
        return (std::isnan(x) && std::isnan(y)) || x == y;
    }
    return a == b;
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
    for (const auto& k : schema()) values_[std::string(k.section) + "." + k.key] = parse_value(k, k.fallback);
}

ExperimentConfig ExperimentConfig::parse(const std::string& text, const std::string& origin) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw ConfigError(where + "unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            bool known = false;
            for (const auto& k : schema()) known = known || section == k.section;
            if (!known) throw ConfigError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside any section");
        const std::string key = trim(t.substr(0, eq));
        try {
            c.set(section, key, t.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

void ExperimentConfig::set(const std::string& section, const std::string& key, const std::string& value) {
    const KeySpec* k = find_spec(section, key);
    if (!k) throw ConfigError("unknown key " + section + "." + key);
    try {
        values_[section + "." + key] = parse_value(*k, value);
    } catch (const ConfigError& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
    }
}

void ExperimentConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("--set expects section.key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)), assignment.substr(eq + 1));
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    for (const auto& [k, v] : values_)
        if (!same(v, o.values_.at(k))) return false;
    return true;
}

std::string ExperimentConfig::serialize() const {
    std::string out, section;
    for (const auto& k : schema()) {
        if (section != k.section) {
            if (!section.empty()) out += "\n";
            section = k.section;
            out += "[" + section + "]\n";
        }
        const std::string v = render(k, values_.at(section + "." + k.key));
        out += std::string(k.key) + " =" + (v.empty() ? "" : " " + v) + "\n";
    }
    return out;
}

const Value& ExperimentConfig::get(const std::string& section, const std::string& key, Kind want) const {
    const KeySpec* k = find_spec(section, key);
    if (!k) throw ConfigError("unknown key " + section + "." + key);
    if (k->kind != want && !(k->kind == Kind::OptReal && want == Kind::Real))
        throw ConfigError(section + "." + key + " read with the wrong type");
    return values_.at(section + "." + key);
}

double ExperimentConfig::real(const std::string& s, const std::string& k) const {
    const double v = std::get<double>(get(s, k, Kind::Real));
    if (std::isnan(v)) throw ConfigError(s + "." + k + " is not set");
    return v;
}

bool ExperimentConfig::has_real(const std::string& s, const std::string& k) const {
    return !std::isnan(std::get<double>(get(s, k, Kind::Real)));
}

std::int64_t ExperimentConfig::integer(const std::string& s, const std::string& k) const {
    return std::get<std::int64_t>(get(s, k, Kind::Int));
}

bool ExperimentConfig::flag(const std::string& s, const std::string& k) const {
    return std::get<bool>(get(s, k, Kind::Bool));
}

const std::string& ExperimentConfig::text(const std::string& s, const std::string& k) const {
    return std::get<std::string>(get(s, k, Kind::Text));
}

const std::vector<double>& ExperimentConfig::reals(const std::string& s, const std::string& k) const {
    return std::get<std::vector<double>>(get(s, k, Kind::RealList));
}

}  // namespace sbdcli
