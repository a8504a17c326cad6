#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sbdcli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Kind { Real, OptReal, Int, Bool, Text, RealList };

struct KeySpec {
    const char* section;
    const char* key;
    Kind kind;
    const char* fallback;
    const char* choices;  // '|'-separated for closed Text keys, else nullptr
};

const std::vector<KeySpec>& schema();

using Value = std::variant<double, std::int64_t, bool, std::string, std::vector<double>>;

// Sectioned key = value text. Every key of the schema is always present, so
// serialize() is canonical and parse(serialize(c)) == c.
class ExperimentConfig {
public:
    ExperimentConfig();

    static ExperimentConfig parse(const std::string& text, const std::string& origin = "<config>");
    static ExperimentConfig load(const std::string& path);

    // "section.key=value"
    void apply_override(const std::string& assignment);
    void set(const std::string& section, const std::string& key, const std::string& value);
    std::string serialize() const;

    double real(const std::string& section, const std::string& key) const;
    bool has_real(const std::string& section, const std::string& key) const;  // OptReal set?
    std::int64_t integer(const std::string& section, const std::string& key) const;
    bool flag(const std::string& section, const std::string& key) const;
    const std::string& text(const std::string& section, const std::string& key) const;
    const std::vector<double>& reals(const std::string& section, const std::string& key) const;

    bool operator==(const ExperimentConfig& o) const;

private:
    const Value& get(const std::string& section, const std::string& key, Kind want) const;
    std::map<std::string, Value> values_;
};

std::string format_real(double v);
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace sbdcli
