#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "thermocell/array.hpp"

namespace thermocell {

struct ParamSpec {
    std::string name;
    std::string default_value;
    std::string help;
};

struct ExperimentInfo {
    std::string name;
    std::string figure;   // figure anchor the experiment reproduces
    std::string description;
    bool stochastic = true;
    std::vector<ParamSpec> params;
};

const std::vector<ExperimentInfo>& experiment_catalog();
const ExperimentInfo* find_experiment(const std::string& name);
std::string catalog_text();

struct TraceOptions {
    bool temperature = true;
    bool pid = false;
    bool madc = false;
    double every = 0.5;        // s, temperature trace decimation
    std::vector<int> cells;    // empty: all cells for temperature, cell 0 for pid/madc
};

struct ExperimentConfig {
    std::string experiment;
    std::optional<std::uint64_t> seed;
    std::string output_dir = "out";
    ArrayConfig array;
    std::map<std::string, std::string> params;  // only keys the experiment declares
    TraceOptions traces;

    std::uint64_t require_seed() const;
    std::string param(const std::string& key) const;  // falls back to the catalog default
    double num(const std::string& key) const;
    int integer(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> list(const std::string& key) const;
};

// Strict INI loader: unknown sections or keys raise ConfigError naming the
// key path.
ExperimentConfig load_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

struct Check {
    std::string name;
    double value = 0.0;
    double bound = 0.0;
    std::string relation;  // "<=", ">=", "==", "in"
    double bound_hi = 0.0; // for "in"
    bool pass = false;
};

struct ExperimentResult {
    std::string experiment;
    std::uint64_t seed = 0;
    std::vector<Check> checks;
    std::vector<std::pair<std::string, double>> metrics;
    std::vector<std::pair<std::string, std::string>> files;  // name, CSV content

    bool pass() const;
    std::string summary_json() const;
    const Check* find(const std::string& name) const;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes every CSV plus summary.json. Nothing is written unless the
// experiment finished.
void write_outputs(const ExperimentResult& r, const std::string& dir);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace thermocell
