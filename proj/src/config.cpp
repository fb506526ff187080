#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "thermocell/experiments.hpp"

namespace thermocell {

namespace {

using boost::property_tree::ptree;

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& path, const std::string& v) {
    const std::string t = trim(v);
    double out = 0.0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size() || !std::isfinite(out))
        throw ConfigError(path + ": expected a number, got '" + v + "'");
    return out;
}

long long parse_int(const std::string& path, const std::string& v) {
    const std::string t = trim(v);
    long long out = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ConfigError(path + ": expected an integer, got '" + v + "'");
    return out;
}

std::uint64_t parse_u64(const std::string& path, const std::string& v) {
    const std::string t = trim(v);
    std::uint64_t out = 0;
    const auto r = std::from_chars(t.data(), t.data() + t.size(), out);
    if (r.ec != std::errc() || r.ptr != t.data() + t.size())
        throw ConfigError(path + ": expected a non-negative integer, got '" + v + "'");
    return out;
}

bool parse_bool(const std::string& path, const std::string& v) {
    const std::string t = trim(v);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError(path + ": expected true or false, got '" + v + "'");
}

int as_int(const std::string& path, const std::string& v) {
    const long long x = parse_int(path, v);
    if (x < INT32_MIN || x > INT32_MAX) throw ConfigError(path + ": integer out of range");
    return static_cast<int>(x);
}

// one section's keys and how each lands in the config
using Setter = std::function<void(ExperimentConfig&, const std::string& path, const std::string& value)>;
using Section = std::map<std::string, Setter>;

#define NUM(field) [](ExperimentConfig& c, const std::string& p, const std::string& v) { c.field = parse_double(p, v); }
#define INT(field) [](ExperimentConfig& c, const std::string& p, const std::string& v) { c.field = as_int(p, v); }
#define BOOL(field) [](ExperimentConfig& c, const std::string& p, const std::string& v) { c.field = parse_bool(p, v); }

struct PendingFit {
    bool any = false;
    double target_rise = 65.0, p_at_target = 0.27, step_time = 10.0, lateral_ratio = kDefaultLateralRatio;
    std::optional<double> c_th, g_amb, g_lat;
    std::optional<double> kp, ki, kd;
    std::optional<double> alpha;
    double ratio_at_cold = 0.97, t_cold = 20.0;
};

}  // namespace

std::uint64_t ExperimentConfig::require_seed() const {
    if (!seed) throw ConfigError("experiment.seed: required for " + experiment);
    return *seed;
}

std::string ExperimentConfig::param(const std::string& key) const {
    auto it = params.find(key);
    if (it != params.end()) return it->second;
    const ExperimentInfo* info = find_experiment(experiment);
    if (info)
        for (const auto& p : info->params)
            if (p.name == key) return p.default_value;
    throw ConfigError("params." + key + ": not a parameter of " + experiment);
}

double ExperimentConfig::num(const std::string& key) const { return parse_double("params." + key, param(key)); }
int ExperimentConfig::integer(const std::string& key) const { return as_int("params." + key, param(key)); }
bool ExperimentConfig::flag(const std::string& key) const { return parse_bool("params." + key, param(key)); }

std::vector<double> ExperimentConfig::list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(param(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (trim(item).empty()) continue;
        out.push_back(parse_double("params." + key, item));
    }
    return out;
}

ExperimentConfig load_config_text(const std::string& text) {
    ptree tree;
    try {
        std::istringstream in(text);
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
    }

    ExperimentConfig cfg;
    PendingFit fit;

    std::map<std::string, Section> schema;
    schema["experiment"] = {
        {"name", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.experiment = trim(v); }},
        {"seed", [](ExperimentConfig& c, const std::string& p, const std::string& v) { c.seed = parse_u64(p, v); }},
        {"output_dir", [](ExperimentConfig& c, const std::string&, const std::string& v) { c.output_dir = trim(v); }},
    };
    schema["array"] = {
        {"rows", INT(array.rows)},
        {"cols", INT(array.cols)},
        {"t_ambient", NUM(array.t_ambient)},
        {"dt", NUM(array.dt)},
        {"ts", NUM(array.ts)},
        {"mismatch", BOOL(array.mismatch_enabled)},
        {"sigma_vbe", NUM(array.mismatch.vbe)},
        {"sigma_r1", NUM(array.mismatch.r1)},
        {"sigma_r2", NUM(array.mismatch.r2)},
        {"sigma_mirror", NUM(array.mismatch.mirror)},
        {"tuning_temperature", NUM(array.tuning_temperature)},
        {"frac_bits", INT(array.frac_bits)},
        {"saturation_warning_s", NUM(array.saturation_warning_s)},
    };
    schema["madc"] = {
        {"n_bits", INT(array.madc.n_bits)},
        {"f_clk", NUM(array.madc.f_clk)},
        {"n1_counts", INT(array.madc.n1_counts)},
        {"t_rd_counts", INT(array.madc.t_rd_counts)},
        {"frame_counts", INT(array.madc.frame_counts)},
        {"c_int", NUM(array.madc.c_int)},
        {"v_full", NUM(array.madc.v_full)},
        {"noise_charge_rms", NUM(array.madc.noise_charge_rms)},
        {"hd2", NUM(array.madc.hd2)},
        {"coeff_bits", INT(array.madc.coeff_bits)},
    };
    schema["device"] = {
        {"vg0", NUM(array.nominal.bjt.vg0)},
        {"n_proc", NUM(array.nominal.bjt.n_proc)},
        {"t_ref", NUM(array.nominal.bjt.t_ref)},
        {"vbe_at_tref", NUM(array.nominal.bjt.vbe_at_tref)},
        {"r1", NUM(array.nominal.cs.r1)},
        {"r2", NUM(array.nominal.cs.r2)},
        {"mirror_ratio", NUM(array.nominal.cs.mirror_ratio)},
        {"bias_current_ratio", NUM(array.nominal.cs.bias_current_ratio)},
        {"trim_code", INT(array.nominal.cs.trim_code)},
        {"trim_step", NUM(array.nominal.cs.trim_step)},
        {"i_trim_bias", NUM(array.nominal.cs.i_trim_bias)},
        {"noise_rms_chopper_off", NUM(array.nominal.cs.noise_rms_chopper_off)},
        {"noise_rms_chopper_on", NUM(array.nominal.cs.noise_rms_chopper_on)},
        {"chopper", BOOL(array.nominal.cs.chopper)},
        {"noise", BOOL(array.nominal.cs.noise_enabled)},
        {"p_max", NUM(array.nominal.heater.p_max)},
        {"alpha", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.alpha = parse_double(p, v); }},
        {"ratio_at_cold", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.ratio_at_cold = parse_double(p, v); }},
        {"t_cold", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.t_cold = parse_double(p, v); }},
    };
    schema["pid"] = {
        {"kp", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.kp = parse_double(p, v); }},
        {"ki", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.ki = parse_double(p, v); }},
        {"kd", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.kd = parse_double(p, v); }},
    };
    schema["pwm"] = {
        {"n_bits", INT(array.pwm.n_bits)},
        {"counter_bits", INT(array.pwm.counter_bits)},
        {"ring_taps", INT(array.pwm.ring_taps)},
        {"clk", NUM(array.pwm.clk)},
        {"t_lsb", NUM(array.pwm.t_lsb)},
        {"duty_min", NUM(array.pwm.duty_min)},
        {"duty_max", NUM(array.pwm.duty_max)},
        {"tap_mismatch_sigma", NUM(array.pwm.tap_mismatch_sigma)},
    };
    auto fit_key = [&fit](double PendingFit::*f) {
        return [&fit, f](ExperimentConfig&, const std::string& p, const std::string& v) {
            fit.*f = parse_double(p, v);
            fit.any = true;
        };
    };
    schema["plant"] = {
        {"target_rise", fit_key(&PendingFit::target_rise)},
        {"p_at_target", fit_key(&PendingFit::p_at_target)},
        {"step_time", fit_key(&PendingFit::step_time)},
        {"lateral_ratio", fit_key(&PendingFit::lateral_ratio)},
        {"c_th", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.c_th = parse_double(p, v); }},
        {"g_amb", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.g_amb = parse_double(p, v); }},
        {"g_lat", [&fit](ExperimentConfig&, const std::string& p, const std::string& v) { fit.g_lat = parse_double(p, v); }},
    };
    schema["traces"] = {
        {"temperature", BOOL(traces.temperature)},
        {"pid", BOOL(traces.pid)},
        {"madc", BOOL(traces.madc)},
        {"every", NUM(traces.every)},
        {"cells",
         [](ExperimentConfig& c, const std::string& p, const std::string& v) {
             c.traces.cells.clear();
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ','))
                 if (!trim(item).empty()) c.traces.cells.push_back(as_int(p, item));
         }},
    };

    // the experiment name decides which [params] keys exist
    for (const auto& [name, sub] : tree) {
        if (!sub.empty() || name == "params") continue;
        throw ConfigError(name + ": keys must live inside a [section]");
    }
    if (auto exp = tree.get_child_optional("experiment")) {
        if (auto n = exp->get_optional<std::string>("name")) cfg.experiment = trim(*n);
    }
    if (cfg.experiment.empty()) throw ConfigError("experiment.name: missing");
    const ExperimentInfo* info = find_experiment(cfg.experiment);
    if (!info) throw ConfigError("experiment.name: unknown experiment '" + cfg.experiment + "'");

    // the PWM's mismatch sigma defaults to the swept value
    cfg.array.pwm.tap_mismatch_sigma = 0.05;

    for (const auto& [section, sub] : tree) {
        if (section == "params") {
            for (const auto& [key, val] : sub) {
                const std::string path = "params." + key;
                if (!val.empty()) throw ConfigError(path + ": nested keys are not allowed");
                bool known = false;
                for (const auto& p : info->params) known = known || p.name == key;
                if (!known) throw ConfigError(path + ": unknown key for experiment " + cfg.experiment);
                cfg.params[key] = trim(val.data());
            }
            continue;
        }
        auto sit = schema.find(section);
        if (sit == schema.end()) throw ConfigError(section + ": unknown section");
        for (const auto& [key, val] : sub) {
            const std::string path = section + "." + key;
            auto kit = sit->second.find(key);
            if (kit == sit->second.end()) throw ConfigError(path + ": unknown key");
            if (!val.empty()) throw ConfigError(path + ": nested keys are not allowed");
            kit->second(cfg, path, val.data());
        }
    }

    // derived pieces
    if (fit.any || !(fit.c_th || fit.g_amb || fit.g_lat)) {
        try {
            cfg.array.plant = fit_defaults(fit.target_rise, fit.p_at_target, fit.step_time, 0.5, fit.lateral_ratio);
        } catch (const FitError& e) {
            throw ConfigError(std::string("plant: ") + e.what());
        }
    }
    if (fit.c_th) cfg.array.plant.c_th = *fit.c_th;
    if (fit.g_amb) cfg.array.plant.g_amb = *fit.g_amb;
    if (fit.g_lat) cfg.array.plant.g_lat = *fit.g_lat;
    if (fit.kp || fit.ki || fit.kd) cfg.array.gains = Gains{fit.kp.value_or(0.0), fit.ki.value_or(0.0), fit.kd.value_or(0.0), 0.0};
    auto& dev = cfg.array.nominal;
    try {
        validate(dev.bjt);
        dev.cs.alpha = 1.0;
        validate(dev.cs);
        validate(dev.heater);
        dev.cs.alpha = fit.alpha ? *fit.alpha : fit_alpha(dev.cs, dev.bjt, to_kelvin(fit.t_cold), fit.ratio_at_cold);
        validate(dev.cs);
        validate(cfg.array);
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    } catch (const FitError& e) {
        throw ConfigError(e.what());
    }
    if (!(cfg.traces.every > 0.0)) throw ConfigError("traces.every: must be positive");
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str());
}

}  // namespace thermocell
