#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "thermocell.h"
#include "thermocell/experiments.hpp"

using namespace thermocell;

struct tc_array {
    std::unique_ptr<CellArray> impl;
};

namespace {

thread_local std::string g_error;

tc_status fail(tc_status s, const std::string& msg) {
    g_error = msg;
    return s;
}

template <class F>
tc_status guard(F&& f) {
    try {
        g_error.clear();
        return f();
    } catch (const ConfigError& e) {
        return fail(TC_ERR_CONFIG, e.what());
    } catch (const DomainError& e) {
        return fail(TC_ERR_DOMAIN, e.what());
    } catch (const CalibrationError& e) {
        return fail(TC_ERR_CALIBRATION, e.what());
    } catch (const FitError& e) {
        return fail(TC_ERR_FIT, e.what());
    } catch (const MeasurementError& e) {
        return fail(TC_ERR_MEASUREMENT, e.what());
    } catch (const std::out_of_range& e) {
        return fail(TC_ERR_DOMAIN, e.what());
    } catch (const std::exception& e) {
        return fail(TC_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(TC_ERR_INTERNAL, "unknown error");
    }
}

bool valid_cell(const tc_array* a, int cell) { return cell >= 0 && cell < a->impl->size(); }

}  // namespace

extern "C" {

const char* tc_last_error(void) { return g_error.c_str(); }

const char* tc_version(void) { return "1.0.0"; }

tc_status tc_list_experiments(char* buf, size_t cap, size_t* needed) {
    return guard([&] {
        const std::string text = catalog_text();
        if (needed) *needed = text.size() + 1;
        if (!buf) return needed ? TC_OK : fail(TC_ERR_NULL, "list: buf and needed are both null");
        if (cap < text.size() + 1) return fail(TC_ERR_DOMAIN, "list: buffer too small");
        std::memcpy(buf, text.c_str(), text.size() + 1);
        return TC_OK;
    });
}

tc_status tc_run_config_file(const char* path, const tc_run_options* opt, int* all_pass) {
    if (!path || !all_pass) return fail(TC_ERR_NULL, "run: null argument");
    return guard([&] {
        ExperimentConfig cfg = load_config_file(path);
        std::string out = cfg.output_dir;
        if (const char* env = std::getenv("SIM_OUT_DIR"); env && *env) out = env;
        if (opt && opt->out_dir && *opt->out_dir) out = opt->out_dir;
        if (opt && opt->has_seed) cfg.seed = opt->seed;
        const ExperimentResult r = run_experiment(cfg);
        try {
            write_outputs(r, out);
        } catch (const std::exception& e) {
            return fail(TC_ERR_IO, e.what());
        }
        *all_pass = r.pass() ? 1 : 0;
        return TC_OK;
    });
}

tc_status tc_array_create(const char* config_text, uint64_t seed, tc_array** out) {
    if (!out) return fail(TC_ERR_NULL, "create: null output");
    *out = nullptr;
    return guard([&] {
        std::string text = config_text ? config_text : "";
        // the loader insists on an experiment; arrays do not need one
        if (text.find("[experiment]") == std::string::npos) text = "[experiment]\nname = regulation_steps\n" + text;
        ExperimentConfig cfg = load_config_text(text);
        ArrayConfig ac = cfg.array;
        ac.seed = seed;
        auto h = std::make_unique<tc_array>();
        h->impl = std::make_unique<CellArray>(ac);
        *out = h.release();
        return TC_OK;
    });
}

void tc_array_destroy(tc_array* a) { delete a; }

tc_status tc_array_shape(const tc_array* a, int* rows, int* cols) {
    if (!a || !rows || !cols) return fail(TC_ERR_NULL, "shape: null argument");
    *rows = a->impl->config().rows;
    *cols = a->impl->config().cols;
    return TC_OK;
}

tc_status tc_array_time(const tc_array* a, double* seconds) {
    if (!a || !seconds) return fail(TC_ERR_NULL, "time: null argument");
    *seconds = a->impl->time();
    return TC_OK;
}

tc_status tc_array_force_temperature(tc_array* a, double t_c) {
    if (!a) return fail(TC_ERR_NULL, "force: null handle");
    return guard([&] {
        if (!std::isfinite(t_c)) return fail(TC_ERR_DOMAIN, "force: temperature must be finite");
        a->impl->force_temperature(t_c);
        return TC_OK;
    });
}

tc_status tc_array_release_force(tc_array* a) {
    if (!a) return fail(TC_ERR_NULL, "release: null handle");
    a->impl->release_force();
    return TC_OK;
}

tc_status tc_array_calibrate(tc_array* a, double t_c, int* n_failed) {
    if (!a || !n_failed) return fail(TC_ERR_NULL, "calibrate: null argument");
    return guard([&] {
        *n_failed = static_cast<int>(a->impl->calibrate_all(t_c).size());
        return TC_OK;
    });
}

tc_status tc_array_set_setpoint(tc_array* a, double t_c) {
    if (!a) return fail(TC_ERR_NULL, "setpoint: null handle");
    return guard([&] {
        a->impl->set_setpoint(t_c);
        return TC_OK;
    });
}

tc_status tc_array_set_cell_setpoint(tc_array* a, int cell, double t_c) {
    if (!a) return fail(TC_ERR_NULL, "setpoint: null handle");
    if (!valid_cell(a, cell)) return fail(TC_ERR_DOMAIN, "setpoint: cell out of range");
    return guard([&] {
        std::vector<double> sp;
        for (int i = 0; i < a->impl->size(); ++i) sp.push_back(a->impl->cell(i).setpoint_c);
        sp[static_cast<std::size_t>(cell)] = t_c;
        a->impl->set_setpoints(sp);
        return TC_OK;
    });
}

tc_status tc_array_tick(tc_array* a, int64_t cycles) {
    if (!a) return fail(TC_ERR_NULL, "tick: null handle");
    if (cycles < 0) return fail(TC_ERR_DOMAIN, "tick: negative cycle count");
    return guard([&] {
        for (int64_t k = 0; k < cycles; ++k) a->impl->tick();
        return TC_OK;
    });
}

tc_status tc_array_true_temperature(const tc_array* a, int cell, double* t_c) {
    if (!a || !t_c) return fail(TC_ERR_NULL, "temperature: null argument");
    if (!valid_cell(a, cell)) return fail(TC_ERR_DOMAIN, "temperature: cell out of range");
    *t_c = a->impl->true_temperature(cell);
    return TC_OK;
}

tc_status tc_array_read_temperature(tc_array* a, int cell, double* t_c) {
    if (!a || !t_c) return fail(TC_ERR_NULL, "read: null argument");
    if (!valid_cell(a, cell)) return fail(TC_ERR_DOMAIN, "read: cell out of range");
    return guard([&] {
        *t_c = a->impl->read_temperature(cell);
        return TC_OK;
    });
}

tc_status tc_array_duty_code(const tc_array* a, int cell, int* code) {
    if (!a || !code) return fail(TC_ERR_NULL, "duty: null argument");
    if (!valid_cell(a, cell)) return fail(TC_ERR_DOMAIN, "duty: cell out of range");
    *code = a->impl->cell(cell).pwm_code;
    return TC_OK;
}

tc_status tc_array_cal_preload(const tc_array* a, int cell, int* preload) {
    if (!a || !preload) return fail(TC_ERR_NULL, "preload: null argument");
    if (!valid_cell(a, cell)) return fail(TC_ERR_DOMAIN, "preload: cell out of range");
    *preload = a->impl->cell(cell).cal_preload;
    return TC_OK;
}

tc_status tc_madc_convert(tc_conversion* conv, double i_in, double i_ref) {
    if (!conv) return fail(TC_ERR_NULL, "convert: null record");
    return guard([&] {
        MadcConversion c;
        c.coeff_mag = conv->coeff_mag;
        c.coeff_sign = conv->coeff_sign;
        c.cal_preload = conv->cal_preload;
        c.target_preload = conv->target_preload;
        c.mode = conv->subtract ? MadcMode::Subtract : MadcMode::Plain;
        const MadcConversion r = convert(MadcConfig{}, c, i_in, i_ref);
        conv->out_count = r.out_count;
        conv->n_charge = r.n_charge;
        conv->n_discharge = r.n_discharge;
        conv->saturated = r.saturated ? 1 : 0;
        return TC_OK;
    });
}

tc_status tc_pwm_duty(int code, double* duty) {
    if (!duty) return fail(TC_ERR_NULL, "pwm: null output");
    return guard([&] {
        *duty = duty_of_code(PwmConfig{}, code);
        return TC_OK;
    });
}

}  // extern "C"
