#include "thermocell/array.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace thermocell {

// ---------------- DesignMap ----------------

DesignMap::DesignMap(const MadcConfig& cfg, const DeviceSet& nominal) : cfg_(cfg), nom_(nominal) {
    nom_.cs.noise_enabled = false;
    nom_.bjt.offset = 0.0;
}

double DesignMap::continuous(double t_c) const {
    const double tk = to_kelvin(t_c);
    return cfg_.n1_counts * i_ctat(nom_.cs, nom_.bjt, tk) / i_ptat(nom_.cs, tk);
}

double DesignMap::slope(double t_c) const {
    const double h = 1e-3;
    return (continuous(t_c + h) - continuous(t_c - h)) / (2.0 * h);
}

double DesignMap::temperature_of(double y) const {
    double lo = to_celsius(250.0), hi = to_celsius(400.0);
    if (!(y <= continuous(lo) && y >= continuous(hi))) throw DomainError("design map: count outside the modelled range");
    for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (continuous(mid) > y)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DomainError("fit_line: need two or more points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    for (std::size_t i = 0; i < x.size(); ++i)
        f.max_residual_counts = std::max(f.max_residual_counts, std::abs(y[i] - (f.intercept + f.slope * x[i])));
    f.max_residual_c = f.max_residual_counts / std::abs(f.slope);
    return f;
}

const char* mode_name(CellMode m) {
    switch (m) {
        case CellMode::TempReg:
            return "TEMP_REG";
        case CellMode::CPA:
            return "CPA";
        case CellMode::CV:
            return "CV";
        case CellMode::IS:
            return "IS";
    }
    return "?";
}

// ---------------- CellArray ----------------

void validate(const ArrayConfig& c) {
    if (c.rows < 1 || c.cols < 1) throw ConfigError("array: rows and cols must be positive");
    validate(c.madc);
    validate(c.pwm);
    validate(c.nominal.bjt);
    validate(c.nominal.cs);
    validate(c.nominal.heater);
    if (!(c.ts > 0.0 && c.dt > 0.0)) throw ConfigError("array: ts and dt must be positive");
    if (!(c.mismatch.vbe >= 0.0 && c.mismatch.r1 >= 0.0 && c.mismatch.r2 >= 0.0 && c.mismatch.mirror >= 0.0))
        throw ConfigError("array: mismatch sigmas must be >= 0");
    if (c.frac_bits < 0 || c.frac_bits > 40) throw ConfigError("array: frac_bits out of range");
}

namespace {

constexpr std::uint64_t kStreamDevices = 0x646576ULL;
constexpr std::uint64_t kStreamLoop = 0x6c6f6fULL;
constexpr std::uint64_t kStreamMeas = 0x6d6561ULL;
constexpr std::uint64_t kStreamPwm = 0x70776dULL;

int whole_ratio(double a, double b, const char* what) {
    const double r = a / b;
    const double n = std::round(r);
    if (n < 1.0 || std::abs(r - n) > 1e-9 * n) throw ConfigError(std::string("array: ") + what);
    return static_cast<int>(n);
}

}  // namespace

CellArray::CellArray(const ArrayConfig& cfg) : CellArray(cfg, cfg.rows, cfg.cols, 0, 0) {}

CellArray CellArray::single(const ArrayConfig& cfg, int row, int col) {
    if (row < 0 || row >= cfg.rows || col < 0 || col >= cfg.cols) throw ConfigError("array: cell index out of range");
    return CellArray(cfg, 1, 1, row, col);
}

CellArray::CellArray(const ArrayConfig& cfg, int rows, int cols, int first_row, int first_col)
    : cfg_(cfg), map_(cfg.madc, cfg.nominal) {
    validate(cfg_);
    cfg_.rows = rows;
    cfg_.cols = cols;
    frames_ = whole_ratio(cfg_.ts, cfg_.madc.frame_seconds(), "ts must be a whole number of conversion frames");
    if (frames_ < 3) throw ConfigError("array: ts must hold at least three conversion frames");
    substeps_ = whole_ratio(cfg_.ts, cfg_.dt, "ts must be a whole number of plant steps");
    grid_ = make_grid(rows, cols, cfg_.plant, cfg_.t_ambient, cfg_.dt);
    cells_.resize(static_cast<std::size_t>(rows * cols));
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) init_cell(cells_[static_cast<std::size_t>(r * cols + c)], first_row + r, first_col + c);
    powers_.assign(cells_.size(), 0.0);
}

void CellArray::init_cell(CellState& c, int row, int col) {
    c.row = row;
    c.col = col;
    const auto r = static_cast<std::uint64_t>(row), k = static_cast<std::uint64_t>(col);
    if (cfg_.mismatch_enabled) {
        Rng dev(stream_seed(cfg_.seed, kStreamDevices, r, k));
        c.devices = draw_mismatch(cfg_.nominal, cfg_.mismatch, dev);
    } else {
        c.devices = cfg_.nominal;
    }
    c.loop_rng = Rng(stream_seed(cfg_.seed, kStreamLoop, r, k));
    c.meas_rng = Rng(stream_seed(cfg_.seed, kStreamMeas, r, k));

    Gains g;
    if (cfg_.gains) {
        g = *cfg_.gains;
    } else {
        TuningInputs ti;
        ti.plant = cfg_.plant;
        ti.p_max = cfg_.nominal.heater.p_max;
        ti.sensor_slope = std::abs(map_.slope(cfg_.tuning_temperature));
        ti.ts = cfg_.ts;
        ti.coeff_bits = cfg_.madc.coeff_bits;
        g = default_tuning(ti);
    }
    c.coeffs = derive_coefficients(g.kp, g.ki, g.kd, cfg_.ts, cfg_.madc.coeff_bits);
    c.pid.frac_bits = cfg_.frac_bits;
    c.pid.reset_output(0);
    c.setpoint_c = cfg_.t_ambient;
    c.pid.setpoint_counts = map_.expected_count(c.setpoint_c);

    PwmConfig pc = cfg_.pwm;
    pc.mismatch_seed = stream_seed(cfg_.seed, kStreamPwm, r, k);
    pwms_.emplace_back(pc);
}

void CellArray::force_temperature(double t_c) {
    forced_ = true;
    std::fill(grid_.temp.begin(), grid_.temp.end(), t_c);
}

void CellArray::release_force() { forced_ = false; }

int CellArray::read_count(int i) {
    CellState& c = cell(i);
    return digitize_temperature(cfg_.madc, c.devices, to_kelvin(true_temperature(i)), c.cal_preload, &c.meas_rng);
}

double CellArray::read_temperature(int i) { return map_.readout(read_count(i)); }

int CellArray::calibrate_one_point(int i, double t_known) {
    CellState& c = cell(i);
    if (!forced_ || std::abs(true_temperature(i) - t_known) > 1e-9)
        throw ConfigError("calibration: cell must be held at the known temperature");
    const int lim = cfg_.madc.preload_limit();
    const int n1 = cfg_.madc.n1_counts;
    const double tk = to_kelvin(t_known);
    // Scan the preload staircase; a least-squares slope through the origin
    // of (count + 0.5) against charge length gives the channel's ratio.
    double sxy = 0.0, sxx = 0.0;
    for (int p = -lim; p < lim; ++p) {
        const int cnt = digitize_temperature(cfg_.madc, c.devices, tk, p, &c.meas_rng);
        if (cnt >= cfg_.madc.count_limit()) continue;
        const double len = static_cast<double>(n1 - p);
        sxy += (cnt + 0.5) * len;
        sxx += len * len;
    }
    if (!(sxx > 0.0)) throw CalibrationError("calibration: channel saturated over the whole preload range");
    const double ratio = sxy / sxx;
    const double target = map_.continuous(t_known);
    const double p_cont = n1 - target / ratio;
    if (p_cont < -lim - 0.5 || p_cont > lim - 0.5)
        throw CalibrationError("calibration: cell (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                               ") needs a preload outside the counter range");
    int best = 0;
    double best_err = 1e300;
    for (int p = -lim; p < lim; ++p) {
        const double err = std::abs((n1 - p) * ratio - target);
        if (err < best_err - 1e-12 || (std::abs(err - best_err) <= 1e-12 && std::abs(p) < std::abs(best))) {
            best_err = err;
            best = p;
        }
    }
    const int check = digitize_temperature(cfg_.madc, c.devices, tk, best, &c.meas_rng);
    if (std::abs(check - map_.expected_count(t_known)) > 1.0 + 1e-9)
        throw CalibrationError("calibration: cell (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                               ") does not reach the design count");
    c.cal_preload = best;
    c.calibrated = true;
    return best;
}

std::vector<int> CellArray::calibrate_all(double t_known) {
    std::vector<int> failed;
    for (int i = 0; i < size(); ++i) {
        try {
            calibrate_one_point(i, t_known);
        } catch (const CalibrationError&) {
            failed.push_back(i);
        }
    }
    return failed;
}

void CellArray::set_setpoint(double t_c) { set_setpoints(std::vector<double>(cells_.size(), t_c)); }

void CellArray::set_setpoints(const std::vector<double>& t) {
    if (t.size() != cells_.size() && t.size() != 1) throw ConfigError("array: setpoint map has the wrong size");
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        const double sp = t.size() == 1 ? t[0] : t[i];
        if (!(sp >= 20.0 && sp <= 90.0)) throw ConfigError("array: setpoints must lie in [20, 90] degC");
        cells_[i].setpoint_c = sp;
        cells_[i].pid.setpoint_counts = map_.expected_count(sp);
    }
}

void CellArray::set_mode(int i, CellMode m) { cell(i).mode = m; }

void CellArray::tick(const SlotHook& hook, const TickObserver* obs) {
    const double t0 = time();
    const double tf = frame_seconds();
    const MadcConfig& mc = cfg_.madc;
    for (std::size_t i = 0; i < cells_.size(); ++i) {
        CellState& c = cells_[i];
        const double tk = to_kelvin(grid_.temp[i]);
        const double ictat = i_ctat(c.devices.cs, c.devices.bjt, tk);
        const double iptat = i_ptat(c.devices.cs, tk);
        const bool noisy = c.devices.cs.noise_enabled;
        int slot = 0;
        ErrorConverter conv = [&](const MadcConversion& req) {
            MadcConversion r = req;
            r.cal_preload = static_cast<int>(std::lround(req.coeff_mag * c.cal_preload));
            const double iin = noisy ? ictat + c.loop_rng.gaussian(c.devices.cs.noise_rms()) : ictat;
            MadcConversion done = convert(mc, r, std::max(iin, 0.0), iptat, &c.loop_rng);
            if (obs && obs->on_conversion) obs->on_conversion({cycle_, static_cast<int>(i), slot, t0 + slot * tf, done});
            ++slot;
            return done;
        };
        PidCycleRecord rec;
        pid_cycle(c.pid, c.coeffs, conv, &rec);
        if (obs && obs->on_pid) obs->on_pid(static_cast<int>(i), rec);
        c.pwm_code = c.pid.u_prev;
        powers_[i] = heater_power(c.devices.heater, pwms_[i].duty(c.pwm_code));

        const bool sat = rec.u_clamped || rec.madc_saturated || rec.bank_saturated;
        if (sat) {
            if (c.saturated_since < 0.0) c.saturated_since = t0;
            if (!c.warned && t0 - c.saturated_since >= cfg_.saturation_warning_s) {
                warnings_.push_back({t0, static_cast<int>(i), "persistently saturated"});
                c.warned = true;
            }
        } else {
            c.saturated_since = -1.0;
            c.warned = false;
        }
    }
    if (hook) {
        for (std::size_t i = 0; i < cells_.size(); ++i)
            for (int s = 3; s < frames_; ++s) hook(cells_[i], static_cast<int>(i), s, t0 + s * tf);
    }
    if (!forced_)
        for (int s = 0; s < substeps_; ++s) step_inplace(grid_, powers_, cfg_.dt, scratch_);
    ++cycle_;
}

// ---------------- regulation ----------------

RegulationResult run_regulation(CellArray& a, const std::vector<ScheduleStep>& schedule_in, const RegulationOptions& opt) {
    if (!(opt.duration > 0.0)) throw ConfigError("regulation: duration must be positive");
    auto schedule = schedule_in;
    std::stable_sort(schedule.begin(), schedule.end(),
                     [](const ScheduleStep& x, const ScheduleStep& y) { return x.t_start < y.t_start; });
    const double ts = a.config().ts;
    const auto n_cycles = static_cast<std::int64_t>(std::llround(opt.duration / ts));
    const auto every = std::max<std::int64_t>(1, std::llround(opt.sample_every / ts));
    std::vector<char> traced(static_cast<std::size_t>(a.size()), opt.trace_cells.empty() ? 1 : 0);
    for (int c : opt.trace_cells) {
        if (c < 0 || c >= a.size()) throw ConfigError("regulation: trace cell out of range");
        traced[static_cast<std::size_t>(c)] = 1;
    }

    RegulationResult res;
    const std::size_t warn0 = a.warnings().size();
    const double t_begin = a.time();
    std::size_t next_step = 0;
    std::vector<RegulationSample> pending;
    const DesignMap& map = a.design_map();
    const MadcConfig& mc = a.config().madc;

    SlotHook sampler = [&](CellState& c, int idx, int slot, double t) {
        if (slot != 3 || !traced[static_cast<std::size_t>(idx)]) return;
        RegulationSample s;
        s.t = t - 3 * a.frame_seconds() - t_begin;
        s.cell = idx;
        s.setpoint = c.setpoint_c;
        s.true_c = a.true_temperature(idx);
        const int cnt = digitize_temperature(mc, c.devices, to_kelvin(s.true_c), c.cal_preload, &c.meas_rng);
        s.measured_c = map.readout(cnt);
        s.u = c.pid.u_prev;
        pending.push_back(s);
    };

    for (std::int64_t k = 0; k < n_cycles; ++k) {
        const double t_rel = static_cast<double>(k) * ts;
        while (next_step < schedule.size() && schedule[next_step].t_start <= t_rel + 1e-12) {
            a.set_setpoints(schedule[next_step].setpoints);
            ++next_step;
        }
        const bool sample = k % every == 0;
        a.tick(sample ? sampler : SlotHook{}, opt.observer);
        if (sample) {
            res.samples.insert(res.samples.end(), pending.begin(), pending.end());
            pending.clear();
        }
    }
    res.warnings.assign(a.warnings().begin() + static_cast<std::ptrdiff_t>(warn0), a.warnings().end());
    return res;
}

// ---------------- measurement modes ----------------

void validate(const WaveformSpec& w) {
    switch (w.kind) {
        case WaveformSpec::Kind::Constant:
            break;
        case WaveformSpec::Kind::RampCyclic:
            if (!(w.v_low < w.v_high)) throw ConfigError("waveform: ramp needs v_low < v_high");
            if (!(w.scan_rate > 0.0)) throw ConfigError("waveform: scan_rate must be positive");
            if (!(w.v_step > 0.0)) throw ConfigError("waveform: v_step must be positive");
            if (w.cycles < 1) throw ConfigError("waveform: cycles must be >= 1");
            break;
        case WaveformSpec::Kind::Sinusoid:
            if (!(w.freq >= 0.1 && w.freq <= 1e4)) throw ConfigError("waveform: sinusoid frequency outside [0.1 Hz, 10 kHz]");
            if (!(w.amplitude > 0.0)) throw ConfigError("waveform: amplitude must be positive");
            break;
    }
}

namespace {

void require_mode(const CellArray& a, int cell, CellMode m, SensorKind k) {
    if (cell < 0 || cell >= a.size()) throw ConfigError("measurement: cell index out of range");
    const CellState& c = a.cell(cell);
    if (c.mode != m) throw ConfigError(std::string("measurement: cell is not in ") + mode_name(m) + " mode");
    if (c.sensor.kind != k && !(m == CellMode::CV && c.sensor.kind == SensorKind::ImpedanceNetwork))
        throw ConfigError("measurement: sensor model does not match the cell mode");
    validate(c.sensor);
}

// Plain conversion of a bipolar current offset by half the reference.
struct BipolarReading {
    int count = 0;
    double current = 0.0;
    bool saturated = false;
};

BipolarReading read_bipolar(const MadcConfig& mc, double i_sensor, double i_ref, Rng& rng) {
    const double bias = 0.5 * i_ref;
    double iin = bias + i_sensor;
    BipolarReading r;
    if (iin < 0.0) {
        iin = 0.0;
        r.saturated = true;
    }
    MadcConversion c;
    c.coeff_mag = 1.0;
    c.mode = MadcMode::Plain;
    c = convert(mc, c, iin, i_ref, &rng);
    r.count = c.out_count;
    r.saturated = r.saturated || c.saturated;
    // mid-tread reconstruction
    r.current = (c.out_count + 0.5) / channel_gain(mc, i_ref) - bias;
    return r;
}

}  // namespace

std::vector<CpaSample> run_cpa(CellArray& a, int cell, const WaveformSpec& wave, double duration, const MeasureRange& range) {
    require_mode(a, cell, CellMode::CPA, SensorKind::PhLinear);
    if (wave.kind != WaveformSpec::Kind::Constant) throw ConfigError("cpa: needs a constant waveform");
    if (!(range.i_ref > 0.0)) throw ConfigError("cpa: reference current must be positive");
    if (!(duration > 0.0)) throw ConfigError("cpa: duration must be positive");
    std::vector<CpaSample> out;
    const double t_begin = a.time();
    const MadcConfig& mc = a.config().madc;
    SlotHook hook = [&](CellState& c, int idx, int, double t) {
        if (idx != cell) return;
        const double i = sensor_current(c.sensor, wave.v_high, t, to_kelvin(a.true_temperature(idx)));
        const auto r = read_bipolar(mc, i, range.i_ref, c.meas_rng);
        out.push_back({t - t_begin, r.count, r.current});
    };
    const auto n = std::llround(duration / a.config().ts);
    for (long long k = 0; k < n; ++k) a.tick(hook);
    return out;
}

std::vector<CvPoint> run_cv(CellArray& a, int cell, const WaveformSpec& w, const MeasureRange& range) {
    require_mode(a, cell, CellMode::CV, SensorKind::CvPluggable);
    if (w.kind != WaveformSpec::Kind::RampCyclic) throw ConfigError("cv: needs a cyclic ramp");
    validate(w);
    if (!(range.i_ref > 0.0)) throw ConfigError("cv: reference current must be positive");
    const double span_steps = (w.v_high - w.v_low) / w.v_step;
    const int n_steps = static_cast<int>(std::lround(span_steps));
    if (std::abs(span_steps - n_steps) > 1e-6) throw ConfigError("cv: ramp span is not a whole number of steps");
    const double hold = w.v_step / w.scan_rate;
    const double hold_cycles_f = hold / a.config().ts;
    const int hold_cycles = static_cast<int>(std::lround(hold_cycles_f));
    if (hold_cycles < 1 || std::abs(hold_cycles_f - hold_cycles) > 1e-6 * hold_cycles)
        throw ConfigError("cv: step hold time is not a whole number of PID cycles");

    // voltages come from the integer step index so both directions hit the
    // same grid exactly
    std::vector<std::pair<int, int>> seq;  // (index from v_high, direction)
    for (int cyc = 0; cyc < w.cycles; ++cyc) {
        if (w.start_high) {
            for (int k = 0; k <= n_steps; ++k) seq.emplace_back(k, -1);
            for (int k = n_steps; k >= 0; --k) seq.emplace_back(k, +1);
        } else {
            for (int k = n_steps; k >= 0; --k) seq.emplace_back(k, +1);
            for (int k = 0; k <= n_steps; ++k) seq.emplace_back(k, -1);
        }
    }
    CellState& target = a.cell(cell);
    target.sensor.last_t = a.time();
    target.sensor.last_v = w.start_high ? w.v_high : w.v_low;
    if (target.sensor.network) target.sensor.network->reset_state();

    const MadcConfig& mc = a.config().madc;
    std::vector<CvPoint> out;
    double v_now = 0.0;
    double sum = 0.0;
    int n = 0;
    SlotHook hook = [&](CellState& c, int idx, int, double t) {
        if (idx != cell) return;
        const double i = sensor_current(c.sensor, v_now, t, to_kelvin(a.true_temperature(idx)));
        const auto r = read_bipolar(mc, i, range.i_ref, c.meas_rng);
        sum += r.current;
        ++n;
    };
    for (const auto& [k, dir] : seq) {
        v_now = w.v_high - k * w.v_step;
        sum = 0.0;
        n = 0;
        for (int j = 0; j < hold_cycles; ++j) a.tick(hook);
        out.push_back({v_now, n ? sum / n : 0.0, n, dir});
    }
    return out;
}

namespace {

int gcd_int(long long a, long long b) {
    while (b) {
        long long t = a % b;
        a = b;
        b = t;
    }
    return static_cast<int>(a);
}

std::vector<double> default_ranges() {
    std::vector<double> r;
    for (double dec = 1e-9; dec < 1.5e-6; dec *= 10.0)
        for (double m : {1.0, 2.0, 5.0})
            if (m * dec <= 2.0001e-6) r.push_back(m * dec);
    return r;
}

struct Phasor {
    std::complex<double> current;
    int conversions = 0;
    double peak = 0.0;  // from plain peak detection
};

}  // namespace

FraWindow choose_window(double f, double ts, int min_cycles) {
    if (!(f > 0.0 && ts > 0.0)) throw ConfigError("fra: frequency and ts must be positive");
    const double r = f * ts;  // periods per cycle
    FraWindow best;
    double best_err = 1e300;
    for (int m = 1; m <= 4001; m += 2) {
        const long long base = 2 * std::llround(m / r / 2.0);
        for (long long kc : {base, base - 2, base + 2}) {
            if (kc < std::max(min_cycles, 2) || gcd_int(m, kc) != 1) continue;
            const double err = std::abs(m / (kc * r) - 1.0);
            if (err < best_err) {
                best_err = err;
                best = {m, static_cast<int>(kc), m / (kc * ts)};
            }
        }
        if (best_err <= 5e-3) break;
    }
    if (best_err > 0.05) throw ConfigError("fra: no whole-period window found for the frequency");
    return best;
}

std::vector<FraResult> run_is(CellArray& a, int cell, const std::vector<double>& freqs, const IsOptions& opt) {
    require_mode(a, cell, CellMode::IS, SensorKind::ImpedanceNetwork);
    if (!(opt.amplitude > 0.0)) throw ConfigError("is: amplitude must be positive");
    if (opt.repeats < 1) throw ConfigError("is: repeats must be >= 1");
    const auto ranges = opt.ranges.empty() ? default_ranges() : opt.ranges;
    const MadcConfig& mc = a.config().madc;
    const double ts = a.config().ts;
    const int n1 = mc.n1_counts;
    Network& net = *a.cell(cell).sensor.network;

    std::vector<FraResult> results;
    for (double f_req : freqs) {
        if (!(f_req >= 0.1 && f_req <= 1e4)) throw ConfigError("is: frequency outside [0.1 Hz, 10 kHz]");
        FraWindow win;
        if (opt.window_cycles > 0) {
            const double periods = f_req * opt.window_cycles * ts;
            if (std::abs(periods - std::round(periods)) > 1e-9 * std::max(1.0, periods) || std::round(periods) < 1.0)
                throw ConfigError("is: window does not hold a whole number of periods");
            win = {static_cast<int>(std::lround(periods)), opt.window_cycles, f_req};
        } else {
            win = choose_window(f_req, ts);
        }
        const double w = 2.0 * kPi * win.freq;
        const std::complex<double> p_true = opt.amplitude / net.impedance(win.freq);

        // exact window average of Re(P e^{jwt}) over [t, t + len]
        auto window_avg = [&](double t, double len) {
            const std::complex<double> j(0.0, 1.0);
            return std::real(p_true * (std::exp(j * w * (t + len)) - std::exp(j * w * t)) / (j * w * len));
        };

        // plain-mode peak detection over one window
        auto peak_at = [&](double i_ref) {
            const double t0 = a.time();
            double peak = 0.0;
            bool clipped = false;
            const double len = n1 / mc.f_clk;
            SlotHook hook = [&](CellState& c, int idx, int, double t) {
                if (idx != cell) return;
                const auto r = read_bipolar(mc, window_avg(t - t0, len), i_ref, c.meas_rng);
                peak = std::max(peak, std::abs(r.current));
                clipped = clipped || r.saturated || r.count >= mc.count_limit() || r.count <= 0;
            };
            for (int k = 0; k < win.cycles; ++k) a.tick(hook);
            return clipped ? std::numeric_limits<double>::infinity() : peak;
        };

        double i_ref = opt.i_ref;
        if (opt.autorange) {
            std::size_t idx = ranges.size() - 1;
            for (int stage = 0; stage < 6; ++stage) {
                const double pk = peak_at(ranges[idx]);
                if (!std::isfinite(pk)) {
                    if (idx + 1 >= ranges.size() || stage > 0)
                        throw MeasurementError("is: response exceeds the largest current range");
                    ++idx;
                    continue;
                }
                // one LSB of uncertainty; the charge window averages the
                // sinusoid down by sinc(w len / 2)
                const double x = 0.5 * w * n1 / mc.f_clk;
                const double bound = (pk + ranges[idx] / n1) / (std::sin(x) / x);
                std::size_t pick = idx;
                for (std::size_t r = 0; r <= idx; ++r) {
                    if (bound <= opt.headroom * ranges[r]) {
                        pick = r;
                        break;
                    }
                }
                if (pick == idx) break;
                idx = pick;
            }
            i_ref = ranges[idx];
        }

        // multiply-accumulate against the quantized sine and cosine tables
        const double t0 = a.time();
        const double bias_frac = 0.5;
        long long acc[2] = {0, 0};
        std::complex<double> gam[2] = {0.0, 0.0};
        int conversions = 0;
        bool overrange = false;
        SlotHook hook = [&](CellState& c, int idx, int slot, double t) {
            if (idx != cell) return;
            const int which = (slot - 3) % 2;  // 0: cosine table, 1: sine table
            const double s = t - t0;
            const double ref = which == 0 ? std::cos(w * s) : std::sin(w * s);
            const double mag = quantize_coeff(std::abs(ref), mc.coeff_bits);
            ++conversions;
            if (mag == 0.0) return;
            const int sign = ref < 0.0 ? -1 : 1;
            MadcConversion req;
            req.coeff_mag = mag;
            req.coeff_sign = 1;
            req.mode = MadcMode::Subtract;
            req.target_preload = static_cast<int>(std::lround(mag * n1 * bias_frac));
            const int n_chg = static_cast<int>(std::lround(mag * n1));
            const double len = n_chg / mc.f_clk;
            double iin = bias_frac * i_ref + window_avg(s, len);
            if (iin < 0.0) {
                iin = 0.0;
                overrange = true;
            }
            const MadcConversion done = convert(mc, req, iin, i_ref, &c.meas_rng);
            if (done.saturated) overrange = true;
            acc[which] += -static_cast<long long>(sign) * done.out_count;
            const std::complex<double> j(0.0, 1.0);
            gam[which] += static_cast<double>(sign) * (n_chg / i_ref) * (std::exp(j * w * (s + len)) - std::exp(j * w * s)) / (j * w * len);
        };
        const long long total = static_cast<long long>(win.cycles) * opt.repeats;
        for (long long k = 0; k < total; ++k) a.tick(hook);
        if (overrange) throw MeasurementError("is: current exceeded the selected range");

        // [A_c, A_s] = M [Re P, Im P]
        const double m00 = gam[0].real(), m01 = -gam[0].imag();
        const double m10 = gam[1].real(), m11 = -gam[1].imag();
        const double det = m00 * m11 - m01 * m10;
        if (!(std::abs(det) > 0.0)) throw MeasurementError("is: singular reference projection");
        const double re = (m11 * acc[0] - m01 * acc[1]) / det;
        const double im = (-m10 * acc[0] + m00 * acc[1]) / det;
        const std::complex<double> p(re, im);
        if (std::abs(p) == 0.0) throw MeasurementError("is: no measurable response");
        const std::complex<double> z = opt.amplitude / p;
        FraResult fr;
        fr.freq = win.freq;
        fr.z_real = z.real();
        fr.z_imag = z.imag();
        fr.n_periods_integrated = win.periods * opt.repeats;
        fr.i_ref = i_ref;
        fr.conversions = conversions;
        results.push_back(fr);
    }
    return results;
}

// ---------------- characterization ----------------

SweepTable characterize_sensor(CellArray& a, const std::vector<double>& temps) {
    if (temps.size() < 2) throw ConfigError("characterize: need two or more sweep temperatures");
    SweepTable t;
    t.temps = temps;
    t.counts.assign(static_cast<std::size_t>(a.size()), {});
    t.readout.assign(static_cast<std::size_t>(a.size()), {});
    for (double tc : temps) {
        if (!(tc >= 20.0 && tc <= 90.0)) throw ConfigError("characterize: sweep outside [20, 90] degC");
        a.force_temperature(tc);
        for (int i = 0; i < a.size(); ++i) {
            const int cnt = a.read_count(i);
            t.counts[static_cast<std::size_t>(i)].push_back(cnt);
            t.readout[static_cast<std::size_t>(i)].push_back(a.design_map().readout(cnt));
        }
    }
    for (int i = 0; i < a.size(); ++i) {
        std::vector<double> y(t.counts[static_cast<std::size_t>(i)].begin(), t.counts[static_cast<std::size_t>(i)].end());
        t.fits.push_back(fit_line(temps, y));
    }
    return t;
}

}  // namespace thermocell
