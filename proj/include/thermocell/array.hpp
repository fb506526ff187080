#pragma once

#include <complex>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "thermocell/device_models.hpp"
#include "thermocell/madc.hpp"
#include "thermocell/pid.hpp"
#include "thermocell/pwm.hpp"
#include "thermocell/thermal_plant.hpp"

namespace thermocell {

// Nominal continuous transfer of the CTAT/PTAT ratio, in counts. The
// floor quantizer reads on average half a count low, so the expected
// digital count at T is continuous(T) - 0.5.
class DesignMap {
public:
    DesignMap(const MadcConfig& cfg, const DeviceSet& nominal);
    double continuous(double t_c) const;
    double expected_count(double t_c) const { return continuous(t_c) - 0.5; }
    double slope(double t_c) const;  // d continuous / dT, negative
    // inverse of continuous(); a digital count c reads as temperature_of(c + 0.5)
    double temperature_of(double continuous_counts) const;
    double readout(int count) const { return temperature_of(count + 0.5); }

private:
    MadcConfig cfg_;
    DeviceSet nom_;
};

struct LinearFit {
    double slope = 0.0;      // counts per degC
    double intercept = 0.0;
    double max_residual_counts = 0.0;
    double max_residual_c = 0.0;  // residual mapped through the slope
};

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

enum class CellMode { TempReg, CPA, CV, IS };

const char* mode_name(CellMode m);

struct CellState {
    int row = 0, col = 0;
    CellMode mode = CellMode::TempReg;
    DeviceSet devices;
    int cal_preload = 0;
    bool calibrated = false;
    PidState pid;
    PidCoefficients coeffs;
    int pwm_code = 0;
    SensorFrontEndModel sensor;
    double setpoint_c = 25.0;
    Rng loop_rng{1};   // noise for regulation conversions
    Rng meas_rng{2};   // noise for measurement conversions
    double saturated_since = -1.0;
    bool warned = false;
};

struct ArrayConfig {
    int rows = 9;
    int cols = 6;
    std::uint64_t seed = 1;
    MadcConfig madc;
    PwmConfig pwm;
    DeviceSet nominal = nominal_devices();
    MismatchSigmas mismatch;
    bool mismatch_enabled = true;
    PlantParams plant = fit_defaults(65.0, 0.27, 10.0);
    double t_ambient = 25.0;
    double dt = 1e-3;
    double ts = 1e-3;
    std::optional<Gains> gains;      // default_tuning when empty
    double tuning_temperature = 55.0;
    int frac_bits = 16;
    double saturation_warning_s = 10.0;
};

void validate(const ArrayConfig& cfg);

struct MadcTraceRecord {
    std::int64_t cycle = 0;
    int cell = 0;
    int slot = 0;
    double t = 0.0;
    MadcConversion conv;
};

struct Warning {
    double t = 0.0;
    int cell = 0;
    std::string what;
};

// Everything a tick can emit; consumers enable what they need.
struct TickObserver {
    std::function<void(const MadcTraceRecord&)> on_conversion;
    std::function<void(int cell, const PidCycleRecord&)> on_pid;
};

using SlotHook = std::function<void(CellState& cell, int cell_index, int slot, double t_slot)>;

class CellArray {
public:
    explicit CellArray(const ArrayConfig& cfg);
    // a one-node array carrying the devices and streams of cell (row, col)
    static CellArray single(const ArrayConfig& cfg, int row, int col);

    const ArrayConfig& config() const { return cfg_; }
    const DesignMap& design_map() const { return map_; }
    int size() const { return static_cast<int>(cells_.size()); }
    CellState& cell(int i) { return cells_.at(static_cast<std::size_t>(i)); }
    const CellState& cell(int i) const { return cells_.at(static_cast<std::size_t>(i)); }
    int index(int row, int col) const { return row * cfg_.cols + col; }
    ThermalGrid& grid() { return grid_; }
    const ThermalGrid& grid() const { return grid_; }
    double time() const { return static_cast<double>(cycle_) * cfg_.ts; }
    std::int64_t cycle() const { return cycle_; }
    int frames_per_cycle() const { return frames_; }
    double frame_seconds() const { return cfg_.madc.frame_seconds(); }
    const std::vector<Warning>& warnings() const { return warnings_; }

    // External-heater scenario: pin every node to a temperature.
    void force_temperature(double t_c);
    void release_force();
    bool forced() const { return forced_; }

    int read_count(int i);
    double read_temperature(int i);

    // One-point calibration of one cell at the forced temperature.
    int calibrate_one_point(int i, double t_known_c);
    // Calibrates every cell; returns indices of cells that failed.
    std::vector<int> calibrate_all(double t_known_c);

    void set_setpoint(double t_c);
    void set_setpoints(const std::vector<double>& t_c);
    void set_mode(int i, CellMode m);

    // One PID period: three error conversions per cell, measurement slots,
    // then the plant.
    void tick(const SlotHook& hook = nullptr, const TickObserver* obs = nullptr);

    double true_temperature(int i) const { return grid_.temp[static_cast<std::size_t>(i)]; }

private:
    ArrayConfig cfg_;
    DesignMap map_;
    ThermalGrid grid_;
    std::vector<CellState> cells_;
    std::vector<Pwm> pwms_;
    std::vector<double> powers_;
    std::vector<double> scratch_;
    std::vector<Warning> warnings_;
    std::int64_t cycle_ = 0;
    int frames_ = 0;
    int substeps_ = 1;
    bool forced_ = false;

    CellArray(const ArrayConfig& cfg, int rows, int cols, int first_row, int first_col);
    void init_cell(CellState& c, int row, int col);
};

// ---- regulation ----

struct ScheduleStep {
    double t_start = 0.0;
    std::vector<double> setpoints;  // one per cell, or a single value for all
};

struct RegulationOptions {
    double duration = 60.0;
    double sample_every = 0.1;  // trace decimation, s
    std::vector<int> trace_cells;  // empty means all cells
    const TickObserver* observer = nullptr;
};

struct RegulationSample {
    double t = 0.0;
    int cell = 0;
    double setpoint = 0.0;
    double true_c = 0.0;
    double measured_c = 0.0;
    int u = 0;
};

struct RegulationResult {
    std::vector<RegulationSample> samples;
    std::vector<Warning> warnings;
};

RegulationResult run_regulation(CellArray& array, const std::vector<ScheduleStep>& schedule, const RegulationOptions& opt);

// ---- measurement modes ----

struct WaveformSpec {
    enum class Kind { Constant, RampCyclic, Sinusoid };
    Kind kind = Kind::Constant;
    double v_low = 0.0, v_high = 0.0;
    double scan_rate = 0.1;
    double freq = 1.0;
    double amplitude = 0.0;
    int cycles = 1;
    double v_step = 1e-3;     // generator resolution for ramps
    bool start_high = true;   // ramp direction: high -> low first
};

void validate(const WaveformSpec& w);

// Bipolar sensor currents are offset by half the reference before the
// unipolar integrator; the reference sets the range.
struct MeasureRange {
    double i_ref = 20e-9;
};

struct CpaSample {
    double t = 0.0;
    int count = 0;
    double current = 0.0;
};

std::vector<CpaSample> run_cpa(CellArray& array, int cell, const WaveformSpec& wave, double duration,
                               const MeasureRange& range);

struct CvPoint {
    double v = 0.0;
    double current = 0.0;
    int n = 0;        // conversions averaged
    int direction = 0;  // -1 falling, +1 rising
};

std::vector<CvPoint> run_cv(CellArray& array, int cell, const WaveformSpec& wave, const MeasureRange& range);

struct FraResult {
    double freq = 0.0;
    double z_real = 0.0;
    double z_imag = 0.0;
    int n_periods_integrated = 0;
    double i_ref = 0.0;   // range used
    int conversions = 0;
};

struct IsOptions {
    double amplitude = 10e-3;
    int repeats = 1;
    bool autorange = true;
    double i_ref = 1e-6;              // used when autorange is off
    std::vector<double> ranges;       // ladder, ascending; empty -> 1-2-5 from 1 nA to 2 uA
    int window_cycles = 0;            // 0 -> chosen per frequency
    double headroom = 0.45;
};

// Picks a window of whole PID cycles holding a whole number of periods.
struct FraWindow {
    int periods = 1;
    int cycles = 2;
    double freq = 0.0;
};
FraWindow choose_window(double freq, double ts, int min_cycles = 64);

std::vector<FraResult> run_is(CellArray& array, int cell, const std::vector<double>& freqs, const IsOptions& opt);

// ---- characterization ----

struct SweepTable {
    std::vector<double> temps;                 // degC
    std::vector<std::vector<int>> counts;      // [cell][temp]
    std::vector<std::vector<double>> readout;  // design-map readout [cell][temp]
    std::vector<LinearFit> fits;               // per cell, counts vs T
};

SweepTable characterize_sensor(CellArray& array, const std::vector<double>& temps_c);

}  // namespace thermocell
