#pragma once

#include <complex>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "thermocell/common.hpp"

namespace thermocell {

struct BjtParams {
    double vg0 = 1.156;          // V, extrapolated bandgap at 0 K
    double n_proc = 4.0;
    double t_ref = 300.0;        // K
    double vbe_at_tref = 0.7;    // V
    double mismatch_sigma_vbe = 1e-3;
    double offset = 0.0;         // this instance's drawn offset, V
};

struct CurrentSourceParams {
    double r1 = 1.5e6;
    double r2 = 100e3;
    double mirror_ratio = 10.0;
    double bias_current_ratio = 3.0;
    double alpha = 0.0;          // 0 means "fit at construction", see fit_alpha
    int trim_code = 0;
    double trim_step = 1e3;      // ohm per LSB
    double i_trim_bias = 100e-9; // current through the trim resistor
    double noise_rms_chopper_off = 0.11e-12;
    double noise_rms_chopper_on = 0.06e-12;
    bool chopper = false;
    bool noise_enabled = false;

    double noise_rms() const { return chopper ? noise_rms_chopper_on : noise_rms_chopper_off; }
};

struct HeaterParams {
    double p_max = 0.27;
};

struct MismatchSigmas {
    double vbe = 1e-3;     // V
    double r1 = 0.01;      // relative
    double r2 = 0.01;
    double mirror = 0.005;
};

// One cell's device set, with mismatch already folded into the fields.
struct DeviceSet {
    BjtParams bjt;
    CurrentSourceParams cs;
    HeaterParams heater;
};

void validate(const BjtParams& p);
void validate(const CurrentSourceParams& p);
void validate(const HeaterParams& p);

double vbe(const BjtParams& p, double t_kelvin, double ic_ratio_to_ref);
double delta_vbe(const CurrentSourceParams& p, double t_kelvin);
// The CTAT transistor is biased from the PTAT core, so its collector current
// follows T/t_ref.
double i_ctat(const CurrentSourceParams& p, const BjtParams& bjt, double t_kelvin, Rng* noise = nullptr);
double i_ptat(const CurrentSourceParams& p, double t_kelvin);
double heater_power(const HeaterParams& p, double duty);

// Chooses alpha so that i_ctat/i_ptat equals ratio_at_cold at t_cold.
double fit_alpha(const CurrentSourceParams& cs, const BjtParams& bjt, double t_cold_kelvin, double ratio_at_cold);

DeviceSet nominal_devices(double ratio_at_cold = 0.97, double t_cold_c = 20.0);
DeviceSet draw_mismatch(const DeviceSet& nominal, const MismatchSigmas& s, Rng& rng);

// ---- sensor front-end models ----

// Series/parallel R-C tree, parsed from e.g. "R100 + (R1e6 | C1e-8)".
// '|' binds tighter than '+'.
class Network {
public:
    enum class Kind { R, C, Series, Parallel };

    static Network parse(const std::string& text);
    static Network resistor(double r);
    static Network capacitor(double c);
    static Network series(std::vector<Network> parts);
    static Network parallel(std::vector<Network> parts);

    std::complex<double> impedance(double freq_hz) const;
    std::string to_string() const;
    Kind kind() const { return kind_; }
    double value() const { return value_; }
    const std::vector<Network>& children() const { return children_; }
    std::size_t element_count() const;

    // Trapezoidal time stepping of the terminal current.
    double step(double v_applied, double h);
    void reset_state();

private:
    Kind kind_ = Kind::R;
    double value_ = 0.0;
    std::vector<Network> children_;
    // companion-model state for capacitors
    double v_prev_ = 0.0;
    double i_prev_ = 0.0;
    // per-step companion values
    double g_ = 0.0;
    double ieq_ = 0.0;

    void companion(double h);
    void commit(double v, double i);
};

using CvResponse = std::function<double(double v_applied, double t)>;

// linear conductance plus a Gaussian redox peak
CvResponse cv_linear_gaussian(double conductance, double i_peak, double v_peak, double width);
CvResponse cv_resistor(double r);

enum class SensorKind { PhLinear, CvPluggable, ImpedanceNetwork };

struct SensorFrontEndModel {
    SensorKind kind = SensorKind::PhLinear;
    double ph_sensitivity_i = 1.8e-9;  // A per pH
    double ph_reference = 7.0;
    double ph = 7.0;                   // solution pH seen by the sensor
    std::shared_ptr<Network> network;
    CvResponse cv_response;

    // time-stepping bookkeeping for networks driven by non-sinusoids
    double last_t = 0.0;
    double last_v = 0.0;
    double max_step = 1e-5;
};

void validate(const SensorFrontEndModel& m);

double ph_derating(double temp_kelvin);

double sensor_current(SensorFrontEndModel& model, double v_applied, double t_now, double temp_kelvin);

}  // namespace thermocell
