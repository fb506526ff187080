#pragma once

#include <cstdint>
#include <vector>

#include "thermocell/common.hpp"
#include "thermocell/device_models.hpp"

namespace thermocell {

struct MadcConfig {
    int n_bits = 9;
    double f_clk = 10e6;
    int n1_counts = 512;
    int t_rd_counts = 16;
    // one conversion slot on the channel's schedule, in clocks; long enough
    // for a full charge phase, the hold and a full-scale discharge
    int frame_counts = 1250;
    double c_int = 120e-12;
    double v_full = 1.0;
    double noise_charge_rms = 0.0;  // C, input-referred, per conversion
    double hd2 = 0.0;               // quadratic integrator term relative to full scale
    int coeff_bits = 7;

    double frame_seconds() const { return frame_counts / f_clk; }
    double conversion_rate() const { return f_clk / frame_counts; }
    int count_limit() const { return 1 << n_bits; }
    int preload_limit() const { return 1 << (n_bits - 2); }
};

void validate(const MadcConfig& cfg);

enum class MadcMode { Plain, Subtract };

struct MadcConversion {
    double coeff_mag = 1.0;   // k / 2^coeff_bits, in [0, 1]
    int coeff_sign = 1;
    int cal_preload = 0;
    int target_preload = 0;
    MadcMode mode = MadcMode::Plain;
    // results
    int n_charge = 0;
    int n_hold = 0;
    int n_discharge = 0;
    int out_count = 0;
    bool saturated = false;
};

// Quantize a magnitude in [0, 1] to the coefficient grid.
double quantize_coeff(double mag, int bits = 7);
bool on_coeff_grid(double mag, int bits = 7);

MadcConversion convert(const MadcConfig& cfg, MadcConversion conv, double i_in, double i_ref, Rng* noise = nullptr);

// Plain-mode conversion of the CTAT/PTAT pair.
int digitize_temperature(const MadcConfig& cfg, const DeviceSet& dev, double t_kelvin, int cal_preload,
                         Rng* noise = nullptr);

// counts per ampere for coefficient 1 at reference current i_ref
double channel_gain(const MadcConfig& cfg, double i_ref);

struct SnrSetup {
    double freq = 15.0;             // requested; adjusted for coherent sampling
    double full_scale = 400e-9;     // A, also the discharge reference
    double amplitude_fraction = 0.999;
    int n_samples = 16384;
    int max_harmonic = 10;
    std::uint64_t seed = 1;
};

struct SnrResult {
    double snr_db = 0.0;
    double enob = 0.0;
    double freq_actual = 0.0;
    double sample_rate = 0.0;
    int periods = 0;
    std::vector<int> counts;
};

SnrResult snr_test(const MadcConfig& cfg, const SnrSetup& setup);

// SNR of a coherently sampled record; the signal sits in bin `signal_bin`.
double snr_from_record(const std::vector<double>& x, int signal_bin, int max_harmonic);

}  // namespace thermocell
