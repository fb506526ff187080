#pragma once

#include <array>
#include <cstdint>
#include <functional>

#include "thermocell/madc.hpp"
#include "thermocell/thermal_plant.hpp"

namespace thermocell {

struct PidCoefficients {
    double kp = 0.0, ki = 0.0, kd = 0.0, ts = 1e-3;
    std::array<double, 3> c{};        // unquantized expansion
    int exponent = 0;                 // shared power-of-two scale
    std::array<int, 3> mantissa{};    // signed, magnitude <= 2^bits - 1
    int bits = 7;

    double magnitude(int n) const { return std::abs(mantissa[n]) / static_cast<double>(1 << bits); }
    int sign(int n) const { return mantissa[n] < 0 ? -1 : 1; }
    double quantized(int n) const { return std::ldexp(mantissa[n] / static_cast<double>(1 << bits), exponent); }
    // per-coefficient rounding bound: half a mantissa LSB
    double quantization_step() const { return std::ldexp(0.5 / (1 << bits), exponent); }
    bool is_null() const { return mantissa[0] == 0 && mantissa[1] == 0 && mantissa[2] == 0; }
};

PidCoefficients derive_coefficients(double kp, double ki, double kd, double ts, int bits = 7);

constexpr int kDutyMax = 4095;
constexpr int kBankMax = 127;  // sign + 7-bit magnitude

struct PidState {
    // bank[j][n] holds the product |c_n| e(k - j)
    std::array<std::array<int, 3>, 3> bank{};
    int u_prev = 0;
    std::int64_t acc = 0;      // u in fixed point with frac_bits fraction
    int frac_bits = 16;
    double setpoint_counts = 0.0;
    bool saturation = false;   // sticky: any clamp since reset
    bool madc_saturated = false;
    bool bank_saturated = false;
    bool u_clamped = false;
    std::int64_t k = 0;

    void reset_output(int u0);
};

struct PidCycleRecord {
    std::int64_t k = 0;
    std::array<MadcConversion, 3> conversions{};
    std::array<int, 3> products{};
    std::int64_t increment = 0;  // in accumulator units
    int u = 0;
    bool madc_saturated = false;
    bool bank_saturated = false;
    bool u_clamped = false;
};

// The cell handle: performs one error-mode conversion. The request carries
// the coefficient magnitude and the target preload; the cell supplies the
// calibration preload and its currents.
using ErrorConverter = std::function<MadcConversion(const MadcConversion& request)>;

// Runs one cycle. Returns the new duty code; the record is filled if given.
int pid_cycle(PidState& state, const PidCoefficients& coeffs, const ErrorConverter& cell, PidCycleRecord* rec = nullptr);

struct Gains {
    double kp = 0.0, ki = 0.0, kd = 0.0;
    double zeta = 0.0;   // damping of the continuous loop with the snapped gain
};

struct TuningInputs {
    PlantParams plant;
    double p_max = 0.27;
    double sensor_slope = 2.3;   // counts per kelvin, magnitude
    double ts = 1e-3;
    int coeff_bits = 7;
    int duty_codes = 4096;
};

// Integral-only rule at critical damping, with the gain snapped so the
// coefficient mantissa is full scale.
Gains default_tuning(const TuningInputs& in);

}  // namespace thermocell
