#pragma once

#include <cstdint>
#include <vector>

#include "thermocell/madc.hpp"
#include "thermocell/pid.hpp"

namespace thermocell {

// Reference models that share no arithmetic with the production paths.

// Integer currents in units of `unit` amperes; the discharge is counted
// clock by clock until the comparator would cross.
struct MadcOracleCase {
    std::int64_t i_in_units = 0;
    std::int64_t i_ref_units = 1;
    int coeff_k = 128;          // coefficient = coeff_k / 2^bits
    int cal_preload = 0;
    int target_preload = 0;
    bool subtract = false;
};

constexpr double kOracleCurrentUnit = 0x1.0p-40;  // exact in binary

int madc_oracle_count(const MadcConfig& cfg, const MadcOracleCase& c);

// Random draw within the unclipped range of the channel.
MadcOracleCase draw_madc_case(const MadcConfig& cfg, Rng& rng);

// Positional PID as three independent branches: proportional, trapezoidal
// integral state and backward-difference derivative.
std::vector<double> pid_branch_response(double kp, double ki, double kd, double ts, const std::vector<double>& e);

// Velocity recurrence u(k) = u(k-1) + sum c_n e(k-n) with the quantized
// coefficients, in double precision.
std::vector<double> pid_recurrence_response(const PidCoefficients& pc, const std::vector<double>& e);

// Running bound on |recurrence - branches|: every coefficient is off by at
// most one quantization step, and the error integrates.
std::vector<double> pid_quantization_bound(const PidCoefficients& pc, const std::vector<double>& e);

}  // namespace thermocell
