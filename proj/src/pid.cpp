#include "thermocell/pid.hpp"

#include <algorithm>
#include <cmath>

namespace thermocell {

PidCoefficients derive_coefficients(double kp, double ki, double kd, double ts, int bits) {
    if (!(ts > 0.0) || !std::isfinite(ts)) throw ConfigError("pid: ts must be positive");
    if (!std::isfinite(kp) || !std::isfinite(ki) || !std::isfinite(kd)) throw ConfigError("pid: gains must be finite");
    PidCoefficients pc;
    pc.kp = kp;
    pc.ki = ki;
    pc.kd = kd;
    pc.ts = ts;
    pc.bits = bits;
    pc.c[0] = kp + ki * ts / 2.0 + kd / ts;
    pc.c[1] = -kp + ki * ts / 2.0 - 2.0 * kd / ts;
    pc.c[2] = kd / ts;

    const double peak = std::max({std::abs(pc.c[0]), std::abs(pc.c[1]), std::abs(pc.c[2])});
    if (peak == 0.0) return pc;  // null controller

    const double scale = static_cast<double>(1 << bits);
    int e = static_cast<int>(std::ceil(std::log2(peak)));
    // the largest mantissa must stay strictly below one after rounding
    while (std::round(std::ldexp(peak, -e) * scale) >= scale) ++e;
    while (std::round(std::ldexp(peak, -(e - 1)) * scale) < scale) --e;
    pc.exponent = e;
    for (int n = 0; n < 3; ++n) pc.mantissa[n] = static_cast<int>(std::lround(std::ldexp(pc.c[n], -e) * scale));
    return pc;
}

void PidState::reset_output(int u0) {
    u_prev = std::clamp(u0, 0, kDutyMax);
    acc = static_cast<std::int64_t>(u_prev) << frac_bits;
}

int pid_cycle(PidState& s, const PidCoefficients& pc, const ErrorConverter& cell, PidCycleRecord* rec) {
    const int shift = pc.exponent + s.frac_bits;
    if (!pc.is_null() && shift < 0) throw ConfigError("pid: coefficient exponent below accumulator precision");

    // age the bank
    s.bank[2] = s.bank[1];
    s.bank[1] = s.bank[0];

    PidCycleRecord local;
    PidCycleRecord& r = rec ? *rec : local;
    r.k = s.k;
    r.madc_saturated = r.bank_saturated = r.u_clamped = false;

    for (int n = 0; n < 3; ++n) {
        MadcConversion req;
        req.coeff_mag = pc.magnitude(n);
        req.coeff_sign = 1;  // the MADC sees |c_n|; the sign is applied below
        req.mode = MadcMode::Subtract;
        req.target_preload = static_cast<int>(std::lround(req.coeff_mag * s.setpoint_counts));
        MadcConversion done = cell(req);
        r.conversions[static_cast<std::size_t>(n)] = done;
        int p = done.out_count;
        if (done.saturated) r.madc_saturated = true;
        if (p > kBankMax || p < -kBankMax) {
            p = std::clamp(p, -kBankMax, kBankMax);
            r.bank_saturated = true;
        }
        s.bank[0][static_cast<std::size_t>(n)] = p;
        r.products[static_cast<std::size_t>(n)] = p;
    }

    // Count-domain error is t - y and counts fall with temperature, so a
    // cold cell gives a negative product; the adder subtracts.
    const std::int64_t sum = static_cast<std::int64_t>(pc.sign(0)) * s.bank[0][0] +
                             static_cast<std::int64_t>(pc.sign(1)) * s.bank[1][1] +
                             static_cast<std::int64_t>(pc.sign(2)) * s.bank[2][2];
    const std::int64_t inc = pc.is_null() ? 0 : -(sum * (std::int64_t{1} << shift));
    r.increment = inc;

    const std::int64_t hi = (static_cast<std::int64_t>(kDutyMax + 1) << s.frac_bits) - 1;
    std::int64_t next = s.acc + inc;
    if (next > hi) {
        // conditional integration: hold at the rail, never wind past it
        next = hi;
        r.u_clamped = true;
    } else if (next < 0) {
        next = 0;
        r.u_clamped = true;
    }
    s.acc = next;
    s.u_prev = static_cast<int>(s.acc >> s.frac_bits);
    s.madc_saturated = r.madc_saturated;
    s.bank_saturated = r.bank_saturated;
    s.u_clamped = r.u_clamped;
    if (r.madc_saturated || r.bank_saturated || r.u_clamped) s.saturation = true;
    ++s.k;
    r.u = s.u_prev;
    return s.u_prev;
}

Gains default_tuning(const TuningInputs& in) {
    if (!(in.plant.c_th > 0.0 && in.plant.g_amb > 0.0)) throw FitError("tuning: plant constants must be positive");
    if (!(in.sensor_slope > 0.0 && in.p_max > 0.0 && in.ts > 0.0)) throw FitError("tuning: bad inputs");
    const double tau = in.plant.c_th / in.plant.g_amb;
    // counts of error per duty code at steady state
    const double k_plant = in.p_max / in.duty_codes / in.plant.g_amb * in.sensor_slope;
    const double ki_ideal = 1.0 / (4.0 * k_plant * tau);
    const double c_ideal = ki_ideal * in.ts / 2.0;
    const double full = 1.0 - 1.0 / (1 << in.coeff_bits);
    int e = static_cast<int>(std::ceil(std::log2(c_ideal / full)));
    double best = 0.0, best_err = 1e300;
    for (int cand = e - 1; cand <= e; ++cand) {
        const double c = std::ldexp(full, cand);
        const double err = std::abs(std::log(c / c_ideal));
        if (err < best_err) {
            best_err = err;
            best = c;
        }
    }
    Gains g;
    g.ki = 2.0 * best / in.ts;
    g.kp = 0.0;
    g.kd = 0.0;
    g.zeta = 1.0 / (2.0 * std::sqrt(k_plant * g.ki * tau));
    return g;
}

}  // namespace thermocell
