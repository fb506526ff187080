#include "thermocell/oracles.hpp"

#include <cmath>

namespace thermocell {

int madc_oracle_count(const MadcConfig& cfg, const MadcOracleCase& c) {
    const std::int64_t n1 = cfg.n1_counts;
    const std::int64_t full = std::int64_t{1} << cfg.coeff_bits;
    // round(k * n1 / 2^bits), half away from zero, in integers
    const std::int64_t n_chg = (2 * c.coeff_k * n1 + full) / (2 * full) - c.cal_preload;
    if (c.coeff_k == 0) return c.subtract ? c.target_preload : 0;
    const std::int64_t charge = n_chg * c.i_in_units;
    std::int64_t n2 = 0;
    std::int64_t left = charge;
    while (left >= c.i_ref_units && n2 < cfg.count_limit()) {
        left -= c.i_ref_units;
        ++n2;
    }
    std::int64_t out = c.subtract ? c.target_preload - n2 : n2;
    const std::int64_t lim = cfg.count_limit();
    if (out > lim) out = lim;
    if (out < -lim) out = -lim;
    return static_cast<int>(out);
}

MadcOracleCase draw_madc_case(const MadcConfig& cfg, Rng& rng) {
    MadcOracleCase c;
    const int full = 1 << cfg.coeff_bits;
    c.coeff_k = static_cast<int>(rng.uniform_int(1, full));
    const int n_scaled = static_cast<int>(std::lround(static_cast<double>(c.coeff_k) * cfg.n1_counts / full));
    const int pl = cfg.preload_limit();
    c.cal_preload = static_cast<int>(rng.uniform_int(-pl, std::min(pl - 1, n_scaled - 1)));
    const std::int64_t n_chg = n_scaled - c.cal_preload;
    c.i_ref_units = rng.uniform_int(64, std::int64_t{1} << 20);
    // keep N2 inside the counter and the charge below the integrator clip
    std::int64_t hi = c.i_ref_units * cfg.count_limit() / n_chg;
    const auto clip = static_cast<std::int64_t>(cfg.c_int * cfg.v_full * cfg.f_clk / kOracleCurrentUnit / n_chg);
    hi = std::min(hi, clip);
    c.i_in_units = rng.uniform_int(0, hi);
    // a share of exact ties, where floor() is most fragile
    if (rng.uniform() < 0.1 && n_chg > 0) {
        const std::int64_t n2 = rng.uniform_int(0, std::min<std::int64_t>(hi * n_chg / c.i_ref_units, cfg.count_limit()));
        if (n2 * c.i_ref_units % n_chg == 0) c.i_in_units = n2 * c.i_ref_units / n_chg;
    }
    c.subtract = rng.uniform() < 0.5;
    c.target_preload = c.subtract ? static_cast<int>(rng.uniform_int(0, cfg.count_limit())) : 0;
    return c;
}

std::vector<double> pid_branch_response(double kp, double ki, double kd, double ts, const std::vector<double>& e) {
    std::vector<double> u(e.size());
    double integ = 0.0, e_prev = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
        integ += ts / 2.0 * (e[k] + e_prev);
        u[k] = kp * e[k] + ki * integ + kd * (e[k] - e_prev) / ts;
        e_prev = e[k];
    }
    return u;
}

std::vector<double> pid_recurrence_response(const PidCoefficients& pc, const std::vector<double>& e) {
    std::vector<double> u(e.size());
    double prev = 0.0;
    auto at = [&](std::size_t k, int back) { return k >= static_cast<std::size_t>(back) ? e[k - back] : 0.0; };
    for (std::size_t k = 0; k < e.size(); ++k) {
        prev += pc.quantized(0) * at(k, 0) + pc.quantized(1) * at(k, 1) + pc.quantized(2) * at(k, 2);
        u[k] = prev;
    }
    return u;
}

std::vector<double> pid_quantization_bound(const PidCoefficients& pc, const std::vector<double>& e) {
    std::vector<double> b(e.size());
    const double q = pc.quantization_step();
    double run = 0.0, mag = 0.0;
    auto at = [&](std::size_t k, int back) { return k >= static_cast<std::size_t>(back) ? std::abs(e[k - back]) : 0.0; };
    for (std::size_t k = 0; k < e.size(); ++k) {
        run += q * (at(k, 0) + at(k, 1) + at(k, 2));
        mag += std::abs(pc.c[0]) * at(k, 0) + std::abs(pc.c[1]) * at(k, 1) + std::abs(pc.c[2]) * at(k, 2);
        // floating-point slack on top of the quantization term
        b[k] = run + 1e-12 * (mag + 1.0);
    }
    return b;
}

}  // namespace thermocell
