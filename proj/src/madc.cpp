#include "thermocell/madc.hpp"

#include <algorithm>
#include <complex>

namespace thermocell {

void validate(const MadcConfig& c) {
    if (c.n_bits < 3 || c.n_bits > 16) throw ConfigError("madc: n_bits must be in [3, 16]");
    if (!(c.f_clk > 0.0)) throw ConfigError("madc: f_clk must be positive");
    if (c.n1_counts < 1) throw ConfigError("madc: n1_counts must be positive");
    if (c.t_rd_counts < 1) throw ConfigError("madc: t_rd_counts must be >= 1");
    if (!(c.c_int > 0.0 && c.v_full > 0.0)) throw ConfigError("madc: c_int and v_full must be positive");
    if (!(c.noise_charge_rms >= 0.0)) throw ConfigError("madc: noise_charge_rms must be >= 0");
    if (c.coeff_bits < 1 || c.coeff_bits > 15) throw ConfigError("madc: coeff_bits must be in [1, 15]");
    if (c.frame_counts < c.n1_counts + c.preload_limit() + c.t_rd_counts + c.count_limit())
        throw ConfigError("madc: frame_counts too short for charge, hold and full-scale discharge");
}

double quantize_coeff(double mag, int bits) {
    const double scale = static_cast<double>(1 << bits);
    return std::clamp(std::round(mag * scale), 0.0, scale) / scale;
}

bool on_coeff_grid(double mag, int bits) {
    const double scale = static_cast<double>(1 << bits);
    const double k = mag * scale;
    return mag >= 0.0 && mag <= 1.0 && k == std::round(k);
}

MadcConversion convert(const MadcConfig& cfg, MadcConversion conv, double i_in, double i_ref, Rng* noise) {
    if (!on_coeff_grid(conv.coeff_mag, cfg.coeff_bits)) throw ConfigError("madc: coefficient is not on the 7-bit grid");
    if (conv.coeff_sign != 1 && conv.coeff_sign != -1) throw ConfigError("madc: coefficient sign must be +1 or -1");
    if (!(i_ref > 0.0)) throw DomainError("madc: reference current must be positive");
    if (!(i_in >= 0.0) || !std::isfinite(i_in)) throw DomainError("madc: input current must be non-negative");

    const int limit = cfg.count_limit();
    conv.saturated = false;
    conv.n_hold = cfg.t_rd_counts;

    if (conv.coeff_mag == 0.0) {
        // null coefficient: no charge phase, product is zero
        conv.n_charge = 0;
        conv.n_discharge = 0;
        conv.out_count = conv.mode == MadcMode::Plain ? 0 : conv.target_preload;
        return conv;
    }

    const int n_chg = static_cast<int>(std::lround(conv.coeff_mag * cfg.n1_counts)) - conv.cal_preload;
    if (n_chg <= 0) throw ConfigError("madc: calibration preload leaves no charge phase");
    conv.n_charge = n_chg;

    // charge in units of (ampere x clock period)
    double charge = static_cast<double>(n_chg) * i_in;
    const double q_full = cfg.c_int * cfg.v_full * cfg.f_clk;
    const bool exact = cfg.hd2 == 0.0 && !(noise && cfg.noise_charge_rms > 0.0);
    if (!exact) {
        if (cfg.hd2 != 0.0) charge += cfg.hd2 * charge * charge / q_full;
        if (noise && cfg.noise_charge_rms > 0.0) charge += noise->gaussian(cfg.noise_charge_rms * cfg.f_clk);
        charge = std::max(charge, 0.0);
    }
    if (charge > q_full) {
        conv.saturated = true;
        charge = q_full;
    }

    // largest n with n * i_ref <= charge (comparator crossing)
    double n = std::floor(charge / i_ref);
    while ((n + 1.0) * i_ref <= charge) n += 1.0;
    while (n > 0.0 && n * i_ref > charge) n -= 1.0;
    long long n2 = static_cast<long long>(n);
    if (n2 > limit) {
        n2 = limit;
        conv.saturated = true;
    }
    conv.n_discharge = static_cast<int>(n2);

    long long out = conv.mode == MadcMode::Plain ? n2 : conv.target_preload - conv.coeff_sign * n2;
    if (out > limit || out < -limit) {
        out = std::clamp<long long>(out, -limit, limit);
        conv.saturated = true;
    }
    conv.out_count = static_cast<int>(out);
    return conv;
}

int digitize_temperature(const MadcConfig& cfg, const DeviceSet& dev, double t_kelvin, int cal_preload, Rng* noise) {
    MadcConversion c;
    c.coeff_mag = 1.0;
    c.cal_preload = cal_preload;
    c.mode = MadcMode::Plain;
    const double i_in = i_ctat(dev.cs, dev.bjt, t_kelvin, noise);
    const double i_ref = i_ptat(dev.cs, t_kelvin);
    return convert(cfg, c, std::max(i_in, 0.0), i_ref, noise).out_count;
}

double channel_gain(const MadcConfig& cfg, double i_ref) {
    if (!(i_ref > 0.0)) throw DomainError("madc: reference current must be positive");
    return cfg.n1_counts / i_ref;
}

namespace {

std::complex<double> dft_bin(const std::vector<double>& x, int k) {
    const std::size_t n = x.size();
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = (static_cast<std::size_t>(k) * i) % n;
        const double ph = -2.0 * kPi * static_cast<double>(idx) / static_cast<double>(n);
        acc += x[i] * std::complex<double>(std::cos(ph), std::sin(ph));
    }
    return acc;
}

int gcd(int a, int b) {
    while (b) {
        int t = a % b;
        a = b;
        b = t;
    }
    return a;
}

}  // namespace

double snr_from_record(const std::vector<double>& x_in, int signal_bin, int max_harmonic) {
    const int n = static_cast<int>(x_in.size());
    if (n < 8 || signal_bin <= 0 || 2 * signal_bin >= n) throw MeasurementError("snr: bad record or signal bin");
    double mean = 0.0;
    for (double v : x_in) mean += v;
    mean /= n;
    std::vector<double> x(x_in.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = x_in[i] - mean;
        total += x[i] * x[i];
    }
    total /= n;
    const double nn = static_cast<double>(n) * n;
    auto bin_power = [&](int b) {
        const double m = std::norm(dft_bin(x, b));
        return (2 * b == n) ? m / nn : 2.0 * m / nn;
    };
    const double ps = bin_power(signal_bin);
    if (!(ps > 0.0) || !(total > 0.0)) throw MeasurementError("snr: undefined for a zero-amplitude input");
    double harm = 0.0;
    std::vector<int> used{signal_bin};
    for (int h = 2; h <= max_harmonic; ++h) {
        int b = static_cast<int>((static_cast<long long>(h) * signal_bin) % n);
        b = std::min(b, n - b);
        if (b == 0 || std::find(used.begin(), used.end(), b) != used.end()) continue;
        used.push_back(b);
        harm += bin_power(b);
    }
    const double pn = total - ps - harm;
    if (!(pn > 0.0)) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(ps / pn);
}

SnrResult snr_test(const MadcConfig& cfg, const SnrSetup& s) {
    validate(cfg);
    if (!(s.full_scale > 0.0) || s.n_samples < 64) throw ConfigError("snr: bad setup");
    if (!(s.amplitude_fraction >= 0.0 && s.amplitude_fraction <= 1.0)) throw ConfigError("snr: amplitude fraction outside [0, 1]");
    const double fs = cfg.conversion_rate();
    if (fs < 10.0 * s.freq) throw ConfigError("snr: conversion rate below 10x the signal frequency");
    if (s.amplitude_fraction == 0.0) throw MeasurementError("snr: undefined for a zero-amplitude input");

    // coherent sampling: an odd number of periods coprime with the record
    int m = static_cast<int>(std::lround(s.freq * s.n_samples / fs));
    if (m < 1) m = 1;
    while (gcd(m, s.n_samples) != 1) ++m;

    SnrResult r;
    r.sample_rate = fs;
    r.periods = m;
    r.freq_actual = m * fs / s.n_samples;
    const double w = 2.0 * kPi * r.freq_actual;
    const double i0 = 0.5 * s.full_scale;
    const double amp = 0.5 * s.full_scale * s.amplitude_fraction;
    const double t_chg = cfg.n1_counts / cfg.f_clk;
    Rng rng(stream_seed(s.seed, 0x5352ULL));
    std::vector<double> rec(static_cast<std::size_t>(s.n_samples));
    r.counts.resize(rec.size());
    for (int k = 0; k < s.n_samples; ++k) {
        const double t = k / fs;
        // input averaged over the charge window
        const double avg = i0 + amp * (std::cos(w * t) - std::cos(w * (t + t_chg))) / (w * t_chg);
        MadcConversion c;
        c.coeff_mag = 1.0;
        c.mode = MadcMode::Plain;
        c = convert(cfg, c, avg, s.full_scale, &rng);
        r.counts[static_cast<std::size_t>(k)] = c.out_count;
        rec[static_cast<std::size_t>(k)] = c.out_count;
    }
    r.snr_db = snr_from_record(rec, m, s.max_harmonic);
    r.enob = (r.snr_db - 1.76) / 6.02;
    return r;
}

}  // namespace thermocell
