#include <gtest/gtest.h>

#include <cmath>

#include "thermocell/madc.hpp"
#include "thermocell/oracles.hpp"

using namespace thermocell;

namespace {

MadcConversion plain(double mag = 1.0, int cal = 0) {
    MadcConversion c;
    c.coeff_mag = mag;
    c.cal_preload = cal;
    c.mode = MadcMode::Plain;
    return c;
}

// floor((round(coeff N1) - cal) i_in / i_ref) on integers
long long closed_form(const MadcConfig& cfg, long long k, int cal, long long iin, long long iref) {
    const long long n = (k * cfg.n1_counts + (1LL << (cfg.coeff_bits - 1))) / (1LL << cfg.coeff_bits) - cal;
    return n * iin / iref;
}

}  // namespace

TEST(Madc, UnityRatioGivesN1) {
    const MadcConfig cfg;
    EXPECT_EQ(convert(cfg, plain(), 100e-9, 100e-9).out_count, 512);
}

TEST(Madc, HalfCoefficientHalvesCount) {
    const MadcConfig cfg;
    EXPECT_NEAR(convert(cfg, plain(0.5), 100e-9, 100e-9).out_count, 256, 1);
}

TEST(Madc, PreloadSubtraction) {
    const MadcConfig cfg;
    MadcConversion c = plain();
    c.mode = MadcMode::Subtract;
    c.target_preload = 512;
    const auto r = convert(cfg, c, 500 * kOracleCurrentUnit, 512 * kOracleCurrentUnit);
    EXPECT_EQ(r.n_discharge, 500);
    EXPECT_EQ(r.out_count, 12);
}

TEST(Madc, RejectsOffGridAndBadInputs) {
    const MadcConfig cfg;
    EXPECT_THROW(convert(cfg, plain(0.3), 1e-9, 1e-9), ConfigError);
    EXPECT_THROW(convert(cfg, plain(1.0), 1e-9, 0.0), DomainError);
    EXPECT_THROW(convert(cfg, plain(1.0), -1e-9, 1e-9), DomainError);
    EXPECT_THROW(convert(cfg, plain(1.0, 600), 1e-9, 1e-9), ConfigError);
    MadcConfig bad;
    bad.frame_counts = 600;
    EXPECT_THROW(validate(bad), ConfigError);
}

TEST(Madc, QuantizeCoeff) {
    EXPECT_EQ(quantize_coeff(0.3), 38.0 / 128.0);
    EXPECT_EQ(quantize_coeff(1.7), 1.0);
    EXPECT_TRUE(on_coeff_grid(quantize_coeff(0.123)));
    EXPECT_FALSE(on_coeff_grid(0.123));
}

TEST(MadcProperty, MatchesClosedFormAndOracle) {
    const MadcConfig cfg;
    Rng rng(2024);
    for (int i = 0; i < 3000; ++i) {
        const MadcOracleCase c = draw_madc_case(cfg, rng);
        MadcConversion req;
        req.coeff_mag = c.coeff_k / 128.0;
        req.cal_preload = c.cal_preload;
        req.target_preload = c.target_preload;
        req.mode = c.subtract ? MadcMode::Subtract : MadcMode::Plain;
        const auto got = convert(cfg, req, c.i_in_units * kOracleCurrentUnit, c.i_ref_units * kOracleCurrentUnit);
        ASSERT_EQ(got.out_count, madc_oracle_count(cfg, c)) << "draw " << i;
        if (c.coeff_k > 0 && !got.saturated) {
            const long long n2 = closed_form(cfg, c.coeff_k, c.cal_preload, c.i_in_units, c.i_ref_units);
            ASSERT_EQ(got.n_discharge, n2) << "draw " << i;
        }
    }
}

TEST(MadcProperty, CalPreloadShift) {
    const MadcConfig cfg;
    Rng rng(77);
    for (int i = 0; i < 2000; ++i) {
        const long long iref = 1000 + rng.uniform_int(0, 100000);
        // keep the count below the counter limit for every preload used
        const long long iin = rng.uniform_int(0, iref * 4 / 5);
        const int cal = static_cast<int>(rng.uniform_int(-60, 60));
        const int k = static_cast<int>(rng.uniform_int(0, 60));
        const double a = iin * kOracleCurrentUnit, b = iref * kOracleCurrentUnit;
        const int c0 = convert(cfg, plain(1.0, cal), a, b).out_count;
        const int c1 = convert(cfg, plain(1.0, cal + k), a, b).out_count;
        const long long lo = k * iin / iref;
        ASSERT_GE(c0 - c1, lo);
        ASSERT_LE(c0 - c1, lo + 1);
    }
}

TEST(MadcProperty, MultiplicationWithinTwoLsb) {
    const MadcConfig cfg;
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        const int m = static_cast<int>(rng.uniform_int(0, 4));
        const int j = static_cast<int>(rng.uniform_int(1, 128 >> m)) << m;  // divisible by 2^m
        const double a = j / 128.0, b = std::ldexp(1.0, -m);
        const double ratio = rng.uniform();
        const int ab = convert(cfg, plain(a * b), ratio * 1e-7, 1e-7).out_count;
        const int a_then_b = convert(cfg, plain(a), ratio * 1e-7, 1e-7).out_count;
        ASSERT_LE(std::abs(ab - a_then_b * b), 2.0) << a << " " << b << " " << ratio;
    }
}

TEST(MadcProperty, SubtractionAddsNoError) {
    const MadcConfig cfg;
    Rng rng(8);
    for (int i = 0; i < 2000; ++i) {
        const double ratio = rng.uniform();
        const double mag = static_cast<double>(rng.uniform_int(1, 128)) / 128.0;
        const int target = static_cast<int>(rng.uniform_int(-100, 400));
        const auto p = convert(cfg, plain(mag), ratio * 1e-7, 1e-7);
        MadcConversion s = plain(mag);
        s.mode = MadcMode::Subtract;
        s.target_preload = target;
        s.coeff_sign = rng.uniform() < 0.5 ? 1 : -1;
        const auto q = convert(cfg, s, ratio * 1e-7, 1e-7);
        if (q.saturated) continue;
        ASSERT_EQ(q.out_count, target - s.coeff_sign * p.out_count);
    }
}

TEST(MadcProperty, LinearWithinOneLsb) {
    const MadcConfig cfg;
    std::vector<double> x, y;
    for (int k = 0; k <= 400; ++k) {
        const double iin = k * 0.25e-9;
        x.push_back(iin);
        y.push_back(convert(cfg, plain(), iin, 100e-9).out_count);
    }
    // least squares line
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_LE(std::abs(y[i] - (slope * x[i] + icpt)), 1.0);
}

TEST(MadcProperty, CountFallsWithTemperature) {
    const MadcConfig cfg;
    const DeviceSet d = nominal_devices();
    int prev = 1 << 20;
    for (double t = 20.0; t <= 90.0; t += 0.5) {
        const int c = digitize_temperature(cfg, d, to_kelvin(t), 0);
        EXPECT_LE(c, prev);
        prev = c;
    }
    EXPECT_GT(digitize_temperature(cfg, d, to_kelvin(20.0), 0), digitize_temperature(cfg, d, to_kelvin(90.0), 0));
}

TEST(MadcProperty, NoStateBetweenConversions) {
    const MadcConfig cfg;
    const auto a = convert(cfg, plain(0.75), 31e-9, 77e-9);
    for (int i = 0; i < 10; ++i) convert(cfg, plain(1.0), 99e-9, 100e-9);
    EXPECT_EQ(convert(cfg, plain(0.75), 31e-9, 77e-9).out_count, a.out_count);
}

TEST(Snr, NoiseFreeAboveFiftySix) {
    const MadcConfig cfg;
    SnrSetup s;
    const auto r = snr_test(cfg, s);
    EXPECT_GE(r.snr_db, 56.0);
    // coherent sampling moves the tone by less than one bin
    EXPECT_LE(std::abs(r.freq_actual - 15.0), r.sample_rate / s.n_samples);
}

TEST(Snr, ZeroAmplitudeIsAnError) {
    SnrSetup s;
    s.amplitude_fraction = 0.0;
    EXPECT_THROW(snr_test(MadcConfig{}, s), MeasurementError);
}

TEST(Snr, FallsWithNoise) {
    SnrSetup s;
    s.n_samples = 4096;
    double prev = 1e9;
    for (double q : {0.0, 2e-14, 5e-14, 2e-13}) {
        MadcConfig cfg;
        cfg.noise_charge_rms = q;
        const double snr = snr_test(cfg, s).snr_db;
        EXPECT_LT(snr, prev) << q;
        prev = snr;
    }
}

TEST(Snr, PureToneRecord) {
    // an exact sine in bin 7 has no noise: infinite SNR
    std::vector<double> x(256);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * kPi * 7.0 * static_cast<double>(i) / 256.0);
    EXPECT_GT(snr_from_record(x, 7, 5), 200.0);
}
