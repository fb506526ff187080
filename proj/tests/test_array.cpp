#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "thermocell/array.hpp"

using namespace thermocell;

namespace {

// counts of the nominal channel, n1 * i_ctat / i_ptat, evaluated offline
constexpr double kContinuous20 = 496.64000000000004;
constexpr double kContinuous50 = 416.6500430200914;
constexpr double kContinuous90 = 329.9297558267003;

ArrayConfig small(int rows, int cols, std::uint64_t seed = 1) {
    ArrayConfig c;
    c.rows = rows;
    c.cols = cols;
    c.seed = seed;
    return c;
}

void calibrate(CellArray& a, double t = 50.0) {
    a.force_temperature(t);
    ASSERT_TRUE(a.calibrate_all(t).empty());
    a.release_force();
    std::fill(a.grid().temp.begin(), a.grid().temp.end(), a.config().t_ambient);
}

double stddev(const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST(DesignMap, NominalContinuousCounts) {
    const ArrayConfig c;
    const DesignMap m(c.madc, c.nominal);
    EXPECT_NEAR(m.continuous(20.0), kContinuous20, 1e-9);
    EXPECT_NEAR(m.continuous(50.0), kContinuous50, 1e-9);
    EXPECT_NEAR(m.continuous(90.0), kContinuous90, 1e-9);
    EXPECT_LT(m.slope(55.0), 0.0);
    for (double t : {21.3, 47.0, 88.8}) EXPECT_NEAR(m.temperature_of(m.continuous(t)), t, 1e-6);
}

TEST(Calibration, NominalCellNeedsNoPreload) {
    ArrayConfig c = small(1, 1);
    c.mismatch_enabled = false;
    CellArray a(c);
    a.force_temperature(50.0);
    EXPECT_EQ(a.calibrate_one_point(0, 50.0), 0);
}

// r1 one percent high: less CTAT current, so the charge phase must grow,
// which on this counter is a negative preload
TEST(Calibration, HighR1RestoresNominalCount) {
    ArrayConfig c = small(1, 1);
    c.mismatch_enabled = false;
    CellArray a(c);
    a.cell(0).devices.cs.r1 *= 1.01;
    a.force_temperature(50.0);
    const int p = a.calibrate_one_point(0, 50.0);
    EXPECT_LT(p, 0);
    EXPECT_LE(std::abs(a.read_count(0) - a.design_map().expected_count(50.0)), 1.0);
}

TEST(Calibration, RequiresForcedTemperature) {
    CellArray a(small(1, 1));
    EXPECT_THROW(a.calibrate_one_point(0, 50.0), ConfigError);
    a.force_temperature(40.0);
    EXPECT_THROW(a.calibrate_one_point(0, 50.0), ConfigError);
}

TEST(Calibration, SpreadAfterOnePoint) {
    CellArray a(small(9, 6, 3));
    calibrate(a);
    a.force_temperature(50.0);
    std::vector<double> r;
    for (int i = 0; i < a.size(); ++i) r.push_back(a.read_temperature(i));
    const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    EXPECT_NEAR(mean, 50.0, 0.3);
    EXPECT_LE(stddev(r), 0.25);
    for (int i = 0; i < a.size(); ++i) {
        EXPECT_GE(a.cell(i).cal_preload, -a.config().madc.preload_limit());
        EXPECT_LT(a.cell(i).cal_preload, a.config().madc.preload_limit());
    }
}

TEST(Characterize, MonotoneAndNominalAccurate) {
    CellArray a(small(2, 3, 5));
    calibrate(a);
    std::vector<double> temps;
    for (double t = 20.0; t <= 90.0; t += 2.5) temps.push_back(t);
    const SweepTable s = characterize_sensor(a, temps);
    for (const auto& row : s.counts)
        for (std::size_t k = 1; k < row.size(); ++k) EXPECT_LT(row[k], row[k - 1]);
    ArrayConfig nc = small(1, 1);
    nc.mismatch_enabled = false;
    CellArray nom(nc);
    const SweepTable n = characterize_sensor(nom, temps);
    for (std::size_t k = 0; k < temps.size(); ++k) EXPECT_LT(std::abs(n.readout[0][k] - temps[k]), 0.5);
}

TEST(FitLine, ExactLine) {
    const LinearFit f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
    EXPECT_NEAR(f.slope, 2.0, 1e-12);
    EXPECT_NEAR(f.intercept, 1.0, 1e-12);
    EXPECT_NEAR(f.max_residual_counts, 0.0, 1e-12);
}

TEST(Scheduling, ThreeConversionsPerCellInOrder) {
    CellArray a(small(2, 2));
    calibrate(a);
    a.set_setpoint(40.0);
    std::vector<MadcTraceRecord> log;
    TickObserver obs;
    obs.on_conversion = [&](const MadcTraceRecord& r) { log.push_back(r); };
    for (int k = 0; k < 50; ++k) a.tick(nullptr, &obs);
    ASSERT_EQ(log.size(), 50u * 4u * 3u);
    for (std::size_t j = 0; j < log.size(); j += 3) {
        const int cell = log[j].cell;
        for (int n = 0; n < 3; ++n) {
            const auto& r = log[j + static_cast<std::size_t>(n)];
            EXPECT_EQ(r.cell, cell);
            EXPECT_EQ(r.cycle, log[j].cycle);
            EXPECT_EQ(r.slot, n);
            EXPECT_EQ(r.conv.coeff_mag, a.cell(cell).coeffs.magnitude(n));
        }
    }
}

TEST(Scheduling, MeasurementSlotsFollowRegulation) {
    CellArray a(small(1, 2));
    std::vector<int> slots;
    a.tick([&](CellState&, int idx, int slot, double) {
        if (idx == 0) slots.push_back(slot);
    });
    ASSERT_EQ(static_cast<int>(slots.size()), a.frames_per_cycle() - 3);
    EXPECT_EQ(slots.front(), 3);
    EXPECT_EQ(a.frames_per_cycle(), 8);
}

// without lateral coupling the array is 54 independent loops
TEST(Regulation, ZeroLateralMatchesSingleCells) {
    ArrayConfig c = small(3, 2, 9);
    c.plant.g_lat = 0.0;
    CellArray arr(c);
    calibrate(arr);
    const std::vector<double> sp = {30, 40, 50, 60, 35, 45};
    arr.set_setpoints(sp);
    std::vector<CellArray> singles;
    for (int i = 0; i < arr.size(); ++i) {
        singles.push_back(CellArray::single(c, i / 2, i % 2));
        calibrate(singles.back());
        singles.back().set_setpoint(sp[static_cast<std::size_t>(i)]);
    }
    for (int k = 0; k < 3000; ++k) {
        arr.tick();
        for (auto& s : singles) s.tick();
    }
    for (int i = 0; i < arr.size(); ++i) {
        const auto& s = singles[static_cast<std::size_t>(i)];
        EXPECT_EQ(arr.true_temperature(i), s.true_temperature(0));
        EXPECT_EQ(arr.cell(i).pid.u_prev, s.cell(0).pid.u_prev);
        EXPECT_EQ(arr.cell(i).cal_preload, s.cell(0).cal_preload);
    }
}

TEST(Regulation, SetpointAtAmbientIdles) {
    ArrayConfig c = small(1, 1);
    CellArray a(c);
    calibrate(a);
    a.set_setpoint(c.t_ambient);
    for (int k = 0; k < 60000; ++k) a.tick();
    EXPECT_EQ(a.cell(0).pwm_code, 0);
    // the PWM floor still heats: duty_min p_max / g_amb above ambient
    const double floor_rise = c.pwm.duty_min * c.nominal.heater.p_max / c.plant.g_amb;
    EXPECT_NEAR(a.true_temperature(0) - c.t_ambient, floor_rise, 0.05);
}

TEST(Regulation, DeterministicForSeed) {
    auto run = [](std::uint64_t seed) {
        CellArray a(small(2, 2, seed));
        calibrate(a);
        a.set_setpoint(45.0);
        std::vector<int> u;
        for (int k = 0; k < 2000; ++k) {
            a.tick();
            u.push_back(a.cell(3).pid.u_prev);
        }
        return std::make_pair(u, a.grid().temp);
    };
    EXPECT_EQ(run(4), run(4));
    EXPECT_NE(run(4).second, run(5).second);
}

TEST(Regulation, PersistentSaturationWarns) {
    ArrayConfig c = small(1, 1);
    c.nominal.heater.p_max *= 0.5;  // ceiling near 25 + 0.96 * 32, far below 90
    CellArray a(c);
    calibrate(a);
    a.set_setpoint(90.0);
    RegulationOptions o;
    o.duration = 40.0;
    o.sample_every = 0.01;
    const auto r = run_regulation(a, {{0.0, {90.0}}}, o);
    ASSERT_EQ(r.warnings.size(), 1u);
    // first sample on the rail, plus the persistence window
    double railed = -1.0;
    for (const auto& s : r.samples)
        if (railed < 0.0 && s.u == kDutyMax) railed = s.t;
    ASSERT_GE(railed, 0.0);
    EXPECT_GE(r.warnings[0].t, railed + 10.0 - 0.02);
}

TEST(Regulation, SamplesCarryTrace) {
    CellArray a(small(1, 2));
    calibrate(a);
    RegulationOptions o;
    o.duration = 1.0;
    o.sample_every = 0.25;
    o.trace_cells = {1};
    const auto r = run_regulation(a, {{0.0, {40.0}}}, o);
    ASSERT_EQ(r.samples.size(), 4u);
    for (const auto& s : r.samples) {
        EXPECT_EQ(s.cell, 1);
        EXPECT_EQ(s.setpoint, 40.0);
    }
    EXPECT_DOUBLE_EQ(r.samples[1].t, 0.25);
}

TEST(Regulation, SetpointValidation) {
    CellArray a(small(1, 2));
    EXPECT_THROW(a.set_setpoint(10.0), ConfigError);
    EXPECT_THROW(a.set_setpoints({30.0, 40.0, 50.0}), ConfigError);
}

TEST(Modes, MeasurementDoesNotPerturbRegulation) {
    auto make = [] {
        CellArray a = CellArray::single(small(9, 6), 4, 2);
        calibrate(a);
        a.set_setpoint(37.0);
        return a;
    };
    CellArray plain = make(), measured = make();
    measured.set_mode(0, CellMode::CPA);
    measured.cell(0).sensor.kind = SensorKind::PhLinear;
    measured.cell(0).sensor.ph = 8.0;
    WaveformSpec w;
    w.kind = WaveformSpec::Kind::Constant;
    std::vector<int> u_plain;
    for (int k = 0; k < 2000; ++k) {
        plain.tick();
        u_plain.push_back(plain.cell(0).pid.u_prev);
    }
    std::vector<int> u_meas;
    for (int k = 0; k < 2000; ++k) {
        run_cpa(measured, 0, w, 1e-3, MeasureRange{});
        u_meas.push_back(measured.cell(0).pid.u_prev);
    }
    EXPECT_EQ(u_plain, u_meas);
    EXPECT_EQ(plain.cell(0).cal_preload, measured.cell(0).cal_preload);
}

TEST(Modes, WrongModeRejected) {
    CellArray a(small(1, 1));
    WaveformSpec w;
    EXPECT_THROW(run_cpa(a, 0, w, 0.01, MeasureRange{}), ConfigError);
    EXPECT_THROW(run_is(a, 0, {10.0}, IsOptions{}), ConfigError);
}

TEST(Waveform, Validation) {
    WaveformSpec w;
    w.kind = WaveformSpec::Kind::Sinusoid;
    w.freq = 20e3;
    w.amplitude = 0.01;
    EXPECT_THROW(validate(w), ConfigError);
    w.freq = 0.05;
    EXPECT_THROW(validate(w), ConfigError);
    w = WaveformSpec{};
    w.kind = WaveformSpec::Kind::RampCyclic;
    w.v_low = 0.1;
    w.v_high = 0.0;
    EXPECT_THROW(validate(w), ConfigError);
}

TEST(Cv, ResistorOhmicAndMirrored) {
    CellArray a = CellArray::single(small(9, 6), 4, 2);
    calibrate(a);
    a.set_setpoint(37.0);
    a.set_mode(0, CellMode::CV);
    a.cell(0).sensor.kind = SensorKind::CvPluggable;
    const double r = 1e7;
    a.cell(0).sensor.cv_response = cv_resistor(r);
    WaveformSpec w;
    w.kind = WaveformSpec::Kind::RampCyclic;
    w.v_low = -0.2;
    w.v_high = 0.2;
    w.scan_rate = 0.1;
    w.v_step = 1e-3;
    MeasureRange range;
    range.i_ref = 200e-9;
    const auto pts = run_cv(a, 0, w, range);
    const double lsb = range.i_ref / a.config().madc.n1_counts;
    ASSERT_EQ(pts.size(), 2u * 401u);
    for (const auto& p : pts) EXPECT_LE(std::abs(p.current - p.v / r), lsb) << p.v;
    // the return sweep visits the same voltages in reverse
    for (std::size_t k = 0; k < 401; ++k) {
        const auto& down = pts[k];
        const auto& up = pts[pts.size() - 1 - k];
        EXPECT_EQ(down.v, up.v);
        EXPECT_EQ(down.current, up.current);
        EXPECT_EQ(down.direction, -1);
        EXPECT_EQ(up.direction, 1);
    }
}

TEST(Fra, WindowHoldsWholePeriods) {
    for (double f : {0.1, 0.37, 1.0, 12.6, 100.0, 1585.0, 1e4}) {
        const FraWindow w = choose_window(f, 1e-3);
        EXPECT_GE(w.cycles, 64);
        EXPECT_GE(w.periods, 1);
        EXPECT_NEAR(w.freq, w.periods / (w.cycles * 1e-3), 1e-9 * w.freq);
        EXPECT_LE(std::abs(w.freq / f - 1.0), 5e-3) << f;
    }
}

TEST(Fra, ResistorIsReal) {
    CellArray a = CellArray::single(small(9, 6), 4, 2);
    calibrate(a);
    a.set_setpoint(37.0);
    a.set_mode(0, CellMode::IS);
    a.cell(0).sensor.kind = SensorKind::ImpedanceNetwork;
    a.cell(0).sensor.network = std::make_shared<Network>(Network::resistor(2e5));
    const auto res = run_is(a, 0, {0.5, 10.0, 300.0, 5000.0}, IsOptions{});
    ASSERT_EQ(res.size(), 4u);
    for (const auto& r : res) {
        EXPECT_NEAR(r.z_real / 2e5, 1.0, 0.02) << r.freq;
        EXPECT_LE(std::abs(r.z_imag), 0.02 * 2e5) << r.freq;
    }
}

TEST(Fra, SeriesRcMatchesAnalytic) {
    CellArray a = CellArray::single(small(9, 6), 4, 2);
    calibrate(a);
    a.set_setpoint(37.0);
    a.set_mode(0, CellMode::IS);
    a.cell(0).sensor.kind = SensorKind::ImpedanceNetwork;
    const Network net = Network::parse("R1e5 + C1e-7");
    a.cell(0).sensor.network = std::make_shared<Network>(net);
    for (const auto& r : run_is(a, 0, {1.0, 15.9, 250.0, 4000.0}, IsOptions{})) {
        const std::complex<double> z(r.z_real, r.z_imag), ref = net.impedance(r.freq);
        EXPECT_LE(std::abs(std::abs(z) / std::abs(ref) - 1.0), 0.02) << r.freq;
        EXPECT_LE(std::abs(std::arg(z / ref)) * 180.0 / kPi, 2.0) << r.freq;
    }
}
