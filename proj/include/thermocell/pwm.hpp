#pragma once

#include <cstdint>
#include <vector>

namespace thermocell {

struct PwmConfig {
    int n_bits = 12;
    int counter_bits = 7;
    int ring_taps = 32;
    double clk = 2.5e6;            // counter-equivalent input clock
    double t_lsb = 0.1e-6;         // delay-cell resolution
    double duty_min = 0.04;
    double duty_max = 0.96;
    double tap_mismatch_sigma = 0.0;
    std::uint64_t mismatch_seed = 1;

    int codes() const { return 1 << n_bits; }
    double period() const { return codes() * t_lsb; }
};

void validate(const PwmConfig& cfg);

// Per-instance tap delays in units of the nominal tap delay; all ones when
// the mismatch sigma is zero.
std::vector<double> tap_delays(const PwmConfig& cfg);

class Pwm {
public:
    explicit Pwm(const PwmConfig& cfg);
    double duty(int code) const;
    // high time in seconds before clamping is applied to the duty
    double high_time(int code) const;
    const PwmConfig& config() const { return cfg_; }

private:
    PwmConfig cfg_;
    std::vector<double> cum_;  // cumulative tap delay, normalised to the ring period
};

double duty_of_code(const PwmConfig& cfg, int code);

struct Edge {
    double t;
    bool rising;
};

std::vector<Edge> pulse_train(const PwmConfig& cfg, int code, double horizon);

// Max |duty - code/4096| over codes between the clamps, for one mismatch draw.
double max_duty_error(const PwmConfig& cfg);

}  // namespace thermocell
