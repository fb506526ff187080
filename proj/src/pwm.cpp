#include "thermocell/pwm.hpp"

#include <algorithm>
#include <cmath>

#include "thermocell/common.hpp"

namespace thermocell {

void validate(const PwmConfig& c) {
    if (c.n_bits < 2 || c.n_bits > 20) throw ConfigError("pwm: n_bits out of range");
    if (c.counter_bits < 1 || c.ring_taps < 1) throw ConfigError("pwm: counter_bits and ring_taps must be positive");
    if ((1LL << c.counter_bits) * c.ring_taps != (1LL << c.n_bits))
        throw ConfigError("pwm: 2^counter_bits x ring_taps must equal 2^n_bits");
    if (!(c.duty_min >= 0.0 && c.duty_min < c.duty_max && c.duty_max <= 1.0))
        throw ConfigError("pwm: need 0 <= duty_min < duty_max <= 1");
    if (!(c.t_lsb > 0.0 && c.clk > 0.0)) throw ConfigError("pwm: t_lsb and clk must be positive");
    if (!(c.tap_mismatch_sigma >= 0.0 && c.tap_mismatch_sigma < 1.0 / 3.0))
        throw ConfigError("pwm: tap_mismatch_sigma must be in [0, 1/3)");
}

std::vector<double> tap_delays(const PwmConfig& c) {
    std::vector<double> d(static_cast<std::size_t>(c.ring_taps), 1.0);
    if (c.tap_mismatch_sigma == 0.0) return d;
    Rng rng(stream_seed(c.mismatch_seed, 0x7077ULL));
    for (auto& x : d) x = std::max(1.0 + rng.gaussian(c.tap_mismatch_sigma), 0.05);
    return d;
}

Pwm::Pwm(const PwmConfig& cfg) : cfg_(cfg) {
    validate(cfg_);
    const auto d = tap_delays(cfg_);
    double ring = 0.0;
    for (double x : d) ring += x;
    cum_.assign(d.size() + 1, 0.0);
    if (cfg_.tap_mismatch_sigma == 0.0) {
        for (std::size_t i = 0; i <= d.size(); ++i) cum_[i] = static_cast<double>(i);
    } else {
        // the counter is clocked by the ring, so delays are relative to it
        double run = 0.0;
        for (std::size_t i = 0; i < d.size(); ++i) {
            cum_[i] = run / ring * cfg_.ring_taps;
            run += d[i];
        }
        cum_[d.size()] = static_cast<double>(cfg_.ring_taps);
    }
}

double Pwm::duty(int code) const {
    if (code < 0 || code >= cfg_.codes()) throw DomainError("pwm: code out of range");
    const int nc = code / cfg_.ring_taps;
    const int nd = code % cfg_.ring_taps;
    const double raw = (nc * cfg_.ring_taps + cum_[static_cast<std::size_t>(nd)]) / cfg_.codes();
    return std::clamp(raw, cfg_.duty_min, cfg_.duty_max);
}

double Pwm::high_time(int code) const {
    const double d = duty(code);
    if (cfg_.tap_mismatch_sigma == 0.0 && d == static_cast<double>(code) / cfg_.codes())
        return code * cfg_.t_lsb;  // whole delay cells
    return d * cfg_.period();
}

double duty_of_code(const PwmConfig& cfg, int code) { return Pwm(cfg).duty(code); }

std::vector<Edge> pulse_train(const PwmConfig& cfg, int code, double horizon) {
    Pwm pwm(cfg);
    const double period = cfg.period();
    if (!(horizon >= period)) throw DomainError("pwm: horizon shorter than one period");
    const double high = pwm.high_time(code);
    const long long n = static_cast<long long>(std::floor(horizon / period + 1e-9));
    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(2 * n));
    for (long long k = 0; k < n; ++k) {
        const double t0 = static_cast<double>(k) * period;
        edges.push_back({t0, true});
        edges.push_back({t0 + high, false});
    }
    return edges;
}

double max_duty_error(const PwmConfig& cfg) {
    Pwm pwm(cfg);
    double worst = 0.0;
    for (int code = 0; code < cfg.codes(); ++code) {
        const double ideal = static_cast<double>(code) / cfg.codes();
        if (ideal < cfg.duty_min || ideal > cfg.duty_max) continue;
        worst = std::max(worst, std::abs(pwm.duty(code) - ideal));
    }
    return worst;
}

}  // namespace thermocell
